"""Experiment configuration: flat key-value files with one section per module.

All defaults reproduce the desk-scale least-squares experiment, so an empty
config runs it as-is. A manifest is the same format with every value
resolved; re-running from a manifest reproduces the outputs byte-identically.
"""

import configparser
import io

from .engine import EnvironmentConfig, SimConfig
from .rem import GridSpec, LinkBudget
from .scheduling import POLICIES

AXES = ("policy", "w_tx", "m_t", "rem_samples", "lambda")


class ConfigError(Exception):
    """Invalid configuration; message names the offending field."""


# section -> key -> (type tag, default). Types: int, float, str, bool,
# int_list, float_list, str_list; *_opt allows an empty value meaning None.
SCHEMA = {
    "experiment": {
        "name": ("str", "ls-desk"),
        "seeds": ("int_list", (1, 2, 3)),
        "axis": ("str", "policy"),
        "policies": ("str_list", ("vremfl", "fairness", "fedavg", "round_robin")),
        "sweep_values": ("str_list", ()),
        "rem_sample_counts": ("int_list", (100, 150, 250)),
        "figures": ("bool", True),
    },
    "sim": {
        "rounds": ("int", 30),
        "tau_s": ("float", 1.0),
        "k_max_s": ("float", 100.0),
        "t_cpu_min": ("int", 1),
        "m_max": ("int", 15),
        "model_bits": ("int", 3200),
        "w_tx": ("float", 0.5),
        "w_aoi": ("float", 0.0),
        "proxy_c": ("float", 200.0),
        "rho1": ("float", 0.001),
        "rho2": ("float", 1.0),
        "steps_per_slot": ("int", 1),
        "policy": ("str", "vremfl"),
        "rem_mode": ("str", "ground_truth"),
        "rem_samples_per_sector": ("int", 250),
        "bitrate_rescale": ("float", 2e-5),
        "steps_policy": ("str", "adjusted"),
        "lookahead_slots": ("int_opt", None),
        "wall_clock_horizon_s": ("float_opt", None),
    },
    "rem": {
        "origin_x": ("float", 0.0),
        "origin_y": ("float", 0.0),
        "cell_size_m": ("float", 10.0),
        "grid_width": ("int", 60),
        "grid_height": ("int", 60),
        "inter_site_m": ("float", 600.0),
        "bs_offset_m": ("float", 150.0),
        "interference": ("bool", True),
        "carrier_freq_hz": ("float", 3.5e9),
        "bandwidth_hz": ("float", 3.6e6),
        "tx_power_dbm": ("float", 23.0),
        "noise_figure_db": ("float", 6.0),
        "bs_antenna_height_m": ("float", 25.0),
        "vehicle_antenna_height_m": ("float", 1.5),
        "shadowing_std_db": ("float", 6.0),
        "decorrelation_m": ("float", 25.0),
    },
    "mobility": {
        "n_vehicles": ("int", 150),
        "speed_min": ("float", 8.0),
        "speed_max": ("float", 14.0),
        "block_m": ("float", 100.0),
        "horizon_slots": ("int", 3200),
        "trace_file": ("str_opt", None),
    },
    "fl": {
        "model_dim": ("int", 25),
        "samples_per_vehicle": ("int", 40),
        "sigma_lo": ("float", 1e-2),
        "sigma_hi": ("float", 1.0),
        "lambda": ("float", 1e-4),
    },
}


def _parse_value(tag, raw, where):
    raw = raw.strip()
    if tag.endswith("_opt") and raw == "":
        return None
    base = tag.replace("_opt", "")
    try:
        if base == "int":
            return int(raw)
        if base == "float":
            return float(raw)
        if base == "bool":
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if base == "str":
            return raw
        if base == "int_list":
            return tuple(int(v) for v in raw.split())
        if base == "float_list":
            return tuple(float(v) for v in raw.split())
        if base == "str_list":
            return tuple(raw.split())
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    raise ConfigError(f"{where}: unknown type {tag}")


def _format_value(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return " ".join(_format_value(v) for v in value)
    return str(value)


class ExperimentSpec:
    """Fully resolved configuration for one CLI invocation."""

    def __init__(self, resolved):
        self.resolved = resolved
        self._validate()

    @classmethod
    def defaults(cls):
        return cls({sec: {k: d for k, (_, d) in keys.items()}
                    for sec, keys in SCHEMA.items()})

    @classmethod
    def from_file(cls, path):
        parser = configparser.ConfigParser(interpolation=None)
        try:
            with open(path) as f:
                parser.read_file(f)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except configparser.Error as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from exc
        resolved = {sec: {k: d for k, (_, d) in keys.items()}
                    for sec, keys in SCHEMA.items()}
        for section in parser.sections():
            if section not in SCHEMA:
                raise ConfigError(f"unknown config section [{section}]")
            for key, raw in parser.items(section):
                if key not in SCHEMA[section]:
                    raise ConfigError(f"unknown key [{section}] {key}")
                tag = SCHEMA[section][key][0]
                resolved[section][key] = _parse_value(tag, raw,
                                                      f"[{section}] {key}")
        return cls(resolved)

    def _validate(self):
        exp = self.resolved["experiment"]
        if not exp["seeds"]:
            raise ConfigError("[experiment] seeds: need at least one seed")
        if exp["axis"] not in AXES:
            raise ConfigError(f"[experiment] axis: {exp['axis']!r} not one of "
                              f"{', '.join(AXES)}")
        for p in exp["policies"]:
            if p not in POLICIES:
                raise ConfigError(f"[experiment] policies: unknown policy {p!r}; "
                                  f"valid: {', '.join(POLICIES)}")
        try:
            self.environment_config()
            self.sim_config(seed=exp["seeds"][0])
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    # ------------------------------------------------------------ builders

    def environment_config(self, lam=None):
        r = self.resolved["rem"]
        m = self.resolved["mobility"]
        f = self.resolved["fl"]
        grid = GridSpec((r["origin_x"], r["origin_y"]), r["cell_size_m"],
                        r["grid_width"], r["grid_height"])
        budget = LinkBudget(carrier_freq_hz=r["carrier_freq_hz"],
                            bandwidth_hz=r["bandwidth_hz"],
                            tx_power_dbm=r["tx_power_dbm"],
                            noise_figure_db=r["noise_figure_db"],
                            bs_antenna_height_m=r["bs_antenna_height_m"],
                            vehicle_antenna_height_m=r["vehicle_antenna_height_m"],
                            shadowing_std_db=r["shadowing_std_db"],
                            decorrelation_m=r["decorrelation_m"])
        return EnvironmentConfig(grid=grid, budget=budget,
                                 inter_site_m=r["inter_site_m"],
                                 bs_offset_m=r["bs_offset_m"],
                                 interference=r["interference"],
                                 n_vehicles=m["n_vehicles"],
                                 speed_range=(m["speed_min"], m["speed_max"]),
                                 block_m=m["block_m"],
                                 horizon_slots=m["horizon_slots"],
                                 tau_s=self.resolved["sim"]["tau_s"],
                                 trace_path=m["trace_file"],
                                 model_dim=f["model_dim"],
                                 samples_per_vehicle=f["samples_per_vehicle"],
                                 sigma_lo=f["sigma_lo"], sigma_hi=f["sigma_hi"],
                                 lam=f["lambda"] if lam is None else lam)

    def sim_config(self, seed, **overrides):
        s = dict(self.resolved["sim"])
        s.update(overrides)
        return SimConfig(rounds=s["rounds"], tau_s=s["tau_s"],
                         k_max_s=s["k_max_s"], t_cpu_min=s["t_cpu_min"],
                         m_max=s["m_max"], model_bits=s["model_bits"],
                         w_tx=s["w_tx"], w_aoi=s["w_aoi"],
                         proxy_c=s["proxy_c"], rho1=s["rho1"], rho2=s["rho2"],
                         steps_per_slot=s["steps_per_slot"], seed=seed,
                         policy=s["policy"], rem_mode=s["rem_mode"],
                         rem_samples_per_sector=s["rem_samples_per_sector"],
                         bitrate_rescale=s["bitrate_rescale"],
                         steps_policy=s["steps_policy"],
                         lookahead_slots=s["lookahead_slots"],
                         wall_clock_horizon_s=s["wall_clock_horizon_s"])

    # -------------------------------------------------------------- fields

    @property
    def seeds(self):
        return self.resolved["experiment"]["seeds"]

    @property
    def policies(self):
        return self.resolved["experiment"]["policies"]

    @property
    def axis(self):
        return self.resolved["experiment"]["axis"]

    @property
    def figures(self):
        return self.resolved["experiment"]["figures"]

    @property
    def rem_sample_counts(self):
        return self.resolved["experiment"]["rem_sample_counts"]

    def sweep_values(self, axis):
        """Sweep values for an axis, typed; falls back to standard defaults."""
        raw = self.resolved["experiment"]["sweep_values"]
        if axis == "policy":
            values = tuple(raw) if raw else self.policies
            for p in values:
                if p not in POLICIES:
                    raise ConfigError(f"sweep_values: unknown policy {p!r}; "
                                      f"valid: {', '.join(POLICIES)}")
            return values
        try:
            if axis == "w_tx":
                return tuple(float(v) for v in raw) if raw else (0.0, 0.5, 1.0)
            if axis == "m_t":
                return tuple(int(v) for v in raw) if raw else (5, 10, 15, 20, 25)
            if axis == "rem_samples":
                return tuple(int(v) for v in raw) if raw else (0, 250, 150, 100)
            if axis == "lambda":
                return tuple(float(v) for v in raw) if raw else (1e-3, 1e-4, 1e-5)
        except ValueError as exc:
            raise ConfigError(f"sweep_values for axis {axis}: {exc}") from exc
        raise ConfigError(f"unknown sweep axis {axis!r}; valid: {', '.join(AXES)}")

    def override(self, section, key, value):
        if key not in SCHEMA[section]:
            raise ConfigError(f"unknown key [{section}] {key}")
        self.resolved[section][key] = value
        self._validate()

    # ------------------------------------------------------------ manifest

    def manifest_text(self):
        """Every resolved value in config format; loadable by from_file."""
        out = io.StringIO()
        for section in SCHEMA:
            out.write(f"[{section}]\n")
            for key in SCHEMA[section]:
                out.write(f"{key} = {_format_value(self.resolved[section][key])}\n")
            out.write("\n")
        return out.getvalue()

    def write_manifest(self, path):
        with open(path, "w") as f:
            f.write(self.manifest_text())
