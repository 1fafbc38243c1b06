"""Command-line experiment runner.

Subcommands: generate-rem (radio map rasters), run (single experiment per
seed), compare (policy comparison), sweep (generic parameter sweep). Every
command writes a manifest of the fully resolved configuration; re-running
with that manifest as the config reproduces the outputs byte-identically.
Exit codes: 0 ok, 2 configuration error, 3 runtime error.
"""

import argparse
import os
import sys

from .config import AXES, ConfigError, ExperimentSpec
from .engine import Environment, run_experiment
from .scheduling import POLICIES
from . import reports


def build_parser():
    parser = argparse.ArgumentParser(
        prog="vremfl",
        description="Vehicular federated learning scheduling experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", metavar="PATH",
                       help="config file (defaults reproduce the desk-scale "
                            "least-squares experiment)")
        p.add_argument("--seed", metavar="N", type=int, action="append",
                       help="experiment seed, repeatable")
        p.add_argument("--out", metavar="DIR", default="out",
                       help="output directory (default: %(default)s)")
        p.add_argument("--no-figures", action="store_true",
                       help="skip figure rendering")

    p = sub.add_parser("generate-rem",
                       help="write ground-truth and estimated REM rasters")
    common(p)

    p = sub.add_parser("run", help="run one experiment per seed")
    common(p)
    p.add_argument("--policy", metavar="NAME",
                   help=f"scheduling policy ({', '.join(POLICIES)})")

    p = sub.add_parser("compare", help="compare scheduling policies")
    common(p)
    p.add_argument("--policy", metavar="NAME", action="append",
                   dest="policies", help="policy to include, repeatable")

    p = sub.add_parser("sweep", help="sweep one configuration axis")
    common(p)
    p.add_argument("--axis", metavar="NAME",
                   help=f"sweep axis ({', '.join(AXES)})")
    return parser


def load_spec(args):
    spec = (ExperimentSpec.from_file(args.config) if args.config
            else ExperimentSpec.defaults())
    if args.seed:
        spec.override("experiment", "seeds", tuple(args.seed))
    if getattr(args, "policy", None) and args.command == "run":
        if args.policy not in POLICIES:
            raise ConfigError(f"unknown policy {args.policy!r}; "
                              f"valid: {', '.join(POLICIES)}")
        spec.override("sim", "policy", args.policy)
    if getattr(args, "policies", None):
        spec.override("experiment", "policies", tuple(args.policies))
    if getattr(args, "axis", None):
        spec.override("experiment", "axis", args.axis)
    if args.no_figures:
        spec.override("experiment", "figures", False)
    return spec


def ensure_out(path):
    try:
        os.makedirs(path, exist_ok=True)
        probe = os.path.join(path, ".write-probe")
        with open(probe, "w"):
            pass
        os.remove(probe)
    except OSError as exc:
        raise RuntimeError(f"output directory {path!r} is not writable: {exc}")


def variant_sim(spec, axis, value, seed):
    """SimConfig for one sweep point."""
    if axis == "policy":
        return spec.sim_config(seed, policy=value)
    if axis == "w_tx":
        return spec.sim_config(seed, w_tx=value)
    if axis == "m_t":
        return spec.sim_config(seed, m_max=value)
    if axis == "rem_samples":
        if value == 0:
            return spec.sim_config(seed, rem_mode="ground_truth")
        return spec.sim_config(seed, rem_mode="estimated",
                               rem_samples_per_sector=value)
    if axis == "lambda":
        return spec.sim_config(seed)
    raise ConfigError(f"unknown sweep axis {axis!r}")


def run_sweep(spec, axis, values, out_dir, stem):
    """Shared engine behind compare and sweep."""
    results = {}
    for seed in spec.seeds:
        env = Environment(spec.environment_config(), seed)
        for value in values:
            cfg = variant_sim(spec, axis, value, seed)
            use_env = env.with_lambda(value) if axis == "lambda" else env
            results[(value, seed)] = run_experiment(use_env, cfg)
    reports.write_combined_csv(results, os.path.join(out_dir, f"{stem}.csv"),
                               axis_name=axis)
    reports.write_combined_summary(
        results, os.path.join(out_dir, f"{stem}_summary.txt"), axis_name=axis)
    if spec.figures:
        first_seed = spec.seeds[0]
        series = {value: reports.convergence_series(results[(value, first_seed)])
                  for value in values}
        reports.fig_convergence(series, os.path.join(out_dir, "convergence.png"),
                                title=f"{axis} sweep, seed {first_seed}")
        totals = {value: (sum(results[(value, s)].total_tx_slots
                              for s in spec.seeds),
                          sum(results[(value, s)].total_gd_steps
                              for s in spec.seeds))
                  for value in values}
        reports.fig_resources(totals, os.path.join(out_dir, "resources.png"),
                              title=f"{axis} sweep")
    return results


def cmd_generate_rem(spec, out_dir):
    for seed in spec.seeds:
        env = Environment(spec.environment_config(), seed)
        env.truth.save(os.path.join(out_dir, f"rem_seed{seed}_truth.txt"))
        for count in spec.rem_sample_counts:
            est = env.estimated_rem(count)
            est.save(os.path.join(out_dir, f"rem_seed{seed}_est{count}.txt"))
        env.table.save(os.path.join(out_dir, "bitrate_table.txt"))
    spec.write_manifest(os.path.join(out_dir, "manifest.ini"))


def cmd_run(spec, out_dir):
    for seed in spec.seeds:
        env = Environment(spec.environment_config(), seed)
        metrics = run_experiment(env, spec.sim_config(seed))
        reports.write_metrics_csv(
            metrics, os.path.join(out_dir, f"metrics_seed{seed}.csv"))
        reports.write_bid_log(
            metrics.bid_log, os.path.join(out_dir, f"bids_seed{seed}.csv"))
        reports.write_summary(
            metrics, os.path.join(out_dir, f"summary_seed{seed}.txt"),
            header=f"policy {spec.resolved['sim']['policy']} seed {seed}")
        if spec.figures:
            reports.fig_convergence(
                {spec.resolved["sim"]["policy"]:
                 reports.convergence_series(metrics)},
                os.path.join(out_dir, f"convergence_seed{seed}.png"))
    spec.write_manifest(os.path.join(out_dir, "manifest.ini"))


def cmd_compare(spec, out_dir):
    if len(spec.policies) < 2:
        raise ConfigError("compare needs at least two policies")
    run_sweep(spec, "policy", spec.policies, out_dir, "compare")
    spec.write_manifest(os.path.join(out_dir, "manifest.ini"))


def cmd_sweep(spec, out_dir):
    values = spec.sweep_values(spec.axis)
    if len(values) < 1:
        raise ConfigError("sweep needs at least one value")
    run_sweep(spec, spec.axis, values, out_dir, "sweep")
    spec.write_manifest(os.path.join(out_dir, "manifest.ini"))


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        spec = load_spec(args)
        ensure_out(args.out)
        if args.command == "generate-rem":
            cmd_generate_rem(spec, args.out)
        elif args.command == "run":
            cmd_run(spec, args.out)
        elif args.command == "compare":
            cmd_compare(spec, args.out)
        elif args.command == "sweep":
            cmd_sweep(spec, args.out)
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
