"""Per-vehicle position sequences at slot resolution.

Trajectories come either from a synthetic Manhattan-grid walker or from
timestamped trace files interpolated onto the uniform slot clock. Each
vehicle also exposes the planned look-ahead window it uses when predicting
channel quality along its route.
"""

import sys
import numpy as np
from dataclasses import dataclass, field


class TraceParseError(ValueError):
    """Malformed trace row; carries the 1-based line number."""

    def __init__(self, line_no, message):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass(frozen=True)
class Trajectory:
    """Positions of one vehicle, one per slot, starting at ``start_slot``."""

    vehicle_id: object
    start_slot: int
    positions: np.ndarray  # shape (n_slots, 2)

    def __post_init__(self):
        object.__setattr__(self, "positions",
                           np.asarray(self.positions, dtype=float).reshape(-1, 2))

    @property
    def n_slots(self):
        return len(self.positions)

    @property
    def end_slot(self):
        return self.start_slot + self.n_slots - 1

    def covers(self, t, n_slots=1):
        """True when slots t .. t+n_slots-1 all lie inside the trajectory."""
        return self.start_slot <= t and t + n_slots - 1 <= self.end_slot

    def position_at(self, t):
        if not self.covers(t):
            raise ValueError(f"slot {t} outside trajectory "
                             f"[{self.start_slot}, {self.end_slot}]")
        return self.positions[t - self.start_slot]


@dataclass(frozen=True)
class MobilityConfig:
    """Synthetic-mobility parameters (replaces an external traffic simulator)."""

    bounds: tuple = (0.0, 0.0, 600.0, 600.0)  # xmin, ymin, xmax, ymax
    speed_range: tuple = (8.0, 14.0)  # m/s, uniform per street leg
    n_vehicles: int = 150
    seed: int = 0
    horizon_slots: int = 3200
    tau_s: float = 1.0
    block_m: float = 100.0
    model: str = "waypoint_grid"

    def __post_init__(self):
        if self.speed_range[0] <= 0 or self.speed_range[1] < self.speed_range[0]:
            raise ValueError("speed_range must be positive and ordered")
        if self.n_vehicles < 1 or self.horizon_slots < 1:
            raise ValueError("n_vehicles and horizon_slots must be >= 1")
        if self.tau_s <= 0 or self.block_m <= 0:
            raise ValueError("tau_s and block_m must be > 0")


def planned_window(trajectory: Trajectory, t, d):
    """Positions for slots t..t+d. Truncated (shorter) when the trajectory
    ends before t+d; never padded."""
    if not trajectory.covers(t):
        raise ValueError(f"slot {t} outside trajectory extent")
    lo = t - trajectory.start_slot
    hi = min(t + d, trajectory.end_slot) - trajectory.start_slot
    return trajectory.positions[lo:hi + 1]


def _street_graph(config):
    xmin, ymin, xmax, ymax = config.bounds
    nx = int(np.floor((xmax - xmin) / config.block_m))
    ny = int(np.floor((ymax - ymin) / config.block_m))
    if nx < 1 or ny < 1:
        raise ValueError("bounds too small for a street grid at this block size")
    return nx, ny


def _walk_one(config, nx, ny, rng):
    xmin, ymin = config.bounds[0], config.bounds[1]
    b = config.block_m
    lo, hi = config.speed_range

    def node_pos(n):
        return np.array([xmin + n[0] * b, ymin + n[1] * b])

    def neighbors(n, exclude=None):
        opts = []
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            m = (n[0] + dx, n[1] + dy)
            if 0 <= m[0] <= nx and 0 <= m[1] <= ny and m != exclude:
                opts.append(m)
        return opts if opts else [exclude]

    node = (int(rng.integers(0, nx + 1)), int(rng.integers(0, ny + 1)))
    target = neighbors(node)[int(rng.integers(0, len(neighbors(node))))]
    speed = rng.uniform(lo, hi)
    pos = node_pos(node)
    out = np.empty((config.horizon_slots, 2))
    out[0] = pos
    for k in range(1, config.horizon_slots):
        time_left = config.tau_s
        while time_left > 1e-12:
            tp = node_pos(target)
            gap = np.linalg.norm(tp - pos)
            need = gap / speed
            if need > time_left:
                pos = pos + (tp - pos) / gap * speed * time_left
                time_left = 0.0
            else:
                time_left -= need
                pos = tp
                opts = neighbors(target, exclude=node)
                node, target = target, opts[int(rng.integers(0, len(opts)))]
                speed = rng.uniform(lo, hi)
        out[k] = pos
    return out


def synth_trajectories(config: MobilityConfig):
    """Random walks on a Manhattan street grid, one per vehicle.

    Turns are chosen uniformly at intersections (no U-turns except at dead
    ends) and the speed is redrawn per street leg. Deterministic per seed;
    per-vehicle streams are spawned so results do not depend on order.
    """
    nx, ny = _street_graph(config)
    children = np.random.SeedSequence(config.seed).spawn(config.n_vehicles)
    trajs = []
    for vid, child in enumerate(children):
        rng = np.random.default_rng(child)
        trajs.append(Trajectory(vehicle_id=vid, start_slot=0,
                                positions=_walk_one(config, nx, ny, rng)))
    return trajs


@dataclass
class TraceReport:
    """Summary of what a trace load kept and dropped."""

    n_rows: int = 0
    n_dropped_fixes: int = 0
    excluded_vehicles: list = field(default_factory=list)

    def __str__(self):
        return (f"trace load: {self.n_rows} rows, "
                f"{self.n_dropped_fixes} out-of-bounds fixes dropped, "
                f"{len(self.excluded_vehicles)} vehicles excluded "
                f"({', '.join(str(v) for v in self.excluded_vehicles)})")


def load_traces(path, tau_s, bounds):
    """Trajectories from a CSV trace of (vehicle_id, unix_timestamp_s, x_m, y_m).

    Each vehicle's fixes are linearly interpolated onto the uniform slot
    clock anchored at the earliest kept timestamp. Fixes outside ``bounds``
    are dropped; vehicles left with fewer than two fixes are excluded. The
    report is returned and, when anything was dropped, echoed to stderr.
    """
    xmin, ymin, xmax, ymax = bounds
    report = TraceReport()
    fixes = {}
    with open(path) as f:
        for line_no, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if line_no == 1 and not _is_number(parts[1] if len(parts) > 1 else ""):
                continue  # header row
            if len(parts) != 4:
                raise TraceParseError(line_no, f"expected 4 columns, got {len(parts)}")
            vid = parts[0]
            try:
                t, x, y = float(parts[1]), float(parts[2]), float(parts[3])
            except ValueError as exc:
                raise TraceParseError(line_no, str(exc)) from exc
            report.n_rows += 1
            if not (xmin <= x <= xmax and ymin <= y <= ymax):
                report.n_dropped_fixes += 1
                continue
            fixes.setdefault(vid, []).append((t, x, y))

    kept_times = [t for rows in fixes.values() for t, _, _ in rows]
    t0 = min(kept_times) if kept_times else 0.0
    trajs = []
    for vid in sorted(fixes):
        rows = sorted(fixes[vid])
        times = np.array([r[0] for r in rows])
        keep = np.concatenate([[True], np.diff(times) > 0])  # drop repeated stamps
        times = times[keep]
        if len(times) < 2:
            report.excluded_vehicles.append(vid)
            continue
        xs = np.array([r[1] for r in rows])[keep]
        ys = np.array([r[2] for r in rows])[keep]
        start = int(np.ceil((times[0] - t0) / tau_s - 1e-9))
        end = int(np.floor((times[-1] - t0) / tau_s + 1e-9))
        if end < start + 1:
            report.excluded_vehicles.append(vid)
            continue
        clock = t0 + np.arange(start, end + 1) * tau_s
        pos = np.column_stack([np.interp(clock, times, xs),
                               np.interp(clock, times, ys)])
        trajs.append(Trajectory(vehicle_id=_maybe_int(vid), start_slot=start,
                                positions=pos))
    if report.n_dropped_fixes or report.excluded_vehicles:
        print(str(report), file=sys.stderr)
    return trajs, report


def save_traces(trajectories, path, tau_s):
    """Dump trajectories in the same CSV format load_traces reads."""
    with open(path, "w") as f:
        f.write("vehicle_id,unix_timestamp_s,x_m,y_m\n")
        for traj in trajectories:
            for k, (x, y) in enumerate(traj.positions):
                t = (traj.start_slot + k) * tau_s
                f.write(f"{traj.vehicle_id},{float(t)!r},{float(x)!r},{float(y)!r}\n")


def _is_number(s):
    try:
        float(s)
        return True
    except ValueError:
        return False


def _maybe_int(vid):
    return int(vid) if isinstance(vid, str) and vid.isdigit() else vid
