"""Slotted simulation engine.

Builds the experiment environment (radio maps, trajectories, per-vehicle
regression tasks) and executes learning rounds: centralized step target,
per-vehicle bids against the planning map, scheduling, then execution in
which bits accrue at the ground-truth bitrate along the actual trajectory
until the payload is delivered or the round deadline passes.
"""

import math
import numpy as np
from dataclasses import dataclass, field, replace

from . import fl, mobility, rem, scheduling


@dataclass(frozen=True)
class EnvironmentConfig:
    """Static scenario: radio map, street grid, fleet and learning task."""

    grid: rem.GridSpec = rem.GridSpec((0.0, 0.0), 10.0, 60, 60)
    budget: rem.LinkBudget = rem.LinkBudget()
    inter_site_m: float = 600.0
    bs_offset_m: float = 150.0
    interference: bool = True
    n_vehicles: int = 150
    speed_range: tuple = (8.0, 14.0)
    block_m: float = 100.0
    horizon_slots: int = 3200
    tau_s: float = 1.0  # slot length; must match the simulation's
    trace_path: str = None  # replaces synthetic mobility when set
    model_dim: int = 25
    samples_per_vehicle: int = 40
    sigma_lo: float = 1e-2
    sigma_hi: float = 1.0
    lam: float = 1e-4

    @property
    def bounds(self):
        ox, oy = self.grid.origin
        w, h = self.grid.extent_m
        return (ox, oy, ox + w, oy + h)


@dataclass(frozen=True)
class SimConfig:
    """Per-experiment knobs (round structure, weights, policy, seeds)."""

    rounds: int = 30
    tau_s: float = 1.0
    k_max_s: float = 100.0
    t_cpu_min: int = 1
    m_max: int = 15
    model_bits: int = 3200
    w_tx: float = 0.5
    w_aoi: float = 0.0
    proxy_c: float = 200.0
    rho1: float = 0.001
    rho2: float = 1.0
    steps_per_slot: int = 1
    seed: int = 0
    policy: str = "vremfl"
    rem_mode: str = "ground_truth"  # or "estimated"
    rem_samples_per_sector: int = 250
    bitrate_rescale: float = 2e-5
    steps_policy: str = "adjusted"  # adjusted | max | min
    lookahead_slots: int = None  # defaults to one full round
    wall_clock_horizon_s: float = None

    def __post_init__(self):
        if self.rounds < 0 or self.m_max < 1 or self.t_cpu_min < 1:
            raise ValueError("rounds must be >= 0, m_max and t_cpu_min >= 1")
        if self.tau_s <= 0 or self.k_max_s < self.tau_s * self.t_cpu_min:
            raise ValueError("deadline must allow the minimum computation")
        if self.model_bits <= 0 or self.bitrate_rescale <= 0:
            raise ValueError("model_bits and bitrate_rescale must be > 0")
        if self.policy not in scheduling.POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}; "
                             f"valid: {', '.join(scheduling.POLICIES)}")
        if self.steps_policy not in ("adjusted", "max", "min"):
            raise ValueError("steps_policy must be adjusted, max or min")
        if self.rem_mode not in ("ground_truth", "estimated"):
            raise ValueError("rem_mode must be ground_truth or estimated")
        scheduling.SchedulerWeights(self.w_tx, self.w_aoi)  # range checks
        fl.ProxyConstants(self.proxy_c, self.rho1, self.rho2)

    @property
    def n_slots(self):
        return int(math.floor(self.k_max_s / self.tau_s))


class Environment:
    """Everything a run needs that is fixed across rounds and policies."""

    def __init__(self, config: EnvironmentConfig, seed):
        self.config = config
        self.seed = seed
        s_rem, s_meas, s_data, s_mob = (
            int(x) for x in np.random.SeedSequence(seed).generate_state(4))
        self.layout = rem.BsLayout.lattice(config.grid.origin,
                                           config.grid.extent_m,
                                           config.inter_site_m,
                                           config.bs_offset_m)
        self.truth = rem.ground_truth_rem(self.layout, config.budget,
                                          config.grid, seed=s_rem,
                                          interference=config.interference)
        self.prior = rem.path_loss_prior_rem(self.layout, config.budget,
                                             config.grid,
                                             interference=config.interference)
        self.table = rem.BitrateTable.truncated_shannon()
        if config.trace_path:
            self.trajectories, _ = mobility.load_traces(
                config.trace_path, tau_s=config.tau_s, bounds=config.bounds)
        else:
            self.trajectories = mobility.synth_trajectories(mobility.MobilityConfig(
                bounds=config.bounds, speed_range=config.speed_range,
                n_vehicles=config.n_vehicles, seed=s_mob,
                horizon_slots=config.horizon_slots, tau_s=config.tau_s,
                block_m=config.block_m))
        n_vehicles = len(self.trajectories)
        spectrum = np.logspace(np.log10(config.sigma_lo),
                               np.log10(config.sigma_hi), config.model_dim)
        self.datasets, self.theta_gen = fl.gen_synthetic(
            config.model_dim, config.samples_per_vehicle * n_vehicles,
            spectrum, n_vehicles, seed=s_data)
        self.theta_ref = fl.closed_form_optimum(self.datasets, config.lam)
        self._meas_seed = s_meas
        self._estimates = {}

    def with_lambda(self, lam):
        """Same environment under a different regularization weight.

        The maps, trajectories and data are shared; only the reference
        optimum and the per-vehicle tasks (built from config.lam) change.
        """
        import copy
        clone = copy.copy(self)
        clone.config = replace(self.config, lam=lam)
        clone.theta_ref = fl.closed_form_optimum(self.datasets, lam)
        return clone

    def estimated_rem(self, n_per_sector):
        """GPR estimate from n measurements per BS sector (cached)."""
        if n_per_sector not in self._estimates:
            if n_per_sector == 0:
                est = rem.estimate_rem_gpr(self.prior, [],
                                           self.config.budget.shadowing_std_db,
                                           self.config.budget.decorrelation_m)
            else:
                meas = rem.sample_measurements(self.truth, self.layout,
                                               n_per_sector, seed=self._meas_seed)
                est = rem.estimate_rem_gpr(self.prior, meas,
                                           self.config.budget.shadowing_std_db,
                                           self.config.budget.decorrelation_m)
            self._estimates[n_per_sector] = est
        return self._estimates[n_per_sector]


@dataclass
class VehicleRound:
    """What one scheduled vehicle planned and actually did in a round."""

    vehicle_id: int
    cost: float
    steps: int
    t_cpu: int
    planned_tx_start: int
    planned_t_tx: int
    feasible: bool
    delivered: bool = False
    actual_latency_s: float = 0.0
    actual_tx_slots: int = 0


@dataclass
class RoundRecord:
    """Outcome of one learning round."""

    round_t: int
    wall_start_s: float
    wall_end_s: float
    scheduled: list
    entries: list  # VehicleRound per scheduled vehicle
    theta: np.ndarray
    dist_sq: float
    m_max: int = 1

    @property
    def n_scheduled(self):
        return len(self.scheduled)

    @property
    def n_delivered(self):
        return sum(1 for e in self.entries if e.delivered)

    @property
    def tx_slots(self):
        return sum(e.actual_tx_slots for e in self.entries)

    @property
    def gd_steps(self):
        return sum(e.steps for e in self.entries)

    @property
    def duration_s(self):
        return self.wall_end_s - self.wall_start_s


@dataclass
class ExperimentMetrics:
    """Round series plus experiment-level aggregates."""

    records: list
    dist_sq_initial: float
    theta_final: np.ndarray
    bid_log: list = field(default_factory=list)

    @property
    def total_time_s(self):
        return self.records[-1].wall_end_s if self.records else 0.0

    @property
    def total_tx_slots(self):
        return sum(r.tx_slots for r in self.records)

    @property
    def total_gd_steps(self):
        return sum(r.gd_steps for r in self.records)

    @property
    def dist_sq_final(self):
        return self.records[-1].dist_sq if self.records else self.dist_sq_initial

    @property
    def tx_rate(self):
        return compute_tx_rate(self.records)


def compute_tx_rate(records):
    """Mean over non-empty rounds of delivered count / scheduling capacity."""
    fractions = [r.n_delivered / r.m_max for r in records if r.n_scheduled > 0]
    if not fractions:
        raise ValueError("tx rate undefined: every round had an empty schedule")
    return float(np.mean(fractions))


class Simulation:
    """One experiment: a policy driving rounds over a fixed environment."""

    def __init__(self, env: Environment, cfg: SimConfig):
        self.env = env
        self.cfg = cfg
        if cfg.policy != "vremfl" and cfg.steps_policy != "adjusted":
            raise ValueError("step-policy ablations apply to the vremfl policy only")
        env_tau = getattr(env.config, "tau_s", cfg.tau_s)
        if env_tau != cfg.tau_s:
            raise ValueError(f"slot length mismatch: environment uses "
                             f"tau={env_tau}, simulation uses tau={cfg.tau_s}")
        self.planning_rem = (env.truth if cfg.rem_mode == "ground_truth"
                             else env.estimated_rem(cfg.rem_samples_per_sector))
        self.weights = scheduling.SchedulerWeights(cfg.w_tx, cfg.w_aoi)
        self.tasks = {ds.vehicle_id: fl.LsTask(ds, env.config.lam)
                      for ds in env.datasets}
        self.trajectories = {t.vehicle_id: t for t in env.trajectories}
        self.ids = sorted(self.trajectories)
        self.theta = np.zeros(env.config.model_dim)
        self.round_t = 0
        self.wall_clock_s = 0.0
        self.priority_state = scheduling.PriorityState(self.ids)
        self.rr_state = scheduling.RoundRobinState(self.ids)
        policy_seed = int(np.random.SeedSequence(cfg.seed).generate_state(5)[4])
        self.policy_rng = np.random.default_rng(policy_seed)
        self.bid_log = []

    # ------------------------------------------------------------- helpers

    def _start_slot(self):
        return int(round(self.wall_clock_s / self.cfg.tau_s))

    def _active_ids(self, start_slot):
        n = self.cfg.n_slots
        return [vid for vid in self.ids
                if self.trajectories[vid].covers(start_slot, n)]

    def _forecast(self, vid, start_slot, grid):
        d = self.cfg.lookahead_slots
        if d is None:
            d = self.cfg.n_slots
        window = mobility.planned_window(self.trajectories[vid], start_slot, d)
        rates = rem.bitrate_along(grid, window, self.env.config.budget.bandwidth_hz,
                                  self.env.table)
        return rates * self.cfg.bitrate_rescale

    def _true_rates(self, vid, start_slot, first, last):
        """Ground-truth bitrates for round slots first..last (1-based)."""
        traj = self.trajectories[vid]
        lo = start_slot + first - 1 - traj.start_slot
        hi = start_slot + last - traj.start_slot
        rates = rem.bitrate_along(self.env.truth, traj.positions[lo:hi],
                                  self.env.config.budget.bandwidth_hz,
                                  self.env.table)
        return rates * self.cfg.bitrate_rescale

    def _vremfl_bids(self, active, start_slot, plan):
        bids = {}
        for vid in active:
            task = self.tasks[vid]
            forecast = self._forecast(vid, start_slot, self.planning_rem)
            if self.cfg.steps_policy == "min":
                t_cpu = self.cfg.t_cpu_min
                alloc = scheduling.optimize_transmission(
                    t_cpu, forecast, self.cfg.model_bits, self.cfg.k_max_s,
                    self.cfg.tau_s, self.weights.w_tx)
                if alloc is None:
                    bid = scheduling.ParticipationBid(
                        vid, math.inf, steps=self.cfg.steps_per_slot * t_cpu)
                else:
                    bid = scheduling.ParticipationBid(
                        vid, scheduling.allocation_cost(alloc, self.weights.w_tx),
                        alloc, steps=self.cfg.steps_per_slot * t_cpu)
            else:
                grad_norm = float(np.linalg.norm(task.gradient(self.theta)))
                bid = scheduling.customize_local(
                    vid, grad_norm, task.kappa, plan, self.weights,
                    self.cfg.rho1, self.cfg.rho2, self.cfg.steps_per_slot,
                    forecast, self.cfg.model_bits)
                if self.cfg.steps_policy == "max" and bid.feasible:
                    filled = self.cfg.steps_per_slot * (bid.allocation.tx_start - 1)
                    bid = replace(bid, steps=max(bid.steps, filled))
            bids[vid] = bid
        return bids

    def _benchmark_plan(self, plan):
        """Benchmarks run the broadcast target and transmit greedily."""
        steps = max(math.ceil(plan.h_star),
                    self.cfg.steps_per_slot * self.cfg.t_cpu_min)
        t_cpu = math.ceil(steps / self.cfg.steps_per_slot)
        return steps, t_cpu

    # --------------------------------------------------------------- round

    def run_round(self):
        cfg = self.cfg
        start_slot = self._start_slot()
        t = self.round_t
        h_star = scheduling.central_optimize(cfg.m_max, cfg.proxy_c)
        plan = scheduling.RoundPlan(t, h_star, cfg.k_max_s, cfg.m_max,
                                    cfg.t_cpu_min, cfg.tau_s)
        active = self._active_ids(start_slot)

        bids = {}
        if cfg.policy == "vremfl":
            bids = self._vremfl_bids(active, start_slot, plan)
            priorities = {
                vid: scheduling.priority(
                    bid.cost, self.priority_state.fairness_of(vid, t), cfg.w_aoi)
                for vid, bid in bids.items()}
            scheduled = scheduling.schedule(priorities, cfg.m_max)
            for vid in active:
                b = bids[vid]
                self.bid_log.append((t, vid, b.cost, b.steps,
                                     b.allocation.t_cpu if b.feasible else 0,
                                     b.allocation.tx_start if b.feasible else 0,
                                     b.allocation.t_tx if b.feasible else 0,
                                     b.feasible))
        else:
            snapshot = None
            if cfg.policy == "centr_snr":
                snapshot = {vid: float(self._forecast(vid, start_slot,
                                                      self.planning_rem)[0])
                            for vid in active}
            scheduled = scheduling.benchmark_schedule(
                cfg.policy, cfg.m_max, active, round_t=t, rr_state=self.rr_state,
                rng=self.policy_rng, priority_state=self.priority_state,
                bitrate_snapshot=snapshot)

        entries = []
        delivered_models = []
        for vid in scheduled:
            if cfg.policy == "vremfl":
                bid = bids[vid]
                steps, t_cpu = bid.steps, bid.allocation.t_cpu
                tx_start, planned_t_tx = bid.allocation.tx_start, bid.allocation.t_tx
                cost = bid.cost
            else:
                steps, t_cpu = self._benchmark_plan(plan)
                tx_start, planned_t_tx = t_cpu + 1, 0
                cost = math.nan
            entry = VehicleRound(vehicle_id=vid, cost=cost, steps=steps,
                                 t_cpu=t_cpu, planned_tx_start=tx_start,
                                 planned_t_tx=planned_t_tx, feasible=True)
            theta_v = fl.local_gd(self.theta, steps, self.tasks[vid])
            bits_per_slot = self._true_rates(vid, start_slot, tx_start,
                                             cfg.n_slots) * cfg.tau_s
            cum = np.cumsum(bits_per_slot)
            idx = int(np.searchsorted(cum, cfg.model_bits, side="left"))
            if idx < len(cum):
                entry.delivered = True
                entry.actual_tx_slots = idx + 1
                entry.actual_latency_s = (tx_start - 1 + idx + 1) * cfg.tau_s
                delivered_models.append(
                    (theta_v, self.tasks[vid].dataset.n_samples))
            else:
                entry.actual_tx_slots = len(cum)
                entry.actual_latency_s = cfg.n_slots * cfg.tau_s
            entries.append(entry)

        delivered_ids = [e.vehicle_id for e in entries if e.delivered]
        if delivered_models:
            self.theta = fl.aggregate(delivered_models)
        if not scheduled:
            duration = cfg.tau_s * cfg.t_cpu_min
        elif len(delivered_ids) < len(scheduled):
            duration = cfg.k_max_s
        else:
            duration = max(e.actual_latency_s for e in entries)

        self.priority_state.record_round(delivered_ids)
        record = RoundRecord(round_t=t, wall_start_s=self.wall_clock_s,
                             wall_end_s=self.wall_clock_s + duration,
                             scheduled=scheduled, entries=entries,
                             theta=self.theta.copy(),
                             dist_sq=float(np.sum((self.theta - self.env.theta_ref) ** 2)),
                             m_max=cfg.m_max)
        self.wall_clock_s += duration
        self.round_t += 1
        return record

    def run(self):
        records = []
        dist0 = float(np.sum(self.env.theta_ref ** 2))
        while self.round_t < self.cfg.rounds:
            if (self.cfg.wall_clock_horizon_s is not None
                    and self.wall_clock_s >= self.cfg.wall_clock_horizon_s):
                break
            records.append(self.run_round())
        return ExperimentMetrics(records=records, dist_sq_initial=dist0,
                                 theta_final=self.theta.copy(),
                                 bid_log=list(self.bid_log))


def run_experiment(env: Environment, cfg: SimConfig):
    """Run one full experiment over a prebuilt environment."""
    return Simulation(env, cfg).run()
