"""Client scheduling: centralized step optimization, per-vehicle customization,
priority-based selection, and the benchmark policies.

Round workflow: the server picks a target step count from the global
convergence proxy; every vehicle refines it locally and plans a transmission
window against its predicted bitrates, bidding a weighted latency/occupancy
cost (infinite when no feasible window exists); the server then schedules the
highest-priority bidders, blending inverse cost with a fairness term.
"""

import math
import numpy as np
from dataclasses import dataclass

from .fl import global_proxy, local_proxy

POLICIES = ("vremfl", "round_robin", "fedavg", "fairness", "centr_snr")


@dataclass(frozen=True)
class SchedulerWeights:
    """w_tx trades latency for channel occupancy; w_aoi weighs fairness."""

    w_tx: float = 0.5
    w_aoi: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.w_tx <= 1.0:
            raise ValueError("w_tx must be in [0, 1]")
        if self.w_aoi < 0:
            raise ValueError("w_aoi must be >= 0")


@dataclass(frozen=True)
class RoundPlan:
    """Server-side parameters broadcast for one learning round."""

    round_t: int
    h_star: float
    k_max_s: float
    m_max: int
    t_cpu_min: int = 1
    tau_s: float = 1.0

    def __post_init__(self):
        if self.h_star < 1:
            raise ValueError("target step count must be >= 1")
        if self.m_max < 1 or self.t_cpu_min < 1:
            raise ValueError("m_max and t_cpu_min must be >= 1")
        if self.k_max_s < self.tau_s * self.t_cpu_min:
            raise ValueError("round deadline shorter than minimum computation")

    @property
    def n_slots(self):
        return int(math.floor(self.k_max_s / self.tau_s))


@dataclass(frozen=True)
class SlotAllocation:
    """Computation-idle-transmission pattern of one vehicle in one round.

    Computation occupies slots 1..t_cpu, transmission the contiguous block
    tx_start..tx_start+t_tx-1; latency is the end of the last tx slot.
    """

    t_cpu: int
    tx_start: int
    t_tx: int
    tau_s: float = 1.0

    def __post_init__(self):
        if self.t_cpu < 0 or self.t_tx < 1 or self.tx_start <= self.t_cpu:
            raise ValueError("need tx_start > t_cpu and t_tx >= 1")

    @property
    def idle_len(self):
        return self.tx_start - 1 - self.t_cpu

    @property
    def latency_s(self):
        return (self.tx_start - 1 + self.t_tx) * self.tau_s


@dataclass(frozen=True)
class ParticipationBid:
    """A vehicle's estimated cost to join a round, with its planned slots."""

    vehicle_id: object
    cost: float
    allocation: SlotAllocation = None
    steps: int = 0

    def __post_init__(self):
        if math.isfinite(self.cost) != (self.allocation is not None):
            raise ValueError("finite cost requires an allocation and vice versa")

    @property
    def feasible(self):
        return self.allocation is not None


def central_optimize(m, c):
    """Unconstrained minimizer of the global proxy: sqrt(C / (1 + 1/M)).

    Returned as a positive real; callers quantize where slot granularity
    forces it.
    """
    if m < 1 or c <= 0:
        raise ValueError("need m >= 1 and c > 0")
    return math.sqrt(c / (1.0 + 1.0 / m))


def refine_local_steps(grad_norm, kappa, h_star, rho1, rho2, s_v, t_cpu_min,
                       h_max):
    """Integer minimizer of the local refinement cost by linear search.

    Objective: Theta(H) + rho1*H/grad_norm + rho2*(H - h_star)^2 over
    H in [s_v*t_cpu_min, h_max], where Theta is the local gradient-norm
    bound. Ties break toward smaller H; a zero gradient short-circuits to the
    minimum computation.
    """
    h_min = int(s_v) * int(t_cpu_min)
    if grad_norm <= 0:
        return h_min
    if h_max < h_min:
        raise ValueError("h_max below the minimum computation constraint")
    h = np.arange(h_min, int(h_max) + 1)
    cost = (local_proxy(grad_norm, kappa, h)
            + rho1 * h / grad_norm
            + rho2 * (h - h_star) ** 2)
    return int(h[np.argmin(cost)])  # argmin returns the first (smallest H) tie


def optimize_transmission(t_cpu, forecast_bps, model_bits, k_max_s, tau_s, w_tx):
    """Best contiguous transmission window after ``t_cpu`` computation slots.

    Among all windows that deliver ``model_bits`` within the deadline at the
    forecast bitrates, minimizes (1-w_tx)*latency + w_tx*slots_used, using the
    minimal window length for each candidate start. Ties break toward fewer
    transmission slots, then earlier start. Returns None when infeasible.
    """
    n_slots = int(math.floor(k_max_s / tau_s))
    bits = np.asarray(forecast_bps, dtype=float)[:n_slots] * tau_s
    if len(bits) < n_slots or t_cpu >= n_slots:
        return None
    cum = np.concatenate([[0.0], np.cumsum(bits)])
    starts = np.arange(t_cpu + 1, n_slots + 1)
    ends = np.searchsorted(cum, cum[starts - 1] + model_bits, side="left")
    ends = np.maximum(ends, starts)  # at least one slot even for tiny payloads
    ok = ends <= n_slots
    if not np.any(ok):
        return None
    starts, ends = starts[ok], ends[ok]
    t_tx = ends - starts + 1
    cost = (1.0 - w_tx) * ends * tau_s + w_tx * t_tx
    best = np.lexsort((starts, t_tx, cost))[0]
    return SlotAllocation(t_cpu=int(t_cpu), tx_start=int(starts[best]),
                          t_tx=int(t_tx[best]), tau_s=tau_s)


def allocation_cost(alloc: SlotAllocation, w_tx):
    """Participation cost (1-w_tx)*latency + w_tx*transmission_slots."""
    return (1.0 - w_tx) * alloc.latency_s + w_tx * alloc.t_tx


def customize_local(vehicle_id, grad_norm, kappa, plan: RoundPlan,
                    weights: SchedulerWeights, rho1, rho2, s_v,
                    forecast_bps, model_bits):
    """Per-vehicle computation refinement plus transmission optimization.

    Refines the broadcast step target when a gradient norm is available
    (``grad_norm=None`` falls back to max(ceil(h_star), s_v*t_cpu_min)), then
    repeatedly solves the transmission problem, shaving computation slots one
    by one on infeasibility. An infeasible bid carries infinite cost.
    """
    if grad_norm is None:
        h_v = max(math.ceil(plan.h_star), s_v * plan.t_cpu_min)
    else:
        h_v = refine_local_steps(grad_norm, kappa, plan.h_star, rho1, rho2,
                                 s_v, plan.t_cpu_min, h_max=s_v * plan.n_slots)
    t_cpu = math.ceil(h_v / s_v)
    while t_cpu >= plan.t_cpu_min:
        alloc = optimize_transmission(t_cpu, forecast_bps, model_bits,
                                      plan.k_max_s, plan.tau_s, weights.w_tx)
        if alloc is not None:
            return ParticipationBid(vehicle_id=vehicle_id,
                                    cost=allocation_cost(alloc, weights.w_tx),
                                    allocation=alloc,
                                    steps=min(h_v, s_v * t_cpu))
        t_cpu -= 1
    return ParticipationBid(vehicle_id=vehicle_id, cost=math.inf, steps=h_v)


def fairness(f, a):
    """Fairness metric 1/f + A from scheduling frequency and age of update."""
    if f <= 0:
        raise ValueError("scheduling frequency must be > 0")
    return 1.0 / f + a


def priority(cost, fairness_value, w_aoi):
    """Priority 1/cost + w_aoi * fairness; infeasible (infinite) cost -> -1."""
    if math.isinf(cost):
        return -1.0
    if cost <= 0:
        raise ValueError("finite participation cost must be > 0")
    return 1.0 / cost + w_aoi * fairness_value


def schedule(priorities, m_max):
    """IDs of the up-to-m_max highest positive-priority vehicles.

    ``priorities`` maps vehicle id -> score. Non-positive scores (infeasible
    bids) are never selected; ties break by ascending vehicle id.
    """
    eligible = [(vid, p) for vid, p in priorities.items() if p > 0]
    eligible.sort(key=lambda item: (-item[1], item[0]))
    return [vid for vid, _ in eligible[:m_max]]


class PriorityState:
    """Per-vehicle fairness bookkeeping: delivery counts and age of update.

    Frequency uses add-one smoothing, f = (1 + deliveries) / (1 + t); the age
    starts at 1, resets on a successful upload and grows by one for every
    round a vehicle misses.
    """

    def __init__(self, vehicle_ids):
        self.delivered_count = {vid: 0 for vid in vehicle_ids}
        self.aoi = {vid: 1 for vid in vehicle_ids}

    def frequency(self, vid, round_t):
        return (1 + self.delivered_count[vid]) / (1 + round_t)

    def fairness_of(self, vid, round_t):
        return fairness(self.frequency(vid, round_t), self.aoi[vid])

    def record_round(self, delivered_ids):
        delivered = set(delivered_ids)
        for vid in self.aoi:
            if vid in delivered:
                self.delivered_count[vid] += 1
                self.aoi[vid] = 0
            else:
                self.aoi[vid] += 1


class RoundRobinState:
    """Cyclic cursor over a fixed vehicle ordering."""

    def __init__(self, vehicle_ids):
        self.order = sorted(vehicle_ids)
        self.cursor = 0


def benchmark_schedule(policy, m_max, active_ids, round_t=0, rr_state=None,
                       rng=None, priority_state=None, bitrate_snapshot=None):
    """Scheduled set under one of the benchmark policies.

    Policies never consult participation bids: round_robin cycles through the
    fleet, fedavg samples uniformly, fairness ranks by 1/f + A alone, and
    centr_snr ranks by the estimated bitrate at the start of the round.
    """
    active = sorted(active_ids)
    if not active:
        return []
    take = min(m_max, len(active))
    if policy == "round_robin":
        active_set = set(active)
        chosen = []
        hops = 0
        n = len(rr_state.order)
        while len(chosen) < take and hops < n:
            vid = rr_state.order[rr_state.cursor % n]
            rr_state.cursor += 1
            hops += 1
            if vid in active_set and vid not in chosen:
                chosen.append(vid)
                hops = 0
        return chosen
    if policy == "fedavg":
        picks = rng.choice(len(active), size=take, replace=False)
        return sorted(active[int(i)] for i in picks)
    if policy == "fairness":
        scored = [(vid, priority_state.fairness_of(vid, round_t)) for vid in active]
        scored.sort(key=lambda item: (-item[1], item[0]))
        return [vid for vid, _ in scored[:take]]
    if policy == "centr_snr":
        scored = [(vid, bitrate_snapshot[vid]) for vid in active]
        scored.sort(key=lambda item: (-item[1], item[0]))
        return [vid for vid, _ in scored[:take]]
    raise ValueError(f"unknown benchmark policy {policy!r}")
