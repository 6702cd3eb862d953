"""Carbon-aware workflow mapping (CWM).

Two phases: a deadline-agnostic mapping that restricts each power interval
to a processor subset chosen by a knapsack over dynamic power, then a
repair step that lifts the restriction for the tail of the schedule until
the deadline holds. A randomized shifting local search refines the result
after each phase.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .evaluate import (
    CarbonReport,
    base_power,
    carbon_cost,
    is_valid,
    makespan,
    profile_arrays,
    sweep,
    validate_schedule,
)
from .heft_sl import ListScheduler, compute_ranks, order_indices, rank_order, tie_rng
from .model import EPS, Cluster, GreenflowError, InfeasibleDeadline, Instance, PowerProfile, Schedule, ScheduledItem

WEIGHT_SCALE = 1000

__all__ = [
    "CwmParams",
    "InvariantBreach",
    "base_power",
    "knapsack_dp",
    "select_processor_subset",
    "select_subsets",
    "initial_mapping",
    "local_search",
    "shift_move",
    "reschedule_above_threshold",
    "deadline_repair",
    "run_cwm",
]


class InvariantBreach(GreenflowError):
    """A scheduler produced a schedule that fails validation."""


@dataclass(frozen=True)
class CwmParams:
    tau: float = 0.8
    phi: int = 500
    retries: int = 3
    seed: int = 0
    keep_best: bool = True

    def __post_init__(self):
        if not 0 < self.tau <= 1:
            raise ValueError(f"tau must lie in (0, 1], got {self.tau}")
        if self.phi < 0 or self.retries < 0:
            raise ValueError("phi and retries must be non-negative")

    @classmethod
    def from_dict(cls, d: dict) -> "CwmParams":
        known = {k: d[k] for k in ("tau", "phi", "retries", "seed", "keep_best") if k in d}
        return cls(**known)


# --- processor selection ----------------------------------------------------


def knapsack_dp(weights: Sequence[int], values: Sequence[float], capacity: int) -> tuple[float, list[int]]:
    """0/1 knapsack over integer weights; returns (best value, chosen indices).

    An item is taken only if it strictly improves the cell, so among equal
    values the DP prefers leaving later items out.
    """
    n = len(weights)
    if capacity < 0:
        capacity = 0
    capacity = min(capacity, sum(weights))
    nz = [wt for wt in weights if wt > 0]
    g = math.gcd(*nz) if nz else 1
    cap = capacity // g
    ws = [wt // g for wt in weights]
    dp = np.zeros(cap + 1)
    keep = np.zeros((n, cap + 1), dtype=bool)
    for i in range(n):
        wi, vi = ws[i], values[i]
        if wi > cap:
            continue
        cand = dp[: cap + 1 - wi] + vi
        better = cand > dp[wi:]
        keep[i, wi:] = better
        dp[wi:] = np.where(better, cand, dp[wi:])
    chosen = []
    c = cap
    for i in range(n - 1, -1, -1):
        if keep[i, c]:
            chosen.append(i)
            c -= ws[i]
    chosen.reverse()
    return float(dp[cap]), chosen


def integerize(x: float) -> int:
    return int(round(x * WEIGHT_SCALE))


def knapsack_capacity(budget: float, c: Cluster, tau: float) -> float:
    return max(0.0, tau * (budget - base_power(c)))


def select_processor_subset(budget: float, c: Cluster, tau: float) -> frozenset[int]:
    """Fastest processor subset whose dynamic power fits in ``tau`` times the spare budget."""
    if not 0 < tau <= 1:
        raise ValueError("tau must lie in (0, 1]")
    work = [p.work_power for p in c.processors]
    p_min = c.processors[min(range(c.P), key=lambda k: (work[k], k))].id
    capacity = knapsack_capacity(budget, c, tau)
    if capacity <= 0:
        return frozenset([p_min])
    # floor with a small guard so 7.9999999 * 1000 stays 8000
    cap = int(math.floor(capacity * WEIGHT_SCALE + 1e-6))
    _, chosen = knapsack_dp([integerize(x) for x in work], list(c.speeds), cap)
    if not chosen:
        return frozenset([p_min])
    return frozenset(c.processors[k].id for k in chosen)


def select_subsets(prof: PowerProfile, c: Cluster, tau: float) -> list[frozenset[int]]:
    cache: dict[float, frozenset[int]] = {}
    out = []
    for iv in prof.intervals:
        if iv.budget not in cache:
            cache[iv.budget] = select_processor_subset(iv.budget, c, tau)
        out.append(cache[iv.budget])
    return out


# --- phase 1 ----------------------------------------------------------------


def initial_mapping(inst: Instance, subsets: Sequence[frozenset[int]], params: CwmParams,
                    refine: bool = True) -> Schedule:
    """Deadline-agnostic list scheduling restricted to each interval's processor subset.

    With ``refine`` the result goes through ``local_search`` with no deadline.
    """
    w, c, prof = inst.workflow, inst.cluster, inst.profile
    if len(subsets) != len(prof.intervals):
        raise ValueError("need one processor subset per profile interval")
    order = order_indices(w, rank_order(compute_ranks(w, c), params.seed))
    ls = ListScheduler(inst, tie_rng(params.seed))
    cands = [sorted(c.index[p] for p in sub) for sub in subsets]
    begins = [iv.begin for iv in prof.intervals]
    ends = [iv.end for iv in prof.intervals]
    J = len(begins)
    for v in order:
        est = max((ls.finish[u] for u in w.preds[v]), default=0.0)
        j = prof.locate(est)
        ch = ls.find_choice(v, cands[j])
        tries = 0
        while not (begins[j] <= ch.start < ends[j]) and tries < params.retries and j + 1 < J:
            j += 1
            tries += 1
            ch = ls.find_choice(v, cands[j], min_start=begins[j])
        ls.commit(v, ch)
    s = ls.to_schedule()
    if refine:
        s = local_search(s, math.inf, inst, params, random.Random(f"{params.seed}:ls1"))
    return s


# --- local search -----------------------------------------------------------


class _Flat:
    """Schedule as flat arrays; tasks occupy slots 0..n-1 in dense order."""

    def __init__(self, s: Schedule, inst: Instance):
        w, c = inst.workflow, inst.cluster
        self.w, self.c = w, c
        n = w.n
        self.n = n
        tasks = s.task_items()
        comms = sorted(s.comm_items().items(), key=lambda kv: (w.index[kv[0][0]], w.index[kv[0][1]]))
        m = n + len(comms)
        self.start = np.empty(m)
        self.dur = np.empty(m)
        self.power = np.empty(m)
        self.res = np.empty(m, dtype=np.int64)
        self.entity = []
        self.resource = []
        self.dst = np.full(m, -1, dtype=np.int64)
        self.out = [[] for _ in range(n)]
        procs = c.processors
        for v, tid in enumerate(w.ids):
            it = tasks[tid]
            k = c.index[it.resource]
            self.start[v] = it.start
            self.dur[v] = it.duration
            self.power[v] = procs[k].work_power
            self.res[v] = k
            self.entity.append(tid)
            self.resource.append(it.resource)
        for j, ((a, b), it) in enumerate(comms, start=n):
            key = (c.index[it.resource[0]], c.index[it.resource[1]])
            ch = c.channel_index[key]
            self.start[j] = it.start
            self.dur[j] = it.duration
            self.power[j] = c.channels[ch].work_power
            self.res[j] = c.P + ch
            self.entity.append((a, b))
            self.resource.append(it.resource)
            self.dst[j] = w.index[b]
            self.out[w.index[a]].append(j)
        self.mapping = dict(s.mapping)

    @property
    def finish(self) -> np.ndarray:
        return self.start + self.dur

    def to_schedule(self, start: Optional[np.ndarray] = None) -> Schedule:
        st = self.start if start is None else start
        items = tuple(
            ScheduledItem(self.entity[k], self.resource[k], float(st[k]), float(self.dur[k]))
            for k in range(len(st))
        )
        return Schedule(dict(self.mapping), items)


def _move_set(f: _Flat, vp: int, e: float) -> np.ndarray:
    """Items to shift with task ``vp`` so that the shifted schedule stays valid.

    Everything starting at or after ``e`` moves rigidly. From ``vp`` (and
    its successors that start before ``e``) we close under precedence
    (outgoing messages, their receivers, co-located successors) and under
    resource order (every later item on the same processor or channel).
    """
    st = f.start
    fin = st + f.dur
    shift = st >= e
    stack = [vp] + [x for x in f.w.succs[vp] if st[x] < e]
    for x in stack:
        shift[x] = True
    res = f.res
    n = f.n
    while stack:
        x = stack.pop()
        nxt = []
        if x < n:
            nxt.extend(f.out[x])
            px = res[x]
            nxt.extend(y for y in f.w.succs[x] if res[y] == px)
        else:
            nxt.append(int(f.dst[x]))
        later = np.nonzero((res == res[x]) & (st >= fin[x] - EPS) & ~shift)[0]
        nxt.extend(int(y) for y in later)
        for y in nxt:
            if not shift[y]:
                shift[y] = True
                stack.append(y)
    return shift


def _move_amount(f: _Flat, shift: np.ndarray, vp: int, e: float, deadline: float) -> float:
    amount = e - f.start[vp]
    if math.isfinite(deadline):
        latest = float(np.max((f.start + f.dur)[shift]))
        amount = min(amount, deadline - latest)
    return amount


def shift_move(s: Schedule, inst: Instance, v_prime: int, e: float, deadline: float = math.inf
               ) -> tuple[Schedule, float]:
    """Apply one local-search move: push task ``v_prime`` (id) past time ``e``.

    Returns the shifted schedule and the amount moved (no change if <= 0).
    """
    f = _Flat(s, inst)
    vp = f.w.index[v_prime]
    shift = _move_set(f, vp, e)
    amount = _move_amount(f, shift, vp, e, deadline)
    if amount <= 0:
        return s, amount
    st = f.start.copy()
    st[shift] += amount
    return f.to_schedule(st), amount


def local_search(s: Schedule, deadline: float, inst: Instance, params: CwmParams,
                 rng: Optional[random.Random] = None, trace: Optional[list] = None) -> Schedule:
    """Randomized shifting of tasks out of the leftmost over-budget refined interval.

    With an infinite deadline moves are unbounded and each snapshot is
    costed up to the later of the horizon and its makespan; past the
    horizon the last interval's budget carries on, as in subset lookup. With ``keep_best`` the cheapest snapshot seen
    is returned; ``trace`` collects each snapshot's cost.
    """
    rng = rng or random.Random(f"{params.seed}:ls")
    f = _Flat(s, inst)
    prof = inst.profile
    begins, budgets = profile_arrays(prof)
    base = base_power(inst.cluster)
    tol = 1e-9 * max(1.0, base)
    n = f.n
    tail = float(budgets[-1])

    def window(fin):
        if math.isfinite(deadline):
            return deadline
        return max(prof.horizon, float(np.max(fin))) if len(fin) else prof.horizon

    best_cost = math.inf
    best = None
    cost = None
    for _ in range(params.phi):
        fin = f.start + f.dur
        sw = sweep(f.start, fin, f.power, base, begins, budgets, prof.horizon, window(fin), tail)
        cost = sw.cost()
        if trace is not None:
            trace.append(cost)
        if cost < best_cost:
            best_cost, best = cost, f.start.copy()
        over = np.nonzero(sw.power > sw.budget + tol)[0]
        if len(over) == 0:
            break
        k = over[0]
        b, e = sw.bounds[k], sw.bounds[k + 1]
        running = np.nonzero((f.start[:n] < e) & (fin[:n] > b))[0]
        if len(running) == 0:
            break
        vp = int(running[rng.randrange(len(running))])
        shift = _move_set(f, vp, e)
        amount = _move_amount(f, shift, vp, e, deadline)
        if amount <= 0:
            break
        f.start[shift] += amount
        cost = None
    if cost is None:
        fin = f.start + f.dur
        cost = sweep(f.start, fin, f.power, base, begins, budgets, prof.horizon, window(fin), tail).cost()
        if trace is not None:
            trace.append(cost)
    if params.keep_best and best is not None and best_cost < cost:
        return f.to_schedule(best)
    return f.to_schedule()


# --- phase 2 ----------------------------------------------------------------


def reschedule_above_threshold(s: Schedule, xi: float, order: Sequence[int], inst: Instance, seed) -> Schedule:
    """Keep every task finishing by ``xi`` (minus the descendants of late ones); re-list the rest.

    The rescheduled tasks may use every processor and are inserted around
    the fixed part, in the given ``order`` (task ids).
    """
    w, c = inst.workflow, inst.cluster
    tasks = s.task_items()
    late = [v for v in range(w.n) if tasks[w.ids[v]].finish > xi]
    redo = set(late)
    stack = list(late)
    while stack:
        v = stack.pop()
        for x in w.succs[v]:
            if x not in redo:
                redo.add(x)
                stack.append(x)
    if not redo:
        return s
    ls = ListScheduler(inst, tie_rng(seed))
    for v in range(w.n):
        if v not in redo:
            it = tasks[w.ids[v]]
            ls.fix(v, c.index[it.resource], it.start)
    for (a, b), it in s.comm_items().items():
        u, v = w.index[a], w.index[b]
        if u not in redo and v not in redo:
            ls.fix_comm(u, v, it.start, it.start + it.duration)
    ls.run([v for v in order_indices(w, order) if v in redo])
    return ls.to_schedule()


def deadline_repair(s: Schedule, inst: Instance, params: CwmParams,
                    rng: Optional[random.Random] = None) -> Schedule:
    """Bring ``s`` under the deadline by rescheduling its tail; binary search on the threshold."""
    D = inst.deadline
    rng = rng or random.Random(f"{params.seed}:ls2")
    if makespan(s) <= D + EPS:
        return local_search(s, D, inst, params, rng)
    order = rank_order(compute_ranks(inst.workflow, inst.cluster), params.seed)

    def attempt(xi):
        r = reschedule_above_threshold(s, xi, order, inst, params.seed)
        return r, makespan(r) <= D + EPS

    r, ok = attempt(D)
    if ok:
        return local_search(r, D, inst, params, rng)
    lo, hi = 0, math.floor(D)
    found = None
    while lo + 1 < hi:
        mid = lo + math.floor((hi - lo) / 2)
        r, ok = attempt(mid)
        if ok:
            lo, found = mid, r
        else:
            hi = mid
    if found is None:
        found, ok = attempt(lo)
        if not ok:
            raise InfeasibleDeadline(
                f"deadline {D} is below the HEFT-SL makespan {makespan(found)} for seed {params.seed}"
            )
    return local_search(found, D, inst, params, rng)


def run_cwm(inst: Instance, params: CwmParams = CwmParams()) -> tuple[Schedule, CarbonReport]:
    subsets = select_subsets(inst.profile, inst.cluster, params.tau)
    s = initial_mapping(inst, subsets, params)
    s = deadline_repair(s, inst, params)
    bad = validate_schedule(s, inst)
    if not is_valid(bad) or makespan(s) > inst.deadline + EPS:
        raise InvariantBreach(f"CWM produced an invalid schedule: {[v.detail for v in bad][:3]}")
    return s, carbon_cost(s, inst)
