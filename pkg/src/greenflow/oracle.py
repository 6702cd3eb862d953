"""Brute-force reference implementations for tests. Small inputs only."""

from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np

from .evaluate import base_power, integration_end
from .model import EPS, GreenflowError, HorizonExceeded, Instance, Schedule, ScheduledItem

MAX_KNAPSACK_ITEMS = 20


class InstanceTooLarge(GreenflowError, ValueError):
    pass


def exhaustive_knapsack(items: Sequence[tuple[float, float]], capacity: float) -> tuple[float, frozenset[int]]:
    """Best value over all 2^n subsets; ties go to the lexicographically smallest index tuple.

    Sums are accumulated in ascending item order for every subset.
    """
    n = len(items)
    if n > MAX_KNAPSACK_ITEMS:
        raise InstanceTooLarge(f"{n} items exceed the limit of {MAX_KNAPSACK_ITEMS}")
    if n == 0:
        return 0.0, frozenset()
    masks = np.arange(1 << n, dtype=np.int64)
    weight = np.zeros(1 << n)
    value = np.zeros(1 << n)
    for i, (wt, v) in enumerate(items):
        bit = ((masks >> i) & 1).astype(bool)
        weight[bit] += wt
        value[bit] += v
    ok = weight <= capacity
    best = float(value[ok].max())
    hits = masks[ok & (value == best)]
    subsets = [tuple(i for i in range(n) if (m >> i) & 1) for m in hits.tolist()]
    return best, frozenset(min(subsets))


def _power_at(times: np.ndarray, s: Schedule, inst: Instance) -> np.ndarray:
    c = inst.cluster
    power = np.full(len(times), base_power(c))
    for it in s.items:
        if it.duration <= 0:
            continue
        if it.is_task:
            w = c.processors[c.index[it.resource]].work_power
        else:
            w = c.channel(c.index[it.resource[0]], c.index[it.resource[1]]).work_power
        power[(times >= it.start) & (times < it.start + it.duration)] += w
    return power


def timestep_carbon_cost(s: Schedule, inst: Instance, dt: float) -> float:
    """Left-endpoint Riemann sum of the excess power with step ``dt``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    end, _ = integration_end(s, inst.deadline)
    prof = inst.profile
    if end > prof.horizon + EPS:
        raise HorizonExceeded(f"profile horizon exceeded: {end} > {prof.horizon}")
    k = int(math.ceil(end / dt - 1e-12))
    times = np.arange(k) * dt
    steps = np.minimum(dt, end - times)
    budgets = np.array([prof.intervals[prof.locate(t)].budget for t in times])
    excess = np.maximum(0.0, _power_at(times, s, inst) - budgets)
    return math.fsum(excess * steps)


def _integral(x: float) -> bool:
    return abs(x - round(x)) <= 1e-9


def brute_force_min_carbon(inst: Instance, start_grid: float = 1) -> tuple[float, Optional[Schedule]]:
    """Minimum carbon cost over every valid schedule with integral start times in [0, D].

    Returns ``(inf, None)`` if no such schedule meets the deadline.
    """
    return _search(inst, start_grid, "carbon")


def brute_force_min_makespan(inst: Instance, start_grid: float = 1) -> tuple[float, Optional[Schedule]]:
    """Minimum makespan over valid schedules with integral starts, searched within [0, D]."""
    return _search(inst, start_grid, "makespan")


def _search(inst: Instance, start_grid, objective: str):
    w, c, prof = inst.workflow, inst.cluster, inst.profile
    if w.n > 6 or c.P > 2:
        raise InstanceTooLarge(f"brute force handles |V| <= 6 and P <= 2, got {w.n} and {c.P}")
    if start_grid != 1:
        raise InstanceTooLarge("only a unit start grid is supported")
    durs = [[w.works[v] / c.speeds[p] for p in range(c.P)] for v in range(w.n)]
    cdur = {}
    for (u, v), d in w.data.items():
        for p in range(c.P):
            for q in range(c.P):
                if p != q:
                    cdur[(u, v, p, q)] = d / c.channel(p, q).bandwidth
    bounds = [iv.begin for iv in prof.intervals] + [prof.horizon]
    checks = [x for row in durs for x in row] + list(cdur.values()) + bounds + [inst.deadline]
    if not all(_integral(x) for x in checks):
        raise InstanceTooLarge("durations, interval bounds and deadline must be integral")
    T = int(round(inst.deadline))
    base = base_power(c)
    budget = [prof.intervals[prof.locate(t)].budget for t in range(T)]
    ppow = [p.work_power for p in c.processors]

    dyn = [0.0] * T
    busy: dict = {}
    proc = [-1] * w.n
    start = [0] * w.n
    comm_at: dict = {}
    best = [math.inf, None]

    ends = []

    def cost() -> float:
        # both objectives only grow as items are added, so partial values are lower bounds
        if objective == "makespan":
            return float(max(ends, default=0))
        return math.fsum(max(0.0, base + dyn[t] - budget[t]) for t in range(T))

    def free(res, s, d) -> bool:
        if d <= 0:
            return True
        return all(s + d <= a or b <= s for a, b in busy.get(res, ()))

    def add(res, s, d, pw):
        if d <= 0:
            return
        busy.setdefault(res, []).append((s, s + d))
        ends.append(s + d)
        for t in range(s, s + d):
            dyn[t] += pw

    def remove(res, s, d, pw):
        if d <= 0:
            return
        busy[res].remove((s, s + d))
        ends.remove(s + d)
        for t in range(s, s + d):
            dyn[t] -= pw

    order = list(w.topo)
    # isolated tasks of equal work are interchangeable; place each twin at or after the previous one
    twin = [-1] * w.n
    seen: dict = {}
    for v in order:
        if not w.preds[v] and not w.succs[v]:
            key = w.works[v]
            twin[v] = seen.get(key, -1)
            seen[key] = v

    def place_task(k):
        if best[0] == 0 and objective == "carbon":
            return
        if k == len(order):
            cc = cost()
            if cc < best[0]:
                best[0] = cc
                best[1] = (list(proc), list(start), dict(comm_at))
            return
        v = order[k]
        u = twin[v]
        for p in range(c.P):
            if u >= 0 and p < proc[u]:
                continue
            place_comms(k, v, p, 0, start[u] if u >= 0 and p == proc[u] else 0)

    def place_comms(k, v, p, i, ready):
        preds = w.preds[v]
        if i == len(preds):
            d = int(round(durs[v][p]))
            for s in range(ready, T - d + 1):
                if not free(p, s, d):
                    continue
                add(p, s, d, ppow[p])
                proc[v], start[v] = p, s
                if cost() < best[0]:
                    place_task(k + 1)
                remove(p, s, d, ppow[p])
                proc[v] = -1
                if best[0] == 0 and objective == "carbon":
                    return
            return
        u = preds[i]
        fu = start[u] + int(round(durs[u][proc[u]]))
        if proc[u] == p:
            place_comms(k, v, p, i + 1, max(ready, fu))
            return
        q = proc[u]
        d = int(round(cdur[(u, v, q, p)]))
        res = ("ch", q, p)
        pw = c.channel(q, p).work_power
        for s in range(fu, T - d + 1):
            if not free(res, s, d):
                continue
            add(res, s, d, pw)
            comm_at[(u, v)] = s
            if cost() < best[0]:
                place_comms(k, v, p, i + 1, max(ready, s + d))
            remove(res, s, d, pw)
            del comm_at[(u, v)]
            if best[0] == 0 and objective == "carbon":
                return

    place_task(0)
    if best[1] is None:
        return math.inf, None
    procs, starts, comms = best[1]
    items = []
    mapping = {}
    for v in range(w.n):
        pid = c.ids[procs[v]]
        mapping[w.ids[v]] = pid
        items.append(ScheduledItem(w.ids[v], pid, float(starts[v]), float(durs[v][procs[v]])))
    for (u, v) in sorted(comms):
        p, q = procs[u], procs[v]
        items.append(ScheduledItem((w.ids[u], w.ids[v]), (c.ids[p], c.ids[q]), float(comms[(u, v)]),
                                   float(cdur[(u, v, p, q)])))
    return best[0], Schedule(mapping, tuple(items))
