"""Schedule validity, makespan and the carbon-cost objective."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .model import EPS, Cluster, HorizonExceeded, Instance, ModelError, PowerProfile, Schedule

VIOLATION_KINDS = (
    "negative-start",
    "processor-overlap",
    "channel-overlap",
    "precedence-same-proc",
    "precedence-cross-proc",
    "deadline-exceeded",
)


@dataclass(frozen=True)
class Violation:
    kind: str
    entities: tuple
    detail: str

    def __post_init__(self):
        if self.kind not in VIOLATION_KINDS:
            raise ValueError(f"unknown violation kind {self.kind!r}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "entities": [list(e) if isinstance(e, tuple) else e for e in self.entities],
                "detail": self.detail}


@dataclass(frozen=True)
class RefinedInterval:
    begin: float
    end: float
    budget: float
    total_power: float

    @property
    def excess(self) -> float:
        return max(0.0, self.total_power - self.budget)


@dataclass(frozen=True)
class CarbonReport:
    total_cost: float
    per_interval: tuple[tuple[RefinedInterval, float], ...]
    integration_end: float
    deadline_exceeded: bool = False

    def to_dict(self) -> dict:
        return {
            "total_cost": self.total_cost,
            "integration_end": self.integration_end,
            "deadline_exceeded": self.deadline_exceeded,
            "per_interval": [
                {"begin": r.begin, "end": r.end, "budget": r.budget, "total_power": r.total_power, "cost": c}
                for r, c in self.per_interval
            ],
        }


def is_valid(violations) -> bool:
    """True when no violation other than the informational deadline kind is present."""
    return all(v.kind == "deadline-exceeded" for v in violations)


def validate_schedule(s: Schedule, inst: Instance) -> list[Violation]:
    """Check conditions (i)-(iv) of a valid schedule, plus the deadline.

    Structural problems (a task without an item, an item on the wrong
    resource, a duration that disagrees with the instance) are not
    violations but malformed input, and raise ``ModelError``.
    """
    w, c = inst.workflow, inst.cluster
    tasks = s.task_items()
    comms = s.comm_items()
    out: list[Violation] = []

    for tid in w.ids:
        if tid not in s.mapping:
            raise ModelError(f"task {tid} is not mapped")
        if tid not in tasks:
            raise ModelError(f"task {tid} has no scheduled item")
        it = tasks[tid]
        pid = s.mapping[tid]
        if pid not in c.index:
            raise ModelError(f"task {tid} mapped to unknown processor {pid}")
        if it.resource != pid:
            raise ModelError(f"task {tid} item on processor {it.resource}, mapping says {pid}")
        want = w.tasks[w.index[tid]].work / c.speeds[c.index[pid]]
        if abs(it.duration - want) > EPS * max(1.0, want):
            raise ModelError(f"task {tid} duration {it.duration} != {want}")
    if len(tasks) != w.n or sum(1 for it in s.items if it.is_task) != w.n:
        raise ModelError("schedule has items for unknown or repeated tasks")

    edge_set = {(e.src, e.dst): e for e in w.edges}
    for key, it in comms.items():
        e = edge_set.get(key)
        if e is None:
            raise ModelError(f"message {key} does not correspond to an edge")
        p, q = s.mapping[e.src], s.mapping[e.dst]
        if p == q:
            raise ModelError(f"message {key} materialized although both tasks run on {p}")
        if tuple(it.resource) != (p, q):
            raise ModelError(f"message {key} on channel {it.resource}, expected {(p, q)}")
        want = e.data / c.channel(c.index[p], c.index[q]).bandwidth
        if abs(it.duration - want) > EPS * max(1.0, want):
            raise ModelError(f"message {key} duration {it.duration} != {want}")

    # (i)
    for it in s.items:
        if it.start < -EPS:
            out.append(Violation("negative-start", (it.entity,), f"{it.entity} starts at {it.start}"))

    # (ii) and its channel analogue
    by_res = defaultdict(list)
    for it in s.items:
        if it.duration > 0:
            by_res[it.resource].append(it)
    for res, lst in by_res.items():
        lst.sort(key=lambda it: (it.start, it.finish))
        kind = "channel-overlap" if isinstance(res, tuple) else "processor-overlap"
        run = lst[0]
        for it in lst[1:]:
            if it.start < run.finish - EPS:
                out.append(Violation(kind, (run.entity, it.entity),
                                     f"{run.entity} [{run.start}, {run.finish}) overlaps "
                                     f"{it.entity} [{it.start}, {it.finish}) on {res}"))
            if it.finish > run.finish:
                run = it

    # (iii), (iv)
    for e in w.edges:
        u, v = tasks[e.src], tasks[e.dst]
        if s.mapping[e.src] == s.mapping[e.dst]:
            if u.finish > v.start + EPS:
                out.append(Violation("precedence-same-proc", (e.src, e.dst),
                                     f"{e.src} finishes at {u.finish} after {e.dst} starts at {v.start}"))
            continue
        m = comms.get((e.src, e.dst))
        if m is None:
            out.append(Violation("precedence-cross-proc", (e.src, e.dst),
                                 f"no message scheduled for edge {e.src}->{e.dst}"))
        elif u.finish > m.start + EPS or m.finish > v.start + EPS:
            out.append(Violation("precedence-cross-proc", (e.src, e.dst),
                                 f"{e.src} ends {u.finish}, message [{m.start}, {m.finish}), "
                                 f"{e.dst} starts {v.start}"))

    ms = makespan(s)
    if ms > inst.deadline + EPS:
        out.append(Violation("deadline-exceeded", (), f"makespan {ms} > deadline {inst.deadline}"))
    return out


def makespan(s: Schedule) -> float:
    return max((it.start + it.duration for it in s.items), default=0.0)


def base_power(c: Cluster) -> float:
    """Static power of all P^2 resources (processors and channels)."""
    return math.fsum(p.idle_power for p in c.processors) + math.fsum(ch.idle_power for ch in c.channels)


def item_arrays(s: Schedule, c: Cluster) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Start, finish and dynamic power of every item of ``s``."""
    n = len(s.items)
    starts = np.empty(n)
    finishes = np.empty(n)
    powers = np.empty(n)
    for k, it in enumerate(s.items):
        starts[k] = it.start
        finishes[k] = it.start + it.duration
        if it.is_task:
            powers[k] = c.processors[c.index[it.resource]].work_power
        else:
            p, q = it.resource
            powers[k] = c.channel(c.index[p], c.index[q]).work_power
    return starts, finishes, powers


@dataclass
class Sweep:
    """Refined intervals as parallel arrays: bounds[k]..bounds[k+1] has power[k] and budget[k]."""

    bounds: np.ndarray
    power: np.ndarray
    budget: np.ndarray

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(self.bounds)

    @property
    def excess(self) -> np.ndarray:
        return np.maximum(0.0, self.power - self.budget)

    def cost(self) -> float:
        return float(np.dot(self.excess, self.lengths))


def profile_arrays(prof: PowerProfile) -> tuple[np.ndarray, np.ndarray]:
    begins = np.array([iv.begin for iv in prof.intervals])
    budgets = np.array([iv.budget for iv in prof.intervals])
    return begins, budgets


def sweep(starts, finishes, powers, base: float, prof_begins, prof_budgets, horizon: float,
          end: float, beyond_budget: float = 0.0) -> Sweep:
    """Sweep-line over item events and profile bounds on ``[0, end)``.

    Items are busy on half-open spans. Time past ``horizon`` gets
    ``beyond_budget``; public cost functions never integrate there.
    """
    if end <= 0:
        empty = np.empty(0)
        return Sweep(np.zeros(1), empty, empty)
    starts = np.asarray(starts, dtype=float)
    finishes = np.asarray(finishes, dtype=float)
    powers = np.asarray(powers, dtype=float)
    s = np.clip(starts, 0.0, end)
    f = np.clip(finishes, 0.0, end)
    pb = prof_begins[prof_begins < end]
    pts = [s, f, pb, np.array([0.0, end])]
    if horizon < end:
        pts.append(np.array([horizon]))
    bounds = np.unique(np.concatenate(pts))
    busy = f > s
    i0 = np.searchsorted(bounds, s[busy])
    i1 = np.searchsorted(bounds, f[busy])
    delta = np.zeros(len(bounds))
    np.add.at(delta, i0, powers[busy])
    np.add.at(delta, i1, -powers[busy])
    active = np.zeros(len(bounds), dtype=np.int64)
    np.add.at(active, i0, 1)
    np.add.at(active, i1, -1)
    # cumsum leaves rounding residue after +w/-w pairs; snap fully idle spans to base
    dyn = np.where(np.cumsum(active)[:-1] > 0, np.cumsum(delta)[:-1], 0.0)
    power = base + dyn
    left = bounds[:-1]
    j = np.searchsorted(prof_begins, left, side="right") - 1
    budget = prof_budgets[np.clip(j, 0, len(prof_budgets) - 1)]
    if horizon < end:
        budget = np.where(left >= horizon, beyond_budget, budget)
    return Sweep(bounds, power, budget)


def refined_intervals(s: Schedule, c: Cluster, prof: PowerProfile, end: float) -> list[RefinedInterval]:
    if end > prof.horizon + EPS:
        raise HorizonExceeded(f"profile horizon exceeded: {end} > {prof.horizon}")
    st, fi, pw = item_arrays(s, c)
    begins, budgets = profile_arrays(prof)
    sw = sweep(st, fi, pw, base_power(c), begins, budgets, prof.horizon, min(end, prof.horizon))
    return [
        RefinedInterval(float(b), float(e), float(g), float(p))
        for b, e, g, p in zip(sw.bounds[:-1], sw.bounds[1:], sw.budget, sw.power)
    ]


def integration_end(s: Schedule, deadline: float) -> tuple[float, bool]:
    ms = makespan(s)
    if ms <= deadline + EPS:
        return deadline, False
    return ms, True


def carbon_cost(s: Schedule, inst: Instance) -> CarbonReport:
    """Integrate power above the green budget from 0 to D (or to the makespan if it overshoots)."""
    end, late = integration_end(s, inst.deadline)
    if end > inst.profile.horizon + EPS:
        raise HorizonExceeded(f"profile horizon exceeded: integration end {end} > {inst.profile.horizon}")
    refined = refined_intervals(s, inst.cluster, inst.profile, end)
    per = tuple((r, r.excess * (r.end - r.begin)) for r in refined)
    total = math.fsum(x for _, x in per)
    return CarbonReport(total, per, end, late)
