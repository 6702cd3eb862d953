"""HEFT-SL: upward-rank list scheduling with insertion and serialized links.

``ListScheduler`` is the mutable engine shared with the carbon-aware
scheduler; it keeps one timeline per processor and materializes link
timelines only for channels that carry a message.
"""

from __future__ import annotations

import random
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .model import EPS, Cluster, Instance, Schedule, ScheduledItem, Task, Workflow

RankTable = dict  # task id -> upward rank


class Timeline:
    """Disjoint busy spans of one resource, sorted by start."""

    __slots__ = ("starts", "ends")

    def __init__(self):
        self.starts: list[float] = []
        self.ends: list[float] = []

    def __len__(self):
        return len(self.starts)

    def earliest_fit(self, ready: float, dur: float) -> float:
        """Earliest start >= ready of a gap that holds ``dur`` (insertion-based)."""
        if dur <= 0:
            return ready
        starts, ends = self.starts, self.ends
        i = bisect_right(ends, ready)
        t = ready
        n = len(starts)
        while i < n:
            if starts[i] >= t + dur - EPS:
                return t
            if ends[i] > t:
                t = ends[i]
            i += 1
        return t

    def insert(self, start: float, end: float) -> None:
        if end <= start:
            return
        pos = bisect_right(self.starts, start)
        self.starts.insert(pos, start)
        self.ends.insert(pos, end)

    def spans(self) -> list[tuple[float, float]]:
        return list(zip(self.starts, self.ends))


class LinkTimeline:
    """Per-channel timelines keyed by dense (p, q), created on first use."""

    def __init__(self):
        self._tl: dict[tuple[int, int], Timeline] = {}

    def get(self, key) -> Optional[Timeline]:
        return self._tl.get(key)

    def setdefault(self, key) -> Timeline:
        tl = self._tl.get(key)
        if tl is None:
            tl = self._tl[key] = Timeline()
        return tl

    def fit(self, key, ready: float, dur: float, overlay: Optional[list] = None) -> float:
        """Earliest slot on channel ``key`` that also avoids the tentative ``overlay`` spans."""
        tl = self._tl.get(key)
        t = ready
        while True:
            if tl is not None:
                t = tl.earliest_fit(t, dur)
            if not overlay or dur <= 0:
                return t
            bump = None
            for a, b in overlay:
                if a < t + dur - EPS and b > t + EPS:
                    bump = b if bump is None else max(bump, b)
            if bump is None:
                return t
            t = bump

    def channels(self):
        return self._tl.items()


@dataclass
class Choice:
    proc: int
    start: float
    finish: float
    transfers: list = field(default_factory=list)  # (pred, start, finish)


def mean_runtime(v: Task, c: Cluster) -> float:
    return sum(v.work / s for s in c.speeds) / c.P


def compute_ranks(w: Workflow, c: Cluster) -> RankTable:
    """Upward ranks, using raw edge data as the communication term."""
    rank = [0.0] * w.n
    data = w.data
    for v in reversed(w.topo):
        tail = max((data[(v, x)] + rank[x] for x in w.succs[v]), default=0.0)
        rank[v] = mean_runtime(w.tasks[v], c) + tail
    return {w.ids[i]: rank[i] for i in range(w.n)}


def rank_order(table: RankTable, seed) -> list[int]:
    """Task ids by descending rank; equal ranks keep a seeded random order."""
    ids = sorted(table)
    random.Random(seed).shuffle(ids)
    ids.sort(key=lambda t: -table[t])
    return ids


def tie_rng(seed) -> random.Random:
    return random.Random(f"{seed}:ties")


class ListScheduler:
    """Placement state for one list-scheduling run over dense indices."""

    def __init__(self, inst: Instance, rng: Optional[random.Random] = None):
        self.inst = inst
        w, c = inst.workflow, inst.cluster
        self.w, self.c = w, c
        self.rng = rng or random.Random(0)
        n, P = w.n, c.P
        self.proc = [-1] * n
        self.start = [0.0] * n
        self.finish = [0.0] * n
        self.proc_tl = [Timeline() for _ in range(P)]
        self.links = LinkTimeline()
        self.comms: dict[tuple[int, int], tuple[float, float]] = {}
        self.bw = [[0.0] * P for _ in range(P)]
        for (p, q), k in c.channel_index.items():
            self.bw[p][q] = c.channels[k].bandwidth
        self._works = w.works
        self._speeds = c.speeds

    def duration(self, v: int, p: int) -> float:
        return self._works[v] / self._speeds[p]

    def tentative_comm(self, u: int, v: int, p: int, overlay: dict) -> tuple[float, float]:
        """Place message u->v onto channel (proc[u], p) in the candidate's ``overlay``."""
        pu = self.proc[u]
        d = self.w.data[(u, v)] / self.bw[pu][p]
        key = (pu, p)
        ov = overlay.get(key)
        s = self.links.fit(key, self.finish[u], d, ov)
        if ov is None:
            overlay[key] = [(s, s + d)]
        else:
            ov.append((s, s + d))
        return s, s + d

    def evaluate(self, v: int, p: int, min_start: float = 0.0) -> Choice:
        est = min_start
        overlay: dict = {}
        transfers = []
        proc, finish = self.proc, self.finish
        for u in self.w.preds[v]:
            if proc[u] == p:
                a = finish[u]
            else:
                s, a = self.tentative_comm(u, v, p, overlay)
                transfers.append((u, s, a))
            if a > est:
                est = a
        dur = self._works[v] / self._speeds[p]
        t = self.proc_tl[p].earliest_fit(est, dur)
        return Choice(p, t, t + dur, transfers)

    def find_choice(self, v: int, candidates: Iterable[int], min_start: float = 0.0) -> Choice:
        """Minimum-EFT candidate; ties within EPS broken uniformly at random."""
        evals = [self.evaluate(v, p, min_start) for p in candidates]
        best = min(ch.finish for ch in evals)
        ties = [ch for ch in evals if ch.finish <= best + EPS]
        if len(ties) == 1:
            return ties[0]
        return ties[self.rng.randrange(len(ties))]

    def commit(self, v: int, ch: Choice) -> None:
        self.proc[v] = ch.proc
        self.start[v] = ch.start
        self.finish[v] = ch.finish
        self.proc_tl[ch.proc].insert(ch.start, ch.finish)
        for u, s, f in ch.transfers:
            self.links.setdefault((self.proc[u], ch.proc)).insert(s, f)
            self.comms[(u, v)] = (s, f)

    def fix(self, v: int, p: int, start: float) -> None:
        """Place ``v`` exactly (used to keep part of an existing schedule)."""
        d = self.duration(v, p)
        self.proc[v] = p
        self.start[v] = start
        self.finish[v] = start + d
        self.proc_tl[p].insert(start, start + d)

    def fix_comm(self, u: int, v: int, start: float, finish: float) -> None:
        self.links.setdefault((self.proc[u], self.proc[v])).insert(start, finish)
        self.comms[(u, v)] = (start, finish)

    def run(self, order: Sequence[int], candidates: Optional[Sequence[int]] = None) -> None:
        cands = list(range(self.c.P)) if candidates is None else list(candidates)
        for v in order:
            self.commit(v, self.find_choice(v, cands))

    def to_schedule(self) -> Schedule:
        w, c = self.w, self.c
        items = []
        mapping = {}
        for v in range(w.n):
            if self.proc[v] < 0:
                raise ValueError(f"task {w.ids[v]} was never placed")
            pid = c.ids[self.proc[v]]
            mapping[w.ids[v]] = pid
            items.append(ScheduledItem(w.ids[v], pid, self.start[v], self.finish[v] - self.start[v]))
        for (u, v) in sorted(self.comms):
            s, f = self.comms[(u, v)]
            items.append(ScheduledItem((w.ids[u], w.ids[v]), (c.ids[self.proc[u]], c.ids[self.proc[v]]), s, f - s))
        return Schedule(mapping, tuple(items))


def tentative_comm_schedule(state: ListScheduler, src: int, dst: int, target_proc: int,
                            overlay: Optional[dict] = None) -> tuple[float, float]:
    """Earliest slot for message ``src -> dst`` if ``dst`` ran on ``target_proc`` (ids).

    The slot is recorded in ``overlay`` (the candidate's link copy); the
    shared link timeline is left untouched.
    """
    w, c = state.w, state.c
    return state.tentative_comm(w.index[src], w.index[dst], c.index[target_proc], {} if overlay is None else overlay)


def order_indices(w: Workflow, order_ids: Sequence[int]) -> list[int]:
    return [w.index[t] for t in order_ids]


def heft_sl_state(inst: Instance, seed, order: Optional[Sequence[int]] = None) -> ListScheduler:
    if order is None:
        order = rank_order(compute_ranks(inst.workflow, inst.cluster), seed)
    ls = ListScheduler(inst, tie_rng(seed))
    ls.run(order_indices(inst.workflow, order))
    return ls


def schedule_heft_sl(inst: Instance, seed=0) -> Schedule:
    """Carbon-agnostic baseline; the deadline is not consulted."""
    return heft_sl_state(inst, seed).to_schedule()
