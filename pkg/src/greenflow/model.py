"""Domain types for workflows, platforms, power profiles and schedules.

Everything here is immutable once built. Algorithms work on dense integer
indices (position in id-sorted order); the public types keep the ids found
in the input documents.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Union

EPS = 1e-9
BETA = 1.0


class GreenflowError(Exception):
    """Base class for errors raised by this package."""


class ModelError(GreenflowError, ValueError):
    """An input document or constructed object violates a model invariant."""


class HorizonExceeded(GreenflowError, ValueError):
    pass


class InfeasibleDeadline(GreenflowError):
    """The deadline cannot be met, not even by the HEFT-SL fallback."""


@dataclass(frozen=True)
class Task:
    id: int
    work: float

    def __post_init__(self):
        if not self.work > 0:
            raise ModelError(f"task {self.id}: work must be > 0, got {self.work}")


@dataclass(frozen=True)
class Edge:
    src: int
    dst: int
    data: float

    def __post_init__(self):
        if self.src == self.dst:
            raise ModelError(f"edge {self.src}->{self.dst}: self loop")
        if self.data < 0:
            raise ModelError(f"edge {self.src}->{self.dst}: negative data {self.data}")


@dataclass(frozen=True)
class Workflow:
    tasks: tuple[Task, ...]
    edges: tuple[Edge, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "tasks", tuple(sorted(self.tasks, key=lambda t: t.id)))
        object.__setattr__(self, "edges", tuple(sorted(self.edges, key=lambda e: (e.src, e.dst))))
        seen = set()
        for t in self.tasks:
            if t.id in seen:
                raise ModelError(f"duplicate task id {t.id}")
            seen.add(t.id)
        pairs = set()
        for e in self.edges:
            if e.src not in seen or e.dst not in seen:
                raise ModelError(f"edge {e.src}->{e.dst} references a missing task")
            if (e.src, e.dst) in pairs:
                raise ModelError(f"duplicate edge {e.src}->{e.dst}")
            pairs.add((e.src, e.dst))
        order = self._kahn()
        if len(order) != len(self.tasks):
            stuck = sorted(self.ids[i] for i in range(self.n) if i not in set(order))
            raise ModelError(f"cycle detected among tasks {stuck}")
        object.__setattr__(self, "_topo", tuple(order))

    @property
    def n(self) -> int:
        return len(self.tasks)

    @cached_property
    def ids(self) -> tuple[int, ...]:
        return tuple(t.id for t in self.tasks)

    @cached_property
    def index(self) -> dict[int, int]:
        return {tid: i for i, tid in enumerate(self.ids)}

    @cached_property
    def works(self) -> tuple[float, ...]:
        return tuple(t.work for t in self.tasks)

    @cached_property
    def succs(self) -> tuple[tuple[int, ...], ...]:
        out = [[] for _ in self.tasks]
        for e in self.edges:
            out[self.index[e.src]].append(self.index[e.dst])
        return tuple(tuple(sorted(s)) for s in out)

    @cached_property
    def preds(self) -> tuple[tuple[int, ...], ...]:
        out = [[] for _ in self.tasks]
        for e in self.edges:
            out[self.index[e.dst]].append(self.index[e.src])
        return tuple(tuple(sorted(p)) for p in out)

    @cached_property
    def data(self) -> dict[tuple[int, int], float]:
        """Edge data keyed by dense (src, dst) index pair."""
        return {(self.index[e.src], self.index[e.dst]): e.data for e in self.edges}

    def _kahn(self) -> list[int]:
        import heapq

        indeg = [len(p) for p in self.preds]
        heap = [i for i, d in enumerate(indeg) if d == 0]
        heapq.heapify(heap)
        order = []
        while heap:
            v = heapq.heappop(heap)
            order.append(v)
            for w in self.succs[v]:
                indeg[w] -= 1
                if indeg[w] == 0:
                    heapq.heappush(heap, w)
        return order

    @property
    def topo(self) -> tuple[int, ...]:
        """Dense indices in topological order (ties by ascending id)."""
        return self._topo


def topological_order(w: Workflow) -> list[int]:
    """Task ids such that every edge goes forward; ties broken by smaller id."""
    return [w.ids[i] for i in w.topo]


@dataclass(frozen=True)
class Processor:
    id: int
    speed: float
    idle_power: float = 0.0
    work_power: float = 0.0

    def __post_init__(self):
        if not self.speed > 0:
            raise ModelError(f"processor {self.id}: speed must be > 0")
        if self.idle_power < 0 or self.work_power < 0:
            raise ModelError(f"processor {self.id}: negative power")


@dataclass(frozen=True)
class CommChannel:
    src_proc: int
    dst_proc: int
    idle_power: float = 0.0
    work_power: float = 0.0
    bandwidth: float = BETA

    def __post_init__(self):
        if self.src_proc == self.dst_proc:
            raise ModelError(f"channel {self.src_proc}->{self.dst_proc}: same endpoints")
        if not self.bandwidth > 0:
            raise ModelError("channel bandwidth must be > 0")
        if self.idle_power < 0 or self.work_power < 0:
            raise ModelError(f"channel {self.src_proc}->{self.dst_proc}: negative power")


@dataclass(frozen=True)
class Cluster:
    processors: tuple[Processor, ...]
    channels: tuple[CommChannel, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "processors", tuple(sorted(self.processors, key=lambda p: p.id)))
        object.__setattr__(
            self, "channels", tuple(sorted(self.channels, key=lambda c: (c.src_proc, c.dst_proc)))
        )
        if not self.processors:
            raise ModelError("cluster needs at least one processor")
        ids = [p.id for p in self.processors]
        if len(set(ids)) != len(ids):
            raise ModelError("duplicate processor id")
        want = {(p, q) for p in ids for q in ids if p != q}
        have = [(c.src_proc, c.dst_proc) for c in self.channels]
        if len(set(have)) != len(have):
            raise ModelError("duplicate channel")
        if set(have) != want:
            missing = sorted(want - set(have))[:3]
            extra = sorted(set(have) - want)[:3]
            raise ModelError(f"channels must cover every ordered pair once (missing {missing}, unknown {extra})")

    @property
    def P(self) -> int:
        return len(self.processors)

    @cached_property
    def ids(self) -> tuple[int, ...]:
        return tuple(p.id for p in self.processors)

    @cached_property
    def index(self) -> dict[int, int]:
        return {pid: i for i, pid in enumerate(self.ids)}

    @cached_property
    def speeds(self) -> tuple[float, ...]:
        return tuple(p.speed for p in self.processors)

    @cached_property
    def channel_index(self) -> dict[tuple[int, int], int]:
        """Dense (p, q) processor-index pair -> position in ``channels``."""
        return {(self.index[c.src_proc], self.index[c.dst_proc]): k for k, c in enumerate(self.channels)}

    def channel(self, p: int, q: int) -> CommChannel:
        """Channel between dense processor indices p and q."""
        return self.channels[self.channel_index[(p, q)]]

    @property
    def resource_count(self) -> int:
        return len(self.processors) + len(self.channels)


@dataclass(frozen=True)
class Interval:
    begin: float
    end: float
    budget: float

    def __post_init__(self):
        if not self.end > self.begin:
            raise ModelError(f"interval [{self.begin}, {self.end}) is empty")
        if self.budget < 0:
            raise ModelError("negative green budget")

    @property
    def length(self) -> float:
        return self.end - self.begin


@dataclass(frozen=True)
class PowerProfile:
    intervals: tuple[Interval, ...]

    def __post_init__(self):
        object.__setattr__(self, "intervals", tuple(self.intervals))
        if not self.intervals:
            raise ModelError("profile needs at least one interval")
        if self.intervals[0].begin != 0:
            raise ModelError("profile must start at 0")
        for a, b in zip(self.intervals, self.intervals[1:]):
            if abs(a.end - b.begin) > EPS:
                raise ModelError(f"profile not contiguous at {a.end} / {b.begin}")

    @property
    def horizon(self) -> float:
        return self.intervals[-1].end

    @cached_property
    def begins(self) -> tuple[float, ...]:
        return tuple(iv.begin for iv in self.intervals)

    def locate(self, t: float) -> int:
        """Index j with begin_j <= t < end_j; clamped to the first/last interval."""
        import bisect

        j = bisect.bisect_right(self.begins, t) - 1
        return min(max(j, 0), len(self.intervals) - 1)


Entity = Union[int, tuple[int, int]]


@dataclass(frozen=True)
class ScheduledItem:
    """A task (``entity`` is a task id) or a message (``entity`` is ``(src, dst)``).

    ``resource`` is a processor id for tasks and a ``(p, q)`` processor-id pair
    for messages.
    """

    entity: Entity
    resource: Entity
    start: float
    duration: float

    @property
    def finish(self) -> float:
        return self.start + self.duration

    @property
    def is_task(self) -> bool:
        return not isinstance(self.entity, tuple)


@dataclass(frozen=True)
class Schedule:
    mapping: Mapping[int, int]
    items: tuple[ScheduledItem, ...] = field(default=())

    def task_items(self) -> dict[int, ScheduledItem]:
        return {it.entity: it for it in self.items if it.is_task}

    def comm_items(self) -> dict[tuple[int, int], ScheduledItem]:
        return {it.entity: it for it in self.items if not it.is_task}


@dataclass(frozen=True)
class Instance:
    workflow: Workflow
    cluster: Cluster
    profile: PowerProfile
    deadline: float

    def __post_init__(self):
        if not self.deadline > 0:
            raise ModelError("deadline must be positive")
        if self.deadline > self.profile.horizon + EPS:
            raise ModelError(f"deadline {self.deadline} exceeds profile horizon {self.profile.horizon}")

    def with_deadline(self, deadline: float) -> "Instance":
        return Instance(self.workflow, self.cluster, self.profile, deadline)


def task_duration(v: Task, p: Processor) -> float:
    return v.work / p.speed


def comm_duration(e: Edge, mapping: Mapping[int, int], c: Cluster) -> float:
    """Zero when both endpoints share a processor, else data over bandwidth."""
    p, q = mapping[e.src], mapping[e.dst]
    if p == q:
        return 0.0
    return e.data / c.channel(c.index[p], c.index[q]).bandwidth


# --- JSON documents ---------------------------------------------------------


def _load(doc) -> dict:
    if isinstance(doc, (bytes, bytearray)):
        doc = doc.decode()
    if isinstance(doc, str):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise ModelError(f"parse error: {exc}") from None
    if not isinstance(doc, dict):
        raise ModelError("expected a JSON object")
    return doc


def _field(obj: dict, key: str, kind=float):
    try:
        value = obj[key]
    except (KeyError, TypeError):
        raise ModelError(f"missing field {key!r} in {obj!r}") from None
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ModelError(f"field {key!r} must be an integer, got {value!r}")
        return value
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ModelError(f"field {key!r} must be a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ModelError(f"field {key!r} must be finite")
    return value


def load_workflow(doc) -> Workflow:
    d = _load(doc)
    tasks = [Task(_field(t, "id", int), _field(t, "work")) for t in d.get("tasks", [])]
    edges = [Edge(_field(e, "src", int), _field(e, "dst", int), _field(e, "data")) for e in d.get("edges", [])]
    return Workflow(tuple(tasks), tuple(edges))


def workflow_to_dict(w: Workflow) -> dict:
    return {
        "tasks": [{"id": t.id, "work": t.work} for t in w.tasks],
        "edges": [{"src": e.src, "dst": e.dst, "data": e.data} for e in w.edges],
    }


def load_cluster(doc) -> Cluster:
    """Parse a cluster document; channels are listed explicitly or generated from ``link_power``."""
    d = _load(doc)
    procs = tuple(
        Processor(_field(p, "id", int), _field(p, "speed"), _field(p, "idle_power"), _field(p, "work_power"))
        for p in d.get("processors", [])
    )
    if "channels" in d:
        chans = tuple(
            CommChannel(
                _field(c, "src", int),
                _field(c, "dst", int),
                _field(c, "idle_power"),
                _field(c, "work_power"),
                float(c.get("bandwidth", BETA)),
            )
            for c in d["channels"]
        )
        return Cluster(procs, chans)
    if "link_power" in d:
        from .genlab import LinkStats, make_channels

        lp = d["link_power"]
        stats = LinkStats(
            _field(lp, "idle_mean"), _field(lp, "idle_std"), _field(lp, "work_mean"), _field(lp, "work_std")
        )
        seed = _field(lp, "seed", int) if "seed" in lp else 0
        return Cluster(procs, make_channels([p.id for p in procs], stats, seed))
    return Cluster(procs, ())


def cluster_to_dict(c: Cluster) -> dict:
    return {
        "processors": [
            {"id": p.id, "speed": p.speed, "idle_power": p.idle_power, "work_power": p.work_power}
            for p in c.processors
        ],
        "channels": [
            {
                "src": ch.src_proc,
                "dst": ch.dst_proc,
                "idle_power": ch.idle_power,
                "work_power": ch.work_power,
                "bandwidth": ch.bandwidth,
            }
            for ch in c.channels
        ],
    }


def load_profile(doc) -> PowerProfile:
    d = _load(doc)
    ivs = tuple(Interval(_field(i, "begin"), _field(i, "end"), _field(i, "budget")) for i in d.get("intervals", []))
    return PowerProfile(ivs)


def profile_to_dict(p: PowerProfile) -> dict:
    return {"intervals": [{"begin": i.begin, "end": i.end, "budget": i.budget} for i in p.intervals]}


def schedule_to_dict(s: Schedule) -> dict:
    items = []
    for it in s.items:
        if it.is_task:
            ent, res = {"task": it.entity}, {"proc": it.resource}
        else:
            ent, res = {"comm": list(it.entity)}, {"channel": list(it.resource)}
        items.append({"entity": ent, "resource": res, "start": it.start, "duration": it.duration})
    return {"mapping": {str(k): v for k, v in sorted(s.mapping.items())}, "items": items}


def load_schedule(doc) -> Schedule:
    d = _load(doc)
    try:
        mapping = {int(k): int(v) for k, v in d["mapping"].items()}
        items = []
        for it in d["items"]:
            ent, res = it["entity"], it["resource"]
            if "task" in ent:
                entity, resource = int(ent["task"]), int(res["proc"])
            else:
                entity = (int(ent["comm"][0]), int(ent["comm"][1]))
                resource = (int(res["channel"][0]), int(res["channel"][1]))
            items.append(ScheduledItem(entity, resource, float(it["start"]), float(it["duration"])))
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise ModelError(f"malformed schedule document: {exc!r}") from None
    return Schedule(mapping, tuple(items))


def dumps(obj: dict) -> str:
    return json.dumps(obj, indent=1, sort_keys=False)


def read_json(path) -> dict:
    try:
        with open(path) as fh:
            return _load(fh.read())
    except OSError as exc:
        raise ModelError(f"cannot read {path}: {exc.strerror}") from None


__all__ = [
    "EPS",
    "BETA",
    "GreenflowError",
    "ModelError",
    "HorizonExceeded",
    "InfeasibleDeadline",
    "Task",
    "Edge",
    "Workflow",
    "Processor",
    "CommChannel",
    "Cluster",
    "Interval",
    "PowerProfile",
    "ScheduledItem",
    "Schedule",
    "Instance",
    "topological_order",
    "task_duration",
    "comm_duration",
    "load_workflow",
    "workflow_to_dict",
    "load_cluster",
    "cluster_to_dict",
    "load_profile",
    "profile_to_dict",
    "load_schedule",
    "schedule_to_dict",
]
