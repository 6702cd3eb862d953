"""Instance generation: clusters, layered workflows, power profiles, hardness fixtures."""

from __future__ import annotations

import csv
import json
import math
import random
from dataclasses import dataclass
from importlib import resources
from typing import Optional, Sequence

import numpy as np

from .model import (
    CommChannel,
    Cluster,
    Edge,
    Instance,
    Interval,
    ModelError,
    PowerProfile,
    Processor,
    Task,
    Workflow,
)

NodeSpec = tuple  # (speed, idle_power, work_power)


@dataclass(frozen=True)
class LinkStats:
    """Normal-distribution parameters for channel idle and work power."""

    idle_mean: float
    idle_std: float
    work_mean: float
    work_std: float

    @classmethod
    def default_for(cls, specs: Sequence[NodeSpec], share: float = 0.05, rel_std: float = 0.2) -> "LinkStats":
        idle = share * float(np.mean([s[1] for s in specs]))
        work = share * float(np.mean([s[2] for s in specs]))
        return cls(idle, rel_std * idle, work, rel_std * work)


def make_channels(proc_ids: Sequence[int], stats: LinkStats, seed=0) -> tuple[CommChannel, ...]:
    """One channel per ordered processor pair, in lexicographic order; powers clipped at 0."""
    rng = np.random.default_rng(seed)
    ids = sorted(proc_ids)
    out = []
    for p in ids:
        for q in ids:
            if p == q:
                continue
            idle = max(0.0, float(rng.normal(stats.idle_mean, stats.idle_std)))
            work = max(0.0, float(rng.normal(stats.work_mean, stats.work_std)))
            out.append(CommChannel(p, q, idle, work))
    return tuple(out)


def gen_cluster(node_specs: Sequence[NodeSpec], copies: int, link_stats: Optional[LinkStats] = None,
                seed=0) -> Cluster:
    if copies < 1:
        raise ValueError("copies must be >= 1")
    if not node_specs:
        raise ValueError("need at least one node spec")
    stats = link_stats or LinkStats.default_for(node_specs)
    procs = []
    for speed, idle, work in node_specs:
        for _ in range(copies):
            procs.append(Processor(len(procs), float(speed), float(idle), float(work)))
    return Cluster(tuple(procs), make_channels([p.id for p in procs], stats, seed))


def load_node_specs(path=None) -> list[NodeSpec]:
    """Node specs from a JSON file; defaults to the bundled sample (illustrative values only)."""
    if path is None:
        text = resources.files("greenflow").joinpath("data/node_specs.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    doc = json.loads(text)
    return [(float(n["speed"]), float(n["idle_power"]), float(n["work_power"])) for n in doc["nodes"]]


def gen_layered_dag(n_tasks: int, layers: int, edge_density: float, mean_speed: float, seed=0,
                    rel_std: float = 0.25, ccr: float = 1.0, bandwidth: float = 1.0) -> Workflow:
    """Random layered DAG with edges only between consecutive layers.

    Works are drawn around ``mean_speed`` so a task takes about one time
    unit on an average node; edge data is drawn around ``ccr * bandwidth``
    so a message takes about ``ccr`` units.
    """
    if layers < 1 or n_tasks < layers:
        raise ValueError("need layers >= 1 and n_tasks >= layers")
    rng = np.random.default_rng(seed)
    sizes = np.ones(layers, dtype=int)
    extra = rng.integers(0, layers, size=n_tasks - layers)
    np.add.at(sizes, extra, 1)
    bounds = np.concatenate([[0], np.cumsum(sizes)])

    def draw(mean, k):
        return np.maximum(rng.normal(mean, rel_std * mean, size=k), 0.01 * mean)

    works = draw(mean_speed, n_tasks)
    tasks = tuple(Task(i, float(works[i])) for i in range(n_tasks))
    pairs = []
    for l in range(1, layers):
        prev = np.arange(bounds[l - 1], bounds[l])
        for v in range(bounds[l], bounds[l + 1]):
            hit = prev[rng.random(len(prev)) < edge_density]
            if len(hit) == 0:
                hit = [prev[rng.integers(len(prev))]]
            pairs.extend((int(u), v) for u in hit)
    data = draw(ccr * bandwidth, len(pairs)) if pairs else []
    edges = tuple(Edge(u, int(v), float(d)) for (u, v), d in zip(pairs, data))
    return Workflow(tasks, edges)


# --- power profiles ---------------------------------------------------------


def rescale_intensity(x: float, x_min: float, x_max: float, p_min: float, p_max: float) -> float:
    """Map a carbon intensity onto a green budget: x_min -> p_max, x_max -> p_min."""
    if x_max == x_min:
        return (p_min + p_max) / 2
    return p_max - (x - x_min) / (x_max - x_min) * (p_max - p_min)


def power_range(c: Cluster, dyn_fraction: float) -> tuple[float, float]:
    p_min = math.fsum(p.idle_power for p in c.processors) + math.fsum(ch.idle_power for ch in c.channels)
    dyn = math.fsum(p.work_power for p in c.processors) + math.fsum(ch.work_power for ch in c.channels)
    return p_min, p_min + dyn_fraction * dyn


def profile_from_intensities(series: Sequence[float], c: Cluster, horizon: float,
                             len_range: tuple[int, int] = (10, 50), dyn_fraction: float = 0.2,
                             seed=0) -> PowerProfile:
    lo, hi = int(len_range[0]), int(len_range[1])
    if lo < 1 or hi < lo:
        raise ValueError(f"bad interval length range {len_range}")
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    rng = random.Random(seed)
    cuts = [0.0]
    while cuts[-1] < horizon:
        cuts.append(min(cuts[-1] + rng.randint(lo, hi), horizon))
    J = len(cuts) - 1
    if len(series) < J:
        raise ModelError(f"intensity series has {len(series)} values, need {J}")
    if any(x < 0 for x in series):
        raise ModelError("negative carbon intensity")
    at = rng.randint(0, len(series) - J)
    sub = [float(x) for x in series[at:at + J]]
    x_min, x_max = min(sub), max(sub)
    p_min, p_max = power_range(c, dyn_fraction)
    return PowerProfile(tuple(
        Interval(cuts[j], cuts[j + 1], rescale_intensity(sub[j], x_min, x_max, p_min, p_max)) for j in range(J)
    ))


def load_intensity_csv(path) -> list[float]:
    """Read the ``intensity`` column of a ``timestamp,intensity`` CSV, in row order."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise ModelError(f"cannot read {path}: {exc.strerror}") from None
    try:
        return [float(r["intensity"]) for r in rows]
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelError(f"{path}: bad intensity column ({exc})") from None


REGIONS = {
    # mean, daily swing, noise std, AR(1) weight
    "germany": (380.0, 90.0, 60.0, 0.9),
    "california": (240.0, 130.0, 25.0, 0.7),
}


def synthetic_intensity(region: str, n: int, seed=0) -> list[float]:
    """Hourly carbon-intensity stand-in: a daily solar dip plus AR(1) noise."""
    try:
        mean, swing, noise, ar = REGIONS[region]
    except KeyError:
        raise ValueError(f"unknown region {region!r}; known: {sorted(REGIONS)}") from None
    rng = np.random.default_rng(seed)
    hours = np.arange(n)
    daily = -swing * np.maximum(0.0, np.sin((hours % 24 - 6) / 12 * np.pi))
    eps = rng.normal(0.0, noise, size=n)
    drift = np.empty(n)
    acc = 0.0
    for i in range(n):
        acc = ar * acc + eps[i]
        drift[i] = acc
    return [float(x) for x in np.maximum(mean + daily + drift, 1.0)]


# --- hardness fixtures ------------------------------------------------------


def gen_3partition_instance(integers: Sequence[int], B: int) -> Instance:
    """One unit-speed processor, budget-1 windows of length B split by budget-0 unit gaps."""
    a = [int(x) for x in integers]
    if len(a) == 0 or len(a) % 3:
        raise ModelError("need 3n integers")
    if any(x <= 0 for x in a):
        raise ModelError("integers must be positive")
    n = len(a) // 3
    if sum(a) != n * B:
        raise ModelError(f"sum {sum(a)} != n*B = {n * B}")
    ivs = []
    t = 0
    for k in range(n):
        ivs.append(Interval(t, t + B, 1.0))
        t += B
        if k < n - 1:
            ivs.append(Interval(t, t + 1, 0.0))
            t += 1
    w = Workflow(tuple(Task(i, float(x)) for i, x in enumerate(a)))
    c = Cluster((Processor(0, 1.0, 0.0, 1.0),))
    return Instance(w, c, PowerProfile(tuple(ivs)), float(t))
