"""Random instance factories shared by the test modules."""

from __future__ import annotations

import math
import random

from greenflow.evaluate import base_power, makespan
from greenflow.genlab import gen_layered_dag
from greenflow.heft_sl import schedule_heft_sl
from greenflow.model import (
    Cluster,
    CommChannel,
    Edge,
    Instance,
    Interval,
    PowerProfile,
    Processor,
    Task,
    Workflow,
)


def chain(works, data=1.0) -> Workflow:
    tasks = tuple(Task(i + 1, float(w)) for i, w in enumerate(works))
    edges = tuple(Edge(i, i + 1, float(data)) for i in range(1, len(works)))
    return Workflow(tasks, edges)


def simple_cluster(speeds, idle=0.0, work=1.0, link_idle=0.0, link_work=0.0, bandwidth=1.0) -> Cluster:
    procs = tuple(Processor(k, float(s), float(idle), float(work)) for k, s in enumerate(speeds))
    chans = tuple(
        CommChannel(p, q, link_idle, link_work, bandwidth) for p in range(len(speeds)) for q in range(len(speeds)) if p != q
    )
    return Cluster(procs, chans)


def flat_profile(horizon, budget) -> PowerProfile:
    return PowerProfile((Interval(0.0, float(horizon), float(budget)),))


def random_cluster(rng: random.Random, P: int, integral: bool = False) -> Cluster:
    if integral:
        procs = [Processor(k, 1.0, float(rng.randint(0, 3)), float(rng.randint(1, 6))) for k in range(P)]
    else:
        procs = [Processor(k, rng.uniform(0.5, 4.0), rng.uniform(0, 5), rng.uniform(1, 10)) for k in range(P)]
    chans = []
    for p in range(P):
        for q in range(P):
            if p != q:
                if integral:
                    chans.append(CommChannel(p, q, float(rng.randint(0, 1)), float(rng.randint(0, 2))))
                else:
                    chans.append(CommChannel(p, q, rng.uniform(0, 0.3), rng.uniform(0, 1)))
    return Cluster(tuple(procs), tuple(chans))


def random_workflow(rng: random.Random, n: int, integral: bool = False) -> Workflow:
    if not integral and rng.random() < 0.5:
        layers = rng.randint(1, max(1, n // 3))
        return gen_layered_dag(n, layers, rng.uniform(0.1, 0.6), 1.0, seed=rng.randrange(1 << 30))
    density = rng.uniform(0.02, 0.4) if n < 40 else rng.uniform(1.0, 3.0) / n
    tasks = []
    for i in range(n):
        tasks.append(Task(i, float(rng.randint(1, 4)) if integral else rng.uniform(0.2, 3.0)))
    edges = []
    for j in range(n):
        for i in range(j):
            if rng.random() < density:
                d = float(rng.randint(0, 3)) if integral else rng.uniform(0.0, 3.0)
                edges.append(Edge(i, j, d))
    return Workflow(tuple(tasks), tuple(edges))


def random_profile(rng: random.Random, c: Cluster, horizon: float, integral: bool = False) -> PowerProfile:
    base = base_power(c)
    dyn = sum(p.work_power for p in c.processors)
    t = 0
    ivs = []
    while t < horizon:
        L = rng.randint(1, max(1, int(horizon // 4) or 1)) if integral else rng.uniform(0.5, max(1.0, horizon / 4))
        end = min(t + L, horizon)
        if integral:
            g = float(rng.randint(int(base) - 1 if base >= 1 else 0, int(base + dyn) + 1))
        else:
            g = rng.uniform(max(0.0, base - 1), base + dyn)
        ivs.append(Interval(t, end, g))
        t = end
    return PowerProfile(tuple(ivs))


def random_instance(seed, P=None, n=None, integral: bool = False, alpha=None) -> Instance:
    """Random instance whose horizon leaves room for deadlines up to 2.5x the HEFT-SL makespan."""
    rng = random.Random(seed)
    P = P if P is not None else rng.randint(2, 8)
    n = n if n is not None else rng.randint(5, 200)
    c = random_cluster(rng, P, integral)
    w = random_workflow(rng, n, integral)
    probe = Instance(w, c, flat_profile(1e9, 0.0), 1e9)
    M = makespan(schedule_heft_sl(probe, 0))
    horizon = float(math.ceil(2.5 * M) + 1)
    prof = random_profile(rng, c, horizon, integral)
    if alpha is None:
        alpha = rng.uniform(1.05, 2.2)
    D = alpha * M
    if integral:
        D = float(math.ceil(D))
    return Instance(w, c, prof, min(D, horizon))
