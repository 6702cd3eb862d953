"""Experiment runner, cost ratios and performance profiles."""

from __future__ import annotations

import csv
import json
import math
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .cwm import CwmParams, run_cwm
from .evaluate import carbon_cost, is_valid, makespan, validate_schedule
from .genlab import gen_cluster, gen_layered_dag, load_node_specs, profile_from_intensities, synthetic_intensity
from .heft_sl import schedule_heft_sl
from .model import EPS, Cluster, GreenflowError, Instance, Interval, ModelError, PowerProfile, Workflow

ALGORITHMS = ("cwm", "heft_sl")
COLUMNS = ("instance_id", "algorithm", "alpha", "deadline", "carbon_cost", "makespan", "feasible",
           "wall_time_s", "seed")


def canonical_algo(name: str) -> str:
    key = name.strip().lower().replace("-", "_")
    if key not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {name!r}; expected one of {', '.join(ALGORITHMS)}")
    return key


@dataclass(frozen=True)
class RunResult:
    instance_id: str
    algorithm: str
    alpha: float
    deadline: float
    carbon_cost: float
    makespan: float
    feasible: bool
    wall_time_s: float
    seed: int

    def __post_init__(self):
        # imported rows may leave makespan and deadline unknown
        if self.feasible and self.makespan > self.deadline + EPS:
            raise ValueError(f"{self.instance_id}/{self.algorithm}: feasible row with makespan past the deadline")


@dataclass(frozen=True)
class InstanceSpec:
    """Workflow, cluster and profile; the deadline is set per run."""

    instance_id: str
    workflow: Workflow
    cluster: Cluster
    profile: PowerProfile

    def instance(self, deadline: float) -> Instance:
        return Instance(self.workflow, self.cluster, self.profile, deadline)


def deadline_from_alpha(M: float, alpha: float) -> float:
    if not alpha > 1:
        raise ValueError(f"alpha must be > 1 (alpha = 1 leaves no slack), got {alpha}")
    return alpha * M


def _infeasible(spec, algo, alpha, D, seed, wall) -> RunResult:
    return RunResult(spec.instance_id, algo, alpha, D, math.nan, math.nan, False, wall, seed)


def run_instance(spec: InstanceSpec, algorithms: Sequence[str], alphas: Sequence[float], seeds: Sequence[int],
                 params: CwmParams = CwmParams(), timing: bool = True) -> list[RunResult]:
    """All (seed, alpha, algorithm) runs for one instance, in canonical order."""
    algos = sorted(canonical_algo(a) for a in algorithms)
    clock = time.perf_counter if timing else (lambda: 0.0)
    rows = []
    for seed in sorted(seeds):
        probe = spec.instance(spec.profile.horizon)
        t0 = clock()
        heft = schedule_heft_sl(probe, seed)
        heft_time = clock() - t0
        M = makespan(heft)
        for alpha in sorted(alphas):
            D = deadline_from_alpha(M, alpha)
            for algo in algos:
                try:
                    inst = spec.instance(D)
                    if algo == "heft_sl":
                        s, wall = heft, heft_time
                    else:
                        t0 = clock()
                        s, _ = run_cwm(inst, replace(params, seed=seed))
                        wall = clock() - t0
                    if not is_valid(validate_schedule(s, inst)):
                        raise GreenflowError("schedule failed re-validation")
                    ms = makespan(s)
                    ok = ms <= D + EPS
                    cc = carbon_cost(s, inst).total_cost if ok else math.nan
                    rows.append(RunResult(spec.instance_id, algo, alpha, D, cc, ms, ok, wall, seed))
                except (GreenflowError, ValueError):
                    rows.append(_infeasible(spec, algo, alpha, D, seed, 0.0))
    return rows


def _run_job(job):
    return run_instance(*job)


def run_suite(instances: Sequence[InstanceSpec], algorithms: Iterable[str] = ALGORITHMS,
              alphas: Iterable[float] = (1.2, 1.5, 2.0), seeds: Iterable[int] = (0,),
              params: CwmParams = CwmParams(), out_path=None, jobs: int = 1,
              timing: bool = True) -> list[RunResult]:
    """Run the matrix; rows come out sorted by instance id and are appended to ``out_path`` as they finish."""
    algorithms, alphas, seeds = list(algorithms), list(alphas), list(seeds)
    for a in alphas:
        deadline_from_alpha(1.0, a)
    specs = sorted(instances, key=lambda s: s.instance_id)
    if len({s.instance_id for s in specs}) != len(specs):
        raise ValueError("instance ids must be unique")
    jobs_list = [(s, algorithms, alphas, seeds, params, timing) for s in specs]
    out = []
    fh = None
    if out_path is not None:
        fh = open(out_path, "w", newline="")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(COLUMNS)
    try:
        if jobs > 1:
            pool = ProcessPoolExecutor(max_workers=jobs)
            batches = pool.map(_run_job, jobs_list)
        else:
            pool = None
            batches = map(_run_job, jobs_list)
        for rows in batches:
            out.extend(rows)
            if fh is not None:
                for r in rows:
                    writer.writerow(_row(r))
                fh.flush()
        if pool is not None:
            pool.shutdown()
    finally:
        if fh is not None:
            fh.close()
    return out


# --- persistence ------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _row(r: RunResult) -> list[str]:
    return [_fmt(getattr(r, k)) for k in COLUMNS]


def _parse_row(d: Mapping[str, str], lenient: bool = False) -> RunResult:
    def num(k, default=math.nan):
        v = d.get(k)
        return default if v in (None, "") and lenient else float(v)

    feasible = str(d.get("feasible", "true")).strip().lower() in ("true", "1", "yes")
    return RunResult(
        instance_id=str(d["instance_id"]),
        algorithm=str(d["algorithm"]),
        alpha=num("alpha"),
        deadline=num("deadline"),
        carbon_cost=float(d["carbon_cost"]),
        makespan=num("makespan"),
        feasible=feasible,
        wall_time_s=num("wall_time_s"),
        seed=int(d["seed"]) if d.get("seed") not in (None, "") else 0,
    )


def export_results(results: Sequence[RunResult], fmt: str, path) -> None:
    try:
        with open(path, "w", newline="") as fh:
            if fmt == "csv":
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(COLUMNS)
                for r in results:
                    writer.writerow(_row(r))
            elif fmt == "json":
                json.dump([asdict(r) for r in results], fh, indent=1)
                fh.write("\n")
            else:
                raise ValueError(f"unknown format {fmt!r}")
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write results to {path}: {exc.strerror}") from None


def load_results(path) -> list[RunResult]:
    try:
        with open(path, newline="") as fh:
            if str(path).endswith(".json"):
                return [RunResult(**d) for d in json.load(fh)]
            return [_parse_row(d) for d in csv.DictReader(fh)]
    except OSError as exc:
        raise ModelError(f"cannot read {path}: {exc.strerror}") from None
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelError(f"{path}: malformed results ({exc})") from None


def import_competitor(path) -> list[RunResult]:
    """Rows produced elsewhere (same columns; only instance_id, algorithm and carbon_cost are required)."""
    try:
        with open(path, newline="") as fh:
            return [_parse_row(d, lenient=True) for d in csv.DictReader(fh)]
    except OSError as exc:
        raise ModelError(f"cannot read {path}: {exc.strerror}") from None
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelError(f"{path}: malformed competitor results ({exc})") from None


def costs_by_instance(results: Iterable[RunResult], feasible_only: bool = True) -> dict[str, dict[str, float]]:
    """Group costs as ``{key: {algorithm: cost}}``; the key joins instance, alpha and seed."""
    out: dict[str, dict[str, float]] = {}
    for r in results:
        if feasible_only and not r.feasible:
            continue
        key = r.instance_id if math.isnan(r.alpha) else f"{r.instance_id}|a={r.alpha!r}|s={r.seed}"
        out.setdefault(key, {})[r.algorithm] = r.carbon_cost
    return out


# --- ratios -----------------------------------------------------------------


@dataclass(frozen=True)
class RatioSummary:
    ratios: dict  # (instance, algo) -> ratio
    geomean: dict  # algo -> geometric mean
    median: dict  # algo -> median


def cost_ratios(costs: Mapping[str, Mapping[str, float]], reference_algo: str = "cwm") -> RatioSummary:
    """(CC_ref + 1) / (CC_A + 1) for every competitor A of the reference algorithm."""
    ratios = {}
    per_algo: dict[str, list[float]] = {}
    algos = sorted({a for row in costs.values() for a in row} - {reference_algo})
    for inst in sorted(costs):
        row = costs[inst]
        if reference_algo not in row:
            raise ValueError(f"instance {inst!r} has no {reference_algo} result")
        for a in algos:
            if a not in row:
                raise ValueError(f"instance {inst!r} has no {a} result to pair with")
            r = (row[reference_algo] + 1) / (row[a] + 1)
            ratios[(inst, a)] = r
            per_algo.setdefault(a, []).append(r)
    geo = {a: math.exp(math.fsum(math.log(x) for x in v) / len(v)) for a, v in per_algo.items()}
    med = {a: statistics.median(v) for a, v in per_algo.items()}
    return RatioSummary(ratios, geo, med)


def performance_ratios(costs: Mapping[str, Mapping[str, float]]) -> dict[str, list[float]]:
    """Per algorithm, (CC + 1) / (best CC + 1) for every instance in sorted order."""
    if not costs:
        raise ValueError("no results")
    algos = sorted({a for row in costs.values() for a in row})
    out = {a: [] for a in algos}
    for inst in sorted(costs):
        row = costs[inst]
        missing = [a for a in algos if a not in row]
        if missing:
            raise ValueError(f"instance {inst!r} lacks results for {missing}")
        best = min(row.values())
        for a in algos:
            out[a].append((row[a] + 1) / (best + 1))
    return out


def default_thresholds(max_ratio: float, points: int = 200) -> list[float]:
    if max_ratio <= 1:
        return [1.0]
    grid = list(np.geomspace(1.0, max_ratio, points))
    grid[0], grid[-1] = 1.0, max_ratio
    return [float(x) for x in grid]


def performance_profile_curve(costs: Mapping[str, Mapping[str, float]],
                              thresholds: Optional[Sequence[float]] = None) -> dict[str, list[tuple[float, float]]]:
    """Fraction of instances whose ratio to the per-instance best is at most delta."""
    ratios = performance_ratios(costs)
    if thresholds is None:
        thresholds = default_thresholds(max(max(v) for v in ratios.values()))
    thresholds = list(thresholds)
    if any(b < a for a, b in zip(thresholds, thresholds[1:])) or (thresholds and thresholds[0] < 1):
        raise ValueError("thresholds must be ascending and >= 1")
    out = {}
    for a, rs in ratios.items():
        arr = np.sort(np.array(rs))
        out[a] = [(float(d), float(np.searchsorted(arr, d, side="right")) / len(arr)) for d in thresholds]
    return out


def export_curve(curve: Mapping[str, Sequence[tuple[float, float]]], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("algorithm", "delta", "fraction"))
        for a in sorted(curve):
            for d, f in curve[a]:
                writer.writerow((a, repr(d), repr(f)))


# --- desk benchmark ---------------------------------------------------------


def desk_instances(count: int = 20, seed: int = 0, copies: int = 2, sizes: tuple[int, int] = (100, 2000),
                   regions: Sequence[str] = ("germany", "california"), dyn_fraction: float = 0.2,
                   horizon_factor: float = 2.5, layer_width: int = 10,
                   edge_density: float = 0.25) -> list[InstanceSpec]:
    """Synthetic benchmark: one cluster, workflows of geometrically spaced sizes, one profile per region."""
    specs = load_node_specs()
    cluster = gen_cluster(specs, copies, seed=seed)
    mean_speed = float(np.mean(cluster.speeds))
    per_region = math.ceil(count / len(regions))
    ns = np.unique(np.round(np.geomspace(sizes[0], sizes[1], per_region)).astype(int))
    out = []
    k = 0
    for i, n in enumerate(ns):
        w = gen_layered_dag(int(n), max(1, int(n) // layer_width), edge_density, mean_speed, seed=seed * 1000 + i)
        probe = Instance(w, cluster, PowerProfile((Interval(0.0, 1e12, 0.0),)), 1e12)
        M = makespan(schedule_heft_sl(probe, seed))
        horizon = float(math.ceil(horizon_factor * M))
        for r, region in enumerate(regions):
            if k >= count:
                break
            series = synthetic_intensity(region, 24 * 60, seed=seed * 1000 + r)
            prof = profile_from_intensities(series, cluster, horizon, (10, 50), dyn_fraction,
                                            seed=seed * 1000 + 100 * r + i)
            out.append(InstanceSpec(f"desk-{k:02d}-n{int(n)}-{region}", w, cluster, prof))
            k += 1
    return out


def median_ratio(results: Sequence[RunResult], alpha: float) -> float:
    costs = costs_by_instance(r for r in results if r.alpha == alpha)
    return cost_ratios(costs, "cwm").median["heft_sl"]


def spec_to_dict(spec: InstanceSpec) -> dict:
    from .model import cluster_to_dict, profile_to_dict, workflow_to_dict

    return {"id": spec.instance_id, "workflow": workflow_to_dict(spec.workflow),
            "cluster": cluster_to_dict(spec.cluster), "profile": profile_to_dict(spec.profile)}


__all__ = [
    "RunResult", "InstanceSpec", "deadline_from_alpha", "run_instance", "run_suite", "export_results",
    "load_results", "import_competitor", "costs_by_instance", "cost_ratios", "performance_ratios",
    "performance_profile_curve", "default_thresholds", "export_curve", "desk_instances", "median_ratio",
]
