"""Command line entry point: ``greenflow <command> ...``.

Exit codes: 0 success, 1 invalid input, 2 infeasible deadline,
3 internal invariant breach.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from typing import Optional, Sequence

from . import bench, genlab
from .cwm import CwmParams, InvariantBreach, run_cwm
from .evaluate import carbon_cost, is_valid, makespan, validate_schedule
from .heft_sl import schedule_heft_sl
from .model import (
    GreenflowError,
    InfeasibleDeadline,
    Instance,
    ModelError,
    cluster_to_dict,
    dumps,
    load_cluster,
    load_profile,
    load_schedule,
    load_workflow,
    profile_to_dict,
    read_json,
    schedule_to_dict,
    workflow_to_dict,
)

log = logging.getLogger("greenflow")

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_INVARIANT = 0, 1, 2, 3


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def default_seed() -> int:
    raw = os.environ.get("GREENFLOW_SEED")
    if raw is None or raw == "":
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ModelError(f"GREENFLOW_SEED must be an integer, got {raw!r}") from None


def _seed(args) -> int:
    return args.seed if args.seed is not None else default_seed()


def _write(text: str, path: Optional[str]) -> None:
    if path is None or path == "-":
        sys.stdout.write(text + "\n")
        return
    try:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    except OSError as exc:
        raise ModelError(f"cannot write {path}: {exc.strerror}") from None


def _instance_parts(args):
    w = load_workflow(read_json(args.workflow))
    c = load_cluster(read_json(args.cluster))
    p = load_profile(read_json(args.profile))
    return w, c, p


# --- gen ---------------------------------------------------------------------


def cmd_gen(args) -> int:
    seed = _seed(args)
    if args.kind == "workflow":
        if args.mean_speed is not None:
            mean_speed = args.mean_speed
        elif args.cluster:
            speeds = load_cluster(read_json(args.cluster)).speeds
            mean_speed = sum(speeds) / len(speeds)
        else:
            raise ModelError("gen workflow needs --cluster or --mean-speed")
        w = genlab.gen_layered_dag(args.tasks, args.layers, args.density, mean_speed, seed=seed, ccr=args.ccr)
        _write(dumps(workflow_to_dict(w)), args.out)
    elif args.kind == "cluster":
        specs = genlab.load_node_specs(args.specs)
        c = genlab.gen_cluster(specs, args.copies, seed=seed)
        _write(dumps(cluster_to_dict(c)), args.out)
    elif args.kind == "profile":
        if not args.cluster:
            raise ModelError("gen profile needs --cluster")
        c = load_cluster(read_json(args.cluster))
        if args.intensity:
            series = genlab.load_intensity_csv(args.intensity)
        else:
            series = genlab.synthetic_intensity(args.region, args.series_length, seed=seed)
        prof = genlab.profile_from_intensities(series, c, args.horizon, (args.min_len, args.max_len),
                                               args.dyn_fraction, seed=seed)
        _write(dumps(profile_to_dict(prof)), args.out)
    elif args.kind == "fixture3p":
        inst = genlab.gen_3partition_instance(args.integers, args.B)
        doc = {
            "workflow": workflow_to_dict(inst.workflow),
            "cluster": cluster_to_dict(inst.cluster),
            "profile": profile_to_dict(inst.profile),
            "deadline": inst.deadline,
        }
        _write(dumps(doc), args.out)
    return EXIT_OK


# --- schedule / evaluate ------------------------------------------------------


def _params(args, seed: int) -> CwmParams:
    base = {}
    if args.params:
        base = read_json(args.params)
    params = CwmParams.from_dict(base) if base else CwmParams()
    over = {k: getattr(args, k) for k in ("tau", "phi", "retries") if getattr(args, k) is not None}
    if args.keep_best is not None:
        over["keep_best"] = args.keep_best
    if args.seed is not None or "seed" not in base:
        over["seed"] = seed
    return replace(params, **over)


def cmd_schedule(args) -> int:
    w, c, p = _instance_parts(args)
    seed = _seed(args)
    if args.deadline is not None and args.alpha is not None:
        log.warning("both --deadline and --alpha given; using --deadline")
    if args.deadline is not None:
        D = args.deadline
    elif args.alpha is not None:
        probe = Instance(w, c, p, p.horizon)
        D = bench.deadline_from_alpha(makespan(schedule_heft_sl(probe, seed)), args.alpha)
    else:
        raise ModelError("give --deadline or --alpha")
    inst = Instance(w, c, p, D)
    algo = bench.canonical_algo(args.algo)
    if algo == "heft_sl":
        s = schedule_heft_sl(inst, seed)
    else:
        s, _ = run_cwm(inst, _params(args, seed))
    if not is_valid(validate_schedule(s, inst)):
        raise InvariantBreach("emitted schedule does not validate")
    _write(dumps(schedule_to_dict(s)), args.out)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    w, c, p = _instance_parts(args)
    inst = Instance(w, c, p, args.deadline)
    s = load_schedule(read_json(args.schedule))
    violations = validate_schedule(s, inst)
    report = {
        "valid": is_valid(violations),
        "makespan": makespan(s),
        "violations": [v.to_dict() for v in violations],
        "carbon": carbon_cost(s, inst).to_dict(),
    }
    _write(json.dumps(report, indent=1), args.out)
    return EXIT_OK


# --- bench ---------------------------------------------------------------------


def _load_matrix(path):
    m = read_json(path)
    if "desk" in m:
        specs = bench.desk_instances(**m["desk"])
    else:
        specs = []
        for d in m.get("instances", []):
            def part(key, loader):
                v = d[key]
                return loader(read_json(v) if isinstance(v, str) else v)

            specs.append(bench.InstanceSpec(str(d["id"]), part("workflow", load_workflow),
                                            part("cluster", load_cluster), part("profile", load_profile)))
    params = CwmParams.from_dict(m.get("params", {}))
    return (specs, m.get("algorithms", list(bench.ALGORITHMS)), m.get("alphas", [1.2, 1.5, 2.0]),
            m.get("seeds", [0]), params, bool(m.get("timing", True)))


def cmd_bench(args) -> int:
    try:
        specs, algos, alphas, seeds, params, timing = _load_matrix(args.matrix)
    except (KeyError, TypeError) as exc:
        raise ModelError(f"malformed matrix file: {exc!r}") from None
    if args.no_timing:
        timing = False
    rows = bench.run_suite(specs, algos, alphas, seeds, params, out_path=args.out, jobs=args.jobs, timing=timing)
    if args.import_competitor:
        rows = rows + bench.import_competitor(args.import_competitor)
        bench.export_results(rows, "csv", args.out)
    bad = sum(1 for r in rows if not r.feasible)
    log.info("%d rows written to %s (%d infeasible)", len(rows), args.out, bad)
    return EXIT_OK


def cmd_profile_curve(args) -> int:
    rows = bench.load_results(args.results)
    costs = bench.costs_by_instance(rows)
    costs = {k: v for k, v in costs.items() if len(v) == len({r.algorithm for r in rows})}
    curve = bench.performance_profile_curve(costs)
    bench.export_curve(curve, args.out)
    return EXIT_OK


# --- parser --------------------------------------------------------------------


def _bool(text: str) -> bool:
    t = text.lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def build_parser() -> Parser:
    ap = Parser(prog="greenflow", description="Carbon-aware workflow scheduling toolkit.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", parser_class=Parser)
    sub.required = True

    g = sub.add_parser("gen", help="generate workflows, clusters, profiles and fixtures")
    g.add_argument("kind", choices=["workflow", "cluster", "profile", "fixture3p"])
    g.add_argument("--seed", type=int)
    g.add_argument("--out")
    g.add_argument("--tasks", type=int, default=100)
    g.add_argument("--layers", type=int, default=10)
    g.add_argument("--density", type=float, default=0.3)
    g.add_argument("--ccr", type=float, default=1.0, help="mean message time relative to a unit task")
    g.add_argument("--mean-speed", type=float)
    g.add_argument("--cluster", help="cluster JSON (profile and workflow generation)")
    g.add_argument("--specs", help="node spec JSON; defaults to the bundled sample")
    g.add_argument("--copies", type=int, default=2)
    g.add_argument("--horizon", type=float, default=1000.0)
    g.add_argument("--min-len", type=int, default=10)
    g.add_argument("--max-len", type=int, default=50)
    g.add_argument("--dyn-fraction", type=float, default=0.2)
    g.add_argument("--intensity", help="carbon intensity CSV (timestamp,intensity)")
    g.add_argument("--region", default="germany", choices=sorted(genlab.REGIONS))
    g.add_argument("--series-length", type=int, default=24 * 60)
    g.add_argument("--integers", type=int, nargs="+")
    g.add_argument("-B", type=int)
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("schedule", help="compute a schedule")
    s.add_argument("--algo", required=True, choices=["heft-sl", "heft_sl", "cwm"])
    for name in ("workflow", "cluster", "profile"):
        s.add_argument(f"--{name}", required=True)
    s.add_argument("--deadline", type=float)
    s.add_argument("--alpha", type=float)
    s.add_argument("--params", help="CWM params JSON")
    s.add_argument("--tau", type=float)
    s.add_argument("--phi", type=int)
    s.add_argument("--retries", type=int)
    s.add_argument("--keep-best", type=_bool)
    s.add_argument("--seed", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_schedule)

    e = sub.add_parser("evaluate", help="validate a schedule and report its carbon cost")
    e.add_argument("--schedule", required=True)
    for name in ("workflow", "cluster", "profile"):
        e.add_argument(f"--{name}", required=True)
    e.add_argument("--deadline", type=float, required=True)
    e.add_argument("--out")
    e.set_defaults(func=cmd_evaluate)

    b = sub.add_parser("bench", help="run an experiment matrix")
    b.add_argument("--matrix", required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("--import-competitor")
    b.add_argument("--no-timing", action="store_true", help="record wall times as 0 for reproducible files")
    b.set_defaults(func=cmd_bench)

    pc = sub.add_parser("profile-curve", help="performance profile from a results CSV")
    pc.add_argument("--results", required=True)
    pc.add_argument("--out", required=True)
    pc.set_defaults(func=cmd_profile_curve)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INPUT
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except InfeasibleDeadline as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except InvariantBreach as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (GreenflowError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
