"""Command-line entry point: ``theatresched <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import random
import sys
import time
from pathlib import Path

from . import fileio
from .baseline import BaselineError, BaselinePlan, solve_baseline
from .capacity import compute_table
from .constructive import construct_into
from .engines import EngineParams, search
from .feasibility import check_feasibility, validate
from .generator import GeneratorConfig, generate, scaled_config
from .model import Instance
from .report import ExperimentReport, comparisons, format_table
from .rolling import PeriodConfig, run_planning_period, tiled_baseline
from .state import ScheduleState

log = logging.getLogger("theatresched")

METHOD_CHOICES = {"constructive": "constructive", "sa": "sa", "hyper-sa": "hyper_sa",
                  "hyper-sa-ts": "hyper_sa_ts"}


def parse_seeds(text: str) -> list[int]:
    """``30`` means seeds 0..29; ``3,7,9`` and ``10-19`` list them explicitly."""
    text = text.strip()
    if text.isdigit():
        n = int(text)
        if n < 1:
            raise argparse.ArgumentTypeError("at least one seed is needed")
        return list(range(n))
    seeds = []
    for part in text.split(","):
        lo, sep, hi = part.partition("-")
        try:
            seeds += list(range(int(lo), int(hi) + 1)) if sep else [int(lo)]
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from None
    if not seeds:
        raise argparse.ArgumentTypeError("at least one seed is needed")
    return seeds


def _horizon(text: str) -> int:
    h = int(text)
    if not 1 <= h <= 4:
        raise argparse.ArgumentTypeError("horizon must be between 1 and 4 weeks")
    return h


def _rho(text: str) -> float:
    v = float(text)
    if not 0 <= v <= 1:
        raise argparse.ArgumentTypeError("rho must be in [0, 1]")
    return v


def _engine_params(args, horizon: int) -> EngineParams:
    overrides = {}
    if getattr(args, "params", None):
        overrides = json.loads(Path(args.params).read_text())
        if not isinstance(overrides, dict):
            raise SystemExit(f"{args.params}: expected a JSON object of engine parameters")
        known = set(EngineParams.__dataclass_fields__)
        unknown = set(overrides) - known
        if unknown:
            raise SystemExit(f"{args.params}: unknown engine parameters {sorted(unknown)}")
    return EngineParams.for_horizon(horizon, args.budget, **overrides)


def _load_plan(args, inst: Instance, capacities) -> BaselinePlan:
    if getattr(args, "baseline", None):
        return fileio.load_baseline(args.baseline, inst)
    return solve_baseline(inst, capacities)


# commands ------------------------------------------------------------------

def cmd_gen(args) -> int:
    overrides = {"seed": args.seed}
    cfg = scaled_config(args.scale, **overrides) if args.scale != 1 else GeneratorConfig(**overrides)
    inst = generate(cfg)
    fileio.save_instance(inst, args.out)
    print(f"wrote {args.out}: {inst.num_surgeons} surgeons, {inst.num_ors} ORs, "
          f"{inst.num_specialties} specialties, {inst.num_patients} patients")
    return 0


def cmd_baseline(args) -> int:
    inst = fileio.load_instance(args.instance)
    try:
        plan = solve_baseline(inst, compute_table(inst))
    except BaselineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    fileio.save_baseline(plan, args.out)
    print(f"wrote {args.out}: {plan.objective} reservations, "
          f"{plan.reserved_capacity(inst)} non-elective places per week")
    return 0


def cmd_solve(args) -> int:
    base = fileio.load_instance(args.instance)
    capacities = compute_table(base)
    plan = _load_plan(args, base, capacities)
    inst = base.tile(args.horizon)
    method = METHOD_CHOICES[args.method]
    started = time.perf_counter()
    state = ScheduleState(inst, capacities, tiled_baseline(plan, base, args.horizon))
    construct_into(state)
    if method == "constructive":
        best = state.to_schedule()
    else:
        params = _engine_params(args, args.horizon).with_seed(args.seed)
        best = search(state, params, random.Random(params.seed), method, trace=False).best
    seconds = time.perf_counter() - started
    violations = check_feasibility(inst, best, capacities)
    if args.out:
        fileio.save_schedule(best, inst, args.out)
    print(f"method={args.method} horizon={args.horizon} objective={len(best.patient_assign)} "
          f"violations={len(violations)} seconds={seconds:.2f}")
    return 0 if not violations else 1


def cmd_roll(args) -> int:
    base = fileio.load_instance(args.instance)
    capacities = compute_table(base)
    plan = _load_plan(args, base, capacities)
    method = METHOD_CHOICES[args.method]
    report = ExperimentReport()
    for h in args.horizon:
        cfg = PeriodConfig(weeks=args.weeks, horizon=h, method=method, rho=args.rho,
                           budget=args.budget, arrival_seed=args.arrival_seed, verify=args.verify)
        params = None if method == "constructive" else _engine_params(args, h)
        part = run_planning_period(base, cfg, args.seeds, params, capacities, plan, args.workers)
        report = report.merged(part)
    text = report.to_csv(timing=not args.no_timing)
    if args.out:
        Path(args.out).write_text(text)
    print(format_table(report))
    return 0


def cmd_validate(args) -> int:
    base = fileio.load_instance(args.instance)
    capacities = compute_table(base)
    inst = base.tile(args.horizon) if args.horizon else base
    schedule = fileio.load_schedule(args.schedule, inst)
    prev = fileio.load_schedule(args.prev, inst) if args.prev else None
    violations = validate(inst, schedule, capacities, prev, args.rho)
    for v in violations:
        print(f"{v.constraint_id}\t{','.join(map(str, v.indices))}\t{v.detail}")
    print(f"{len(violations)} violation(s)", file=sys.stderr)
    return 0 if not violations else 1


def cmd_report(args) -> int:
    report = ExperimentReport()
    for path in args.files:
        report = report.merged(fileio.load_report(path))
    print(format_table(report))
    rows = comparisons(report)
    if rows:
        print()
        print("one-sided Welch tests (mean of A greater than mean of B)")
        for c in rows:
            print(f"  horizon {c['horizon']} {c['budget']}: {c['a']} vs {c['b']}  "
                  f"t={c['statistic']:.3f}  p={c['p_value']:.4f}")
    if args.out:
        Path(args.out).write_text(report.to_csv())
    return 0


# parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="theatresched", description="Operating theatre scheduling")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic instance")
    g.add_argument("--seed", type=int, default=GeneratorConfig.seed)
    g.add_argument("--scale", type=float, default=1.0, help="hospital size as a fraction of default")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    b = sub.add_parser("baseline", help="reserve weekly non-elective capacity")
    b.add_argument("--instance", required=True)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_baseline)

    def solver_flags(sp):
        sp.add_argument("--instance", required=True)
        sp.add_argument("--baseline", help="baseline file; solved from the instance if omitted")
        sp.add_argument("--method", choices=list(METHOD_CHOICES), default="hyper-sa")
        sp.add_argument("--budget", choices=("flat", "scaled"), default="flat")
        sp.add_argument("--params", help="JSON file overriding engine parameters")
        sp.add_argument("--out")

    s = sub.add_parser("solve", help="solve one scheduling horizon")
    solver_flags(s)
    s.add_argument("--horizon", type=_horizon, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_solve)

    r = sub.add_parser("roll", help="rolling-horizon planning period over several seeds")
    solver_flags(r)
    r.add_argument("--horizon", type=_horizon, nargs="+", default=[1])
    r.add_argument("--weeks", type=int, default=6)
    r.add_argument("--seeds", type=parse_seeds, default=parse_seeds("10"))
    r.add_argument("--rho", type=_rho, default=0.1)
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--arrival-seed", type=int, default=0)
    r.add_argument("--verify", action="store_true", help="check every step's feasibility")
    r.add_argument("--no-timing", action="store_true", help="write '-' for times (reproducible files)")
    r.set_defaults(func=cmd_roll)

    v = sub.add_parser("validate", help="list constraint violations; exit 0 iff feasible")
    v.add_argument("--instance", required=True)
    v.add_argument("--schedule", required=True)
    v.add_argument("--horizon", type=_horizon, help="weeks the schedule spans (default: instance)")
    v.add_argument("--prev", help="previous schedule, for the deviation limit")
    v.add_argument("--rho", type=_rho, default=0.1)
    v.set_defaults(func=cmd_validate)

    rp = sub.add_parser("report", help="merge result tables and compare methods")
    rp.add_argument("files", nargs="+")
    rp.add_argument("--out")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except fileio.FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
