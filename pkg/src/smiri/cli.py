"""Command line entry point: ``python -m smiri {precompute,validate,run,report}``."""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from . import bench
from .dptables import expected_optimal_cost, survival_table, write_tables_csv
from .oracles import validate_rates
from .rstar import FAILURE_TIME_RULES, precompute_r_star, save_table
from .search import ALL_POLICIES, as_policy
from .tree import make_tree_problem


def _cases(args):
    if getattr(args, "config", None):
        cases = bench.read_config(args.config)
    else:
        cases = bench.builtin_cases()
    if args.case:
        wanted = set(args.case)
        cases = [c for c in cases if c.case_id in wanted]
        missing = wanted - {c.case_id for c in cases}
        if missing:
            raise SystemExit(f"unknown case(s): {sorted(missing)}")
    overrides = {}
    if getattr(args, "instances", None):
        overrides["instances"] = args.instances
    if getattr(args, "failure_time", None):
        overrides["failure_time"] = args.failure_time
    if getattr(args, "seed", None) is not None:
        overrides["master_seed"] = args.seed
    if overrides:
        from dataclasses import replace
        cases = [replace(c, **overrides) for c in cases]
    return cases


def cmd_precompute(args):
    cases = _cases(args)
    if len(cases) != 1 and args.out and not Path(args.out).is_dir():
        raise SystemExit("--out must be a directory when precomputing several cases")
    for case in cases:
        problem = make_tree_problem(case.params)
        t0 = time.perf_counter()
        table = precompute_r_star(problem, case.C_max, keep_edges_f=False,
                                  failure_time=case.failure_time)
        elapsed = time.perf_counter() - t0
        out = Path(args.out) if args.out else Path(".")
        if out.is_dir():
            out = bench.table_path(out, case)
        save_table(table, out)
        print(f"case {case.case_id}: {table.n_entries} rows in {elapsed:.1f}s -> {out}")
        if args.dp_csv:
            S = survival_table(problem, case.C_max)
            csv_path = out.with_name(out.stem + "_dp.csv")
            write_tables_csv(S, csv_path)
            e, cov = expected_optimal_cost(S, case.h0, case.C_max)
            print(f"  E[C_opt] = {e:.6f} (coverage {cov:.6f}); DP tables -> {csv_path}")
    return 0


def cmd_validate(args):
    bad = 0
    for case in _cases(args):
        problem = make_tree_problem(case.params)
        table = precompute_r_star(problem, min(args.max_c, case.C_max), failure_time=case.failure_time)
        checks = validate_rates(problem, table, args.samples, seed=args.seed or 0,
                                C_limit=args.max_c, x_limit=args.max_x)
        print(f"case {case.case_id}: p = {case.p}, {args.samples} samples per class")
        print(f"  {'class':>12} {'table':>9} {'estimate':>9} {'s.e.':>8} {'z':>7}  status")
        for c in checks:
            est = c.estimate
            print(f"  {str(c.edge):>12} {c.table_rate:9.5f} {est.rate:9.5f} {est.std_error:8.5f} "
                  f"{c.z:7.2f}  {c.status}")
        bad += sum(c.status == "FAIL" for c in checks)
        flagged = sum(c.status == "flag" for c in checks)
        print(f"  {len(checks)} classes, {bad} failed, {flagged} flagged (>25% off, non-exact)")
    return 1 if bad else 0


def cmd_run(args):
    cases = _cases(args)
    algos = [as_policy(a) for a in args.algo] if args.algo else list(ALL_POLICIES)
    t0 = time.perf_counter()
    summaries = bench.run_benchmark(cases, algos, args.out, workers=args.workers,
                                    table_dir=args.tables,
                                    progress=lambda m: print(m, file=sys.stderr, flush=True))
    print(bench.format_summary(summaries))
    print(f"wrote {args.out} in {time.perf_counter() - t0:.1f}s", file=sys.stderr)
    return 0


def cmd_report(args):
    summaries = bench.build_report(args.dir)
    print(bench.format_summary(summaries))
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="smiri", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    def case_args(p, many=True):
        p.add_argument("--case", type=int, action="append",
                       help="case id (repeatable; default: all)" if many else "case id")
        p.add_argument("--config", help="config file (default: built-in cases)")
        p.add_argument("--failure-time", choices=FAILURE_TIME_RULES,
                       help="failure-time rule for the r* table")

    p = sub.add_parser("precompute", help="build and save r* tables")
    case_args(p)
    p.add_argument("--out", help="output file, or directory for several cases")
    p.add_argument("--dp-csv", action="store_true", help="also dump S, PT and h_hat as CSV")
    p.set_defaults(func=cmd_precompute)

    p = sub.add_parser("validate", help="Monte Carlo check of small r* classes")
    case_args(p)
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-c", type=int, default=4)
    p.add_argument("--max-x", type=int, default=4)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="run the benchmark and write CSV and SVG output")
    case_args(p)
    p.add_argument("--algo", action="append", help="algorithm (repeatable; default: all five)")
    p.add_argument("--instances", type=int, help="override the instance count")
    p.add_argument("--seed", type=int, help="override the master seed")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--tables", help="directory of precomputed r* tables")
    p.add_argument("--out", default="bench-out")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="rebuild summaries and plots from improvements.csv")
    p.add_argument("dir")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)
