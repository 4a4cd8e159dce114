"""Benchmark harness: test cases, discounted cost metric, profiles, CSV output.

A run writes the raw traces (``improvements.csv``) and a copy of the
configuration; every summary file is then derived from those two by
:func:`build_report`, so ``report`` can regenerate them from disk alone.
"""

from __future__ import annotations

import csv
import math
import os
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from functools import lru_cache
from pathlib import Path

from .dptables import expected_optimal_cost, survival_table
from .rstar import FAILURE_TIME_RULES, TableError, load_table, precompute_r_star
from .search import (ALL_POLICIES, ImprovementTrace, SearchTables, as_policy,
                     observation_digest, run_anytime)
from .svgplot import profile_plot
from .tree import TreeInstance, TreeModelParams, make_tree_problem

CONFIG_HEADER = "smiri-bench 1"
DEFAULT_SEED = 982_451_653
PROFILE_POINTS = 201

IMPROVEMENTS_CSV = "improvements.csv"
SUMMARY_CSV = "summary.csv"
PROFILE_CSV = "profile.csv"
CASES_CSV = "cases.csv"
CONFIG_FILE = "config.txt"


@dataclass(frozen=True)
class TestCaseConfig:
    __test__ = False  # keep pytest from collecting this

    case_id: int
    p: float
    h0: int
    C_max: int
    N: int
    gamma: float | None = None
    instances: int = 1000
    master_seed: int = DEFAULT_SEED
    failure_time: str = "literal"

    def __post_init__(self):
        if self.gamma is None:
            object.__setattr__(self, "gamma", 1.0 - 2.0 / self.N)
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.instances < 1:
            raise ValueError("need at least one instance")
        if self.N < 1:
            raise ValueError("budget must be positive")
        if self.failure_time not in FAILURE_TIME_RULES:
            raise ValueError(f"unknown failure_time {self.failure_time!r}")
        TreeModelParams(self.p, self.h0, self.C_max)

    @property
    def params(self) -> TreeModelParams:
        return TreeModelParams(self.p, self.h0, self.C_max)

    def instance(self, i: int) -> TreeInstance:
        return TreeInstance(self.params, self.master_seed, self.case_id, i)


_STANDARD_CASES = (
    # p, h0, C_max, N
    (0.1, 20, 250, 2_000_000),
    (0.2, 100, 300, 2_000_000),
    (0.2, 50, 150, 500_000),
    (0.2, 20, 80, 10_000),
    (0.4, 50, 80, 4_000),
    (0.6, 50, 70, 1_000),
)


def builtin_cases() -> list[TestCaseConfig]:
    """The six standard test cases, hardest first."""
    return [
        TestCaseConfig(i, p, h0, C, N, instances=100 if i <= 2 else 1000)
        for i, (p, h0, C, N) in enumerate(_STANDARD_CASES, start=1)
    ]


def builtin_case(case_id: int) -> TestCaseConfig:
    for c in builtin_cases():
        if c.case_id == case_id:
            return c
    raise KeyError(f"no built-in case {case_id}")


# -- config files ----------------------------------------------------------------

_FIELDS = ("p", "h0", "C_max", "N", "gamma", "instances", "seed", "failure_time")


def dumps_config(cases) -> str:
    lines = [CONFIG_HEADER]
    for c in cases:
        lines.append(
            f"case {c.case_id} p={c.p!r} h0={c.h0} C_max={c.C_max} N={c.N} "
            f"gamma={c.gamma!r} instances={c.instances} seed={c.master_seed} "
            f"failure_time={c.failure_time}"
        )
    return "\n".join(lines) + "\n"


def loads_config(text: str) -> list[TestCaseConfig]:
    """Parse a config file.  Omitted fields fall back to the built-in case."""
    lines = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines or lines[0] != CONFIG_HEADER:
        raise ValueError(f"config must start with {CONFIG_HEADER!r}")
    cases = []
    for ln in lines[1:]:
        words = ln.split()
        if words[0] != "case" or len(words) < 2:
            raise ValueError(f"bad config line: {ln!r}")
        case_id = int(words[1])
        kv = {}
        for w in words[2:]:
            k, sep, v = w.partition("=")
            if not sep or k not in _FIELDS:
                raise ValueError(f"bad field {w!r} in line {ln!r}")
            kv[k] = v
        try:
            base = builtin_case(case_id)
        except KeyError:
            base = None
        missing = [k for k in ("p", "h0", "C_max", "N") if k not in kv]
        if base is None and missing:
            raise ValueError(f"case {case_id} is not built in and lacks {missing}")
        c = TestCaseConfig(
            case_id,
            float(kv["p"]) if "p" in kv else base.p,
            int(kv["h0"]) if "h0" in kv else base.h0,
            int(kv["C_max"]) if "C_max" in kv else base.C_max,
            int(kv["N"]) if "N" in kv else base.N,
            float(kv["gamma"]) if "gamma" in kv else None,
            int(kv["instances"]) if "instances" in kv else (base.instances if base else 1000),
            int(kv["seed"]) if "seed" in kv else DEFAULT_SEED,
            kv.get("failure_time", "literal"),
        )
        cases.append(c)
    return cases


def read_config(path) -> list[TestCaseConfig]:
    return loads_config(Path(path).read_text())


def write_config(cases, path) -> None:
    Path(path).write_text(dumps_config(cases))


# -- metrics ---------------------------------------------------------------------


def _segment_weight(gamma, first, last):
    """``sum_{k=first}^{last} gamma**(k-1)`` for ``1 <= first <= last``."""
    lg = math.log(gamma)
    return math.exp((first - 1) * lg) * -math.expm1((last - first + 1) * lg) / (1.0 - gamma)


def discounted_total_cost(trace: ImprovementTrace, gamma: float, N: int, C_max: int,
                          e_copt: float) -> float:
    """Discounted sum of incumbent costs over ``N`` expansions, normalized.

    The cost charged for expansion ``k`` is the incumbent after ``k``
    expansions; the normalizer is the same sum for an agent that holds a
    solution of cost ``e_copt`` from the start.
    """
    if e_copt <= 0:
        raise ValueError("e_copt must be positive")
    J = 0.0
    cost, first = C_max, 1
    for s, c in zip(trace.steps, trace.costs):
        if s > N:
            break
        if s > first:
            J += cost * _segment_weight(gamma, first, s - 1)
        cost, first = c, s
    if first <= N:
        J += cost * _segment_weight(gamma, first, N)
    return J / (e_copt * _segment_weight(gamma, 1, N))


def naive_discounted_total_cost(trace, gamma, N, C_max, e_copt) -> float:
    """Step-by-step version of :func:`discounted_total_cost`, for checking."""
    J = norm = 0.0
    w = 1.0
    for k in range(1, N + 1):
        J += w * trace.incumbent_at(k)
        norm += w * e_copt
        w *= gamma
    return J / norm


def quality_profile(traces, grid_points: int, e_copt: float, N: int | None = None):
    """Mean suboptimality at ``grid_points`` evenly spaced fractions of the budget."""
    if grid_points < 2:
        raise ValueError("need at least two grid points")
    if not traces:
        raise ValueError("no traces")
    if N is None:
        N = traces[0].budget
    n = grid_points - 1
    out = []
    for i in range(grid_points):
        k = i * N // n
        mean = math.fsum(t.incumbent_at(k) for t in traces) / len(traces)
        out.append((i / n, mean / e_copt))
    return out


def mean_and_se(values):
    m = math.fsum(values) / len(values)
    se = statistics.stdev(values) / math.sqrt(len(values)) if len(values) > 1 else 0.0
    return m, se


# -- running ---------------------------------------------------------------------


def table_path(table_dir, case: TestCaseConfig) -> Path:
    return Path(table_dir) / f"rstar_case{case.case_id}_{case.failure_time}.npz"


@lru_cache(maxsize=8)
def case_tables(case: TestCaseConfig, table_dir: str | None = None) -> SearchTables:
    """r* and survival tables for ``case``, loaded from ``table_dir`` when present."""
    problem = make_tree_problem(case.params)
    rstar = None
    if table_dir is not None:
        path = table_path(table_dir, case)
        if path.exists():
            rstar = load_table(path, problem)
            if rstar.C_max != case.C_max or rstar.failure_time != case.failure_time:
                raise TableError(f"{path} does not match case {case.case_id}")
    if rstar is None:
        rstar = precompute_r_star(problem, case.C_max, keep_edges_f=False,
                                  failure_time=case.failure_time)
    return SearchTables(problem.digest(), rstar, survival_table(problem, case.C_max))


def _run_chunk(case, algorithms, ids, table_dir):
    tables = case_tables(case, table_dir)
    out = []
    for i in ids:
        inst = case.instance(i)
        for algo in algorithms:
            tr = run_anytime(algo, inst, tables, case.N)
            out.append((as_policy(algo).name, i, tr.steps, tr.costs))
    return out


def run_case(case: TestCaseConfig, algorithms=ALL_POLICIES, workers: int = 1,
             table_dir=None, instances=None):
    """Run every algorithm on every instance; return ``{algo: {instance: trace}}``."""
    names = [as_policy(a).name for a in algorithms]
    ids = list(range(case.instances)) if instances is None else list(instances)
    tdir = None if table_dir is None else str(table_dir)
    if workers <= 1 or len(ids) < 2:
        rows = _run_chunk(case, names, ids, tdir)
    else:
        chunks = [ids[k::workers] for k in range(workers)]
        rows = []
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for part in pool.map(_run_chunk, [case] * workers, [names] * workers, chunks,
                                 [tdir] * workers):
                rows.extend(part)
    result = {n: {} for n in names}
    for name, i, steps, costs in rows:
        result[name][i] = ImprovementTrace(list(steps), list(costs), case.N, case.C_max)
    return result


def shared_observations_agree(case: TestCaseConfig, instance_id: int, algorithms=ALL_POLICIES,
                              N: int | None = None, table_dir=None) -> bool:
    """True when every pair of algorithms saw the same feature on each common history."""
    tables = case_tables(case, None if table_dir is None else str(table_dir))
    inst = case.instance(instance_id)
    budget = case.N if N is None else N
    obs = [run_anytime(a, inst, tables, budget, record_observations=True).observations
           for a in algorithms]
    for i in range(len(obs)):
        for j in range(i + 1, len(obs)):
            common = obs[i].keys() & obs[j].keys()
            if observation_digest(obs[i], common) != observation_digest(obs[j], common):
                return False
    return True


def _fmt(v: float) -> str:
    return f"{v:.12g}"


def write_improvements(path, case_results) -> None:
    """``case_results`` is a list of ``(case, {algo: {instance: trace}})``.

    Each run contributes a stanza starting with a step 0 row at ``C_max``,
    followed by one row per improvement.
    """
    rows = []
    for case, by_algo in case_results:
        for algo, by_inst in by_algo.items():
            for i, tr in by_inst.items():
                rows.append((case.case_id, algo, i, [(0, case.C_max)] + list(zip(tr.steps, tr.costs))))
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["case", "algo", "instance", "step", "cost"])
        for case_id, algo, i, events in rows:
            for s, c in events:
                w.writerow([case_id, algo, i, s, c])


def read_improvements(path):
    """Inverse of :func:`write_improvements`: ``{case: {algo: {instance: [(step, cost)]}}}``."""
    out = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            events = (out.setdefault(int(row["case"]), {})
                      .setdefault(row["algo"], {})
                      .setdefault(int(row["instance"]), []))
            s = int(row["step"])
            if s > 0:
                events.append((s, int(row["cost"])))
    return out


@dataclass
class CaseSummary:
    case: TestCaseConfig
    e_copt: float
    coverage: float
    ndtc: dict          # algo -> (mean, std error)
    final: dict         # algo -> mean final suboptimality
    profiles: dict      # algo -> [(fraction, mean suboptimality)]
    instances: dict     # algo -> number of traces


def summarize_case(case: TestCaseConfig, by_algo: dict) -> CaseSummary:
    S = survival_table(make_tree_problem(case.params), case.C_max)
    e_copt, coverage = expected_optimal_cost(S, case.h0, case.C_max)
    ndtc, final, profiles, counts = {}, {}, {}, {}
    for algo, by_inst in by_algo.items():
        traces = [by_inst[i] for i in sorted(by_inst)]
        vals = [discounted_total_cost(t, case.gamma, case.N, case.C_max, e_copt) for t in traces]
        ndtc[algo] = mean_and_se(vals)
        final[algo] = math.fsum(t.final_cost for t in traces) / len(traces) / e_copt
        profiles[algo] = quality_profile(traces, PROFILE_POINTS, e_copt, case.N)
        counts[algo] = len(traces)
    return CaseSummary(case, e_copt, coverage, ndtc, final, profiles, counts)


def _algo_order(names):
    rank = {p.value: k for k, p in enumerate(ALL_POLICIES)}
    return sorted(names, key=lambda n: (rank.get(n, len(rank)), n))


def build_report(out_dir, cases=None) -> list[CaseSummary]:
    """Derive summary, profile and plot files from ``improvements.csv`` and the config."""
    out = Path(out_dir)
    if cases is None:
        cases = read_config(out / CONFIG_FILE)
    raw = read_improvements(out / IMPROVEMENTS_CSV)
    summaries = []
    for case in sorted(cases, key=lambda c: c.case_id):
        if case.case_id not in raw:
            continue
        by_algo = {
            algo: {i: ImprovementTrace([s for s, _ in ev], [c for _, c in ev], case.N, case.C_max)
                   for i, ev in by_inst.items()}
            for algo, by_inst in raw[case.case_id].items()
        }
        summaries.append(summarize_case(case, by_algo))
    with open(out / SUMMARY_CSV, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["case", "algo", "mean_discounted_cost", "std_error", "mean_final_suboptimality", "instances"])
        for sm in summaries:
            for algo in _algo_order(sm.ndtc):
                m, se = sm.ndtc[algo]
                w.writerow([sm.case.case_id, algo, _fmt(m), _fmt(se), _fmt(sm.final[algo]), sm.instances[algo]])
    with open(out / PROFILE_CSV, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["case", "algo", "fraction", "mean_suboptimality"])
        for sm in summaries:
            for algo in _algo_order(sm.profiles):
                for t, v in sm.profiles[algo]:
                    w.writerow([sm.case.case_id, algo, _fmt(t), _fmt(v)])
    with open(out / CASES_CSV, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["case", "p", "h0", "C_max", "N", "gamma", "instances", "e_copt", "coverage"])
        for sm in summaries:
            c = sm.case
            w.writerow([c.case_id, _fmt(c.p), c.h0, c.C_max, c.N, _fmt(c.gamma), c.instances,
                        _fmt(sm.e_copt), _fmt(sm.coverage)])
    for sm in summaries:
        curves = {a: sm.profiles[a] for a in _algo_order(sm.profiles)}
        title = f"Case {sm.case.case_id}: T({sm.case.p}, {sm.case.h0}), N = {sm.case.N}"
        (out / f"profile_case{sm.case.case_id}.svg").write_text(profile_plot(curves, title))
    return summaries


def run_benchmark(cases, algorithms=ALL_POLICIES, out_dir="bench-out", workers: int = 1,
                  table_dir=None, progress=None) -> list[CaseSummary]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise PermissionError(f"cannot write to {out}")
    cases = sorted(cases, key=lambda c: c.case_id)
    results = []
    for case in cases:
        if progress is not None:
            progress(f"case {case.case_id}: {case.instances} instances x {len(algorithms)} algorithms, N = {case.N}")
        results.append((case, run_case(case, algorithms, workers, table_dir)))
    write_config(cases, out / CONFIG_FILE)
    write_improvements(out / IMPROVEMENTS_CSV, results)
    return build_report(out, cases)


def format_summary(summaries) -> str:
    lines = []
    for sm in summaries:
        c = sm.case
        lines.append(f"case {c.case_id}  T({c.p}, {c.h0})  C_max={c.C_max}  N={c.N}  "
                     f"gamma={c.gamma:.9g}  E[C_opt]={sm.e_copt:.4f}  coverage={sm.coverage:.6f}")
        for algo in _algo_order(sm.ndtc):
            m, se = sm.ndtc[algo]
            lines.append(f"  {algo:6s} {m:.4f} +- {se:.4f}   final {sm.final[algo]:.4f}")
    return "\n".join(lines)


def with_instances(case: TestCaseConfig, n: int) -> TestCaseConfig:
    return replace(case, instances=n)
