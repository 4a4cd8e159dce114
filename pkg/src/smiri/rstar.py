"""Lookup table of peak incremental rates of improvement.

An edge class ``(C, x, a)`` groups every out-edge whose parent has feature
``x`` and sits ``C`` below the incumbent cost.  For each class we estimate
what happens if the searcher commits to that edge and keeps expanding the
descendants whose own rate is at least as high: the success probability
``p_s``, the expected expansions spent in successful and failed outcomes
(``t_s``, ``t_f``), the expected improvement ``delta`` and the peak rate
``r_star = delta / (t_s + t_f)``.

Rows are filled by dynamic programming in increasing ``C``; a row only ever
refers to rows with strictly smaller bound because step costs are >= 1.

Failure-side time.  After a descendant met ``m`` times under child ``y``
fails, the rule as usually written adds ``t_f / (1 - p_s)`` to ``t(y)``,
once, although ``t_suc`` charges the same descendant ``m`` times.  That is
the default (``failure_time="literal"``).  ``failure_time="scaled"`` adds
``m * t_f / (1 - p_s)`` instead, which tracks simulated macro-action times
much more closely when ``m`` is large.

Goal features have no legal actions.  Reaching a goal child is booked
through a synthetic *claim* action (index ``problem.n_actions``) whose rows
have ``p_s = 1``, ``delta = C``, zero time and an infinite rate.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from math import exp, expm1, log, log1p
from pathlib import Path

import numpy as np

from .problem import ILLEGAL, AbstractProblem, validate_problem

INF = math.inf
TABLE_FORMAT = "smiri-rstar"
TABLE_VERSION = 1
FAILURE_TIME_RULES = ("literal", "scaled")
DEFAULT_MAX_ENTRIES = 50_000_000


class TableError(ValueError):
    pass


@dataclass(frozen=True)
class EdgeClassStats:
    p_s: float = 0.0
    t_s: float = 0.0
    t_f: float = 0.0
    delta: float = 0.0
    r_star: float = 0.0
    edges_f: dict = field(default_factory=dict)


ZERO_ROW = EdgeClassStats()


def _phi2(z):
    # (e^z - 1 - z) / z^2 without cancellation near 0
    if abs(z) < 1e-3:
        return 0.5 + z * (1 / 6 + z * (1 / 24 + z * (1 / 120 + z / 720)))
    return (expm1(z) - z) / (z * z)


def geometric_sums(s, q, m):
    """Return ``(p_suc, S0, S1)`` for a descendant seen ``m`` times.

    ``s`` is its success probability and ``q = 1 - s`` (passed separately
    so that callers can supply an accurate value near ``s = 1``).
    ``p_suc = 1 - q**m``, ``S0 = sum_{k<m} q**k`` and
    ``S1 = sum_{k<m} k * q**k``, continued analytically to real ``m > 0``.
    """
    if q <= 0.0:
        return 1.0, 1.0, 0.0
    if s <= 0.0:
        return 0.0, m, 0.5 * m * (m - 1.0)
    L = log1p(-s) if s < 0.5 else log(q)
    p_suc = -expm1(m * L)
    S0 = p_suc / s
    n = m - 1.0
    a = n * L
    if abs(a) > 1.0:
        S1 = ((q - exp(m * L) * (1.0 + n * s)) / s) / s
    else:
        r = L / s
        S1 = q * r * r * (n * n * (1.0 - _phi2(a) * (1.0 - a)) + n * exp(a) * _phi2(L))
    return p_suc, S0, S1


class RStarTable:
    """Dense ``[C][x][a]`` table of edge class statistics.

    Row ``C = 0`` is allocated but always zero; action index
    ``n_actions`` holds the goal claim rows.
    """

    def __init__(self, problem_hash, C_max, n_features, n_actions, arrays, defined, edges_f=None,
                 failure_time="literal"):
        self.problem_hash = problem_hash
        self.failure_time = failure_time
        self.C_max = C_max
        self.n_features = n_features
        self.n_actions = n_actions
        self.claim = n_actions
        self.p_s = arrays["p_s"]
        self.t_s = arrays["t_s"]
        self.t_f = arrays["t_f"]
        self.delta = arrays["delta"]
        self.r_star = arrays["r_star"]
        self.m_one = arrays.get("m_one")
        self.defined = defined
        self.edges_f = edges_f

    @property
    def n_entries(self) -> int:
        return int(self.defined[1:].sum())

    def edge_id(self, C, x, a) -> int:
        return (C * self.n_features + x) * (self.n_actions + 1) + a

    def edge_class(self, eid):
        rest, a = divmod(eid, self.n_actions + 1)
        C, x = divmod(rest, self.n_features)
        return C, x, a

    def row(self, C, x, a) -> EdgeClassStats:
        ef = {}
        if self.edges_f is not None:
            ef = {self.edge_class(k): v for k, v in self.edges_f.get(self.edge_id(C, x, a), {}).items()}
        return EdgeClassStats(
            p_s=float(self.p_s[C, x, a]),
            t_s=float(self.t_s[C, x, a]),
            t_f=float(self.t_f[C, x, a]),
            delta=float(self.delta[C, x, a]),
            r_star=float(self.r_star[C, x, a]),
            edges_f=ef,
        )

    def rate_lists(self):
        """``r_star`` as nested Python lists ``[C][x][a]`` for fast scalar reads."""
        return self.r_star.tolist()


def r_star_lookup(table: RStarTable, C_rel: int, x: int, a: int) -> EdgeClassStats:
    if C_rel > table.C_max:
        raise ValueError(f"relative bound {C_rel} exceeds C_max={table.C_max}")
    if not 0 <= x < table.n_features or not 0 <= a <= table.n_actions:
        raise IndexError(f"edge class ({C_rel}, {x}, {a}) out of range")
    if C_rel <= 0:
        return ZERO_ROW
    if not table.defined[C_rel, x, a]:
        raise ValueError(f"({x}, {a}) is not a legal pair")
    return table.row(C_rel, x, a)


# -- precomputation ------------------------------------------------------------


class _Rows:
    """Flat per-edge-id storage used while the table is being filled."""

    def __init__(self, C_max, nf, na, scaled=False):
        n = (C_max + 1) * nf * (na + 1)
        self.scaled = scaled
        self.nf, self.na1 = nf, na + 1
        self.p_s = [0.0] * n
        self.fail = [1.0] * n  # 1 - p_s, kept separately for accuracy
        self.t_s = [0.0] * n
        self.t_f = [0.0] * n
        self.delta = [0.0] * n
        self.r_star = [0.0] * n
        self.m_one = [True] * n
        self.edges_f = {}

    def eid(self, C, x, a):
        return (C * self.nf + x) * self.na1 + a


class OutcomeAccumulator:
    """Working state for one edge class while its descendants are folded in."""

    __slots__ = ("rows", "p", "t", "freq", "queue", "queued", "processed",
                 "p_s", "t_s", "t_f", "delta", "r_star", "m_one")

    def __init__(self, rows):
        self.rows = rows
        self.p = {}
        self.t = {}
        self.freq = {}
        self.queue = []
        self.queued = set()
        self.processed = []
        self.p_s = self.t_s = self.t_f = self.delta = self.r_star = 0.0
        self.m_one = True

    def enqueue(self, eid):
        if eid not in self.queued:
            self.queued.add(eid)
            heapq.heappush(self.queue, (-self.rows.r_star[eid], eid))

    def failure_probability(self):
        return math.fsum(self.p.values())


def init_accumulator(problem: AbstractProblem, rows: _Rows, C, x, a) -> OutcomeAccumulator:
    """Children of ``(x, a)`` with their immediate descendant classes queued."""
    acc = OutcomeAccumulator(rows)
    claim = problem.n_actions
    for y, py in problem.kernel[x][a]:
        acc.p[y] = py
        acc.t[y] = 1.0
        C2 = C - problem.step_cost[y]
        if C2 < 1:
            # all rows with a non-positive bound are identically zero
            continue
        if y in problem.goals:
            children = (claim,)
        else:
            children = [b for b, r in enumerate(problem.kernel[y]) if r is not ILLEGAL]
        for b in children:
            e2 = rows.eid(C2, y, b)
            acc.freq.setdefault(e2, {})[y] = 1.0
            acc.enqueue(e2)
    return acc


def process_descendant(acc: OutcomeAccumulator, e2: int) -> None:
    """Fold descendant class ``e2`` into ``acc`` for every child it hangs under."""
    rows = acc.rows
    s, q = rows.p_s[e2], rows.fail[e2]
    ts2, tf2, d2 = rows.t_s[e2], rows.t_f[e2], rows.delta[e2]
    if s <= 0.0 and d2 > 0.0:
        raise ArithmeticError(f"edge {e2} has improvement {d2} with zero success probability")
    inherited = rows.edges_f.get(e2) if q > 0.0 else None
    per_y = acc.freq.pop(e2)
    for y, m in per_y.items():
        if m != 1.0:
            acc.m_one = False
        p_suc, S0, S1 = geometric_sums(s, q, m)
        t_suc = ts2 * S0
        if S1 and tf2:
            t_suc += tf2 * (s / q) * S1
        py = acc.p[y]
        acc.p_s += py * p_suc
        acc.t_s += py * (t_suc + p_suc * acc.t[y])
        if d2:
            acc.delta += py * d2 * S0  # == d2 * p_suc / p_s(e2)
        acc.p[y] = py * q ** m
        if q > 0.0:
            acc.t[y] += (m * tf2 if rows.scaled else tf2) / q
        if inherited:
            for e3, m2 in inherited.items():
                acc.freq.setdefault(e3, {})
                acc.freq[e3][y] = acc.freq[e3].get(y, 0.0) + m * m2
                acc.enqueue(e3)
    if not rows.m_one[e2]:
        acc.m_one = False


def finalize_edge_class(acc: OutcomeAccumulator, eid: int) -> EdgeClassStats:
    """Threshold loop: include descendants best-first while they beat the running rate."""
    rows = acc.rows
    queue = acc.queue
    while queue and -queue[0][0] >= acc.r_star:
        neg_r, e2 = heapq.heappop(queue)
        acc.processed.append((e2, -neg_r))
        if e2 not in acc.freq:
            continue
        process_descendant(acc, e2)
        acc.t_f = math.fsum(acc.p[y] * acc.t[y] for y in acc.p)
        total = acc.t_s + acc.t_f
        acc.r_star = acc.delta / total if total > 0.0 else 0.0
    acc.t_f = math.fsum(acc.p[y] * acc.t[y] for y in acc.p)
    fail = acc.failure_probability()
    edges_f = {}
    if fail > 0.0:
        # sum_y p(y) is 1 - p_s(e) computed without cancellation
        for e2, per_y in acc.freq.items():
            w = math.fsum(m * acc.p[y] for y, m in per_y.items()) / fail
            if w > 0.0:
                edges_f[e2] = w
    rows.p_s[eid] = acc.p_s
    rows.fail[eid] = fail
    rows.t_s[eid] = acc.t_s
    rows.t_f[eid] = acc.t_f
    rows.delta[eid] = acc.delta
    rows.r_star[eid] = acc.r_star
    rows.m_one[eid] = acc.m_one
    if edges_f:
        rows.edges_f[eid] = edges_f
    return EdgeClassStats(acc.p_s, acc.t_s, acc.t_f, acc.delta, acc.r_star, edges_f)


def precompute_r_star(problem: AbstractProblem, C_max: int,
                      max_entries: int = DEFAULT_MAX_ENTRIES, keep_edges_f: bool = True,
                      observer=None, failure_time: str = "literal") -> RStarTable:
    """Fill the r* table for bounds ``1..C_max``.

    ``observer(C, x, a, acc)`` is called after each non-goal row is
    finalized, with the accumulator still holding its processing log.
    """
    diags = validate_problem(problem)
    if diags:
        raise TableError("invalid problem: " + "; ".join(diags))
    if C_max < 1:
        raise ValueError("C_max must be >= 1")
    if failure_time not in FAILURE_TIME_RULES:
        raise ValueError(f"failure_time must be one of {FAILURE_TIME_RULES}, got {failure_time!r}")
    nf, na = problem.n_features, problem.n_actions
    W = C_max * nf * na
    if (C_max + 1) * nf * (na + 1) > max_entries:
        raise MemoryError(f"table too large: W = C_max*|F|*|A| = {W} exceeds cap {max_entries}")
    rows = _Rows(C_max, nf, na, scaled=failure_time == "scaled")
    claim = na
    goals = sorted(problem.goals)
    # pairs with identical kernel rows produce identical statistics
    pair_groups = {}
    for x, a in problem.legal_pairs():
        pair_groups.setdefault((x, problem.kernel[x][a]), []).append(a)
    for C in range(1, C_max + 1):
        for g in goals:
            e = rows.eid(C, g, claim)
            rows.p_s[e] = 1.0
            rows.fail[e] = 0.0
            rows.delta[e] = float(C)
            rows.r_star[e] = INF
        for (x, _), actions in pair_groups.items():
            a0 = actions[0]
            e0 = rows.eid(C, x, a0)
            acc = init_accumulator(problem, rows, C, x, a0)
            finalize_edge_class(acc, e0)
            if observer is not None:
                for a in actions:
                    observer(C, x, a, acc)
            for a in actions[1:]:
                e = rows.eid(C, x, a)
                for store in (rows.p_s, rows.fail, rows.t_s, rows.t_f, rows.delta, rows.r_star, rows.m_one):
                    store[e] = store[e0]
                if e0 in rows.edges_f:
                    rows.edges_f[e] = rows.edges_f[e0]
    shape = (C_max + 1, nf, na + 1)
    arrays = {
        "p_s": np.array(rows.p_s).reshape(shape),
        "t_s": np.array(rows.t_s).reshape(shape),
        "t_f": np.array(rows.t_f).reshape(shape),
        "delta": np.array(rows.delta).reshape(shape),
        "r_star": np.array(rows.r_star).reshape(shape),
        "m_one": np.array(rows.m_one, dtype=bool).reshape(shape),
    }
    defined = np.zeros(shape, dtype=bool)
    for x, a in problem.legal_pairs():
        defined[1:, x, a] = True
    for g in goals:
        defined[1:, g, claim] = True
    for name in ("p_s", "t_s", "t_f", "delta", "r_star"):
        arrays[name][0] = 0.0
        arrays[name][~defined] = 0.0
    return RStarTable(problem.digest(), C_max, nf, na, arrays, defined,
                      rows.edges_f if keep_edges_f else None, failure_time)


# -- persistence ---------------------------------------------------------------


def save_table(table: RStarTable, path) -> None:
    """Write an ``.npz`` dump; ``edges_f`` is not persisted."""
    meta = {
        "format": TABLE_FORMAT,
        "version": TABLE_VERSION,
        "problem_hash": table.problem_hash,
        "C_max": table.C_max,
        "n_features": table.n_features,
        "n_actions": table.n_actions,
        "failure_time": table.failure_time,
    }
    with open(path, "wb") as fh:
        np.savez_compressed(
            fh,
            meta=np.array(json.dumps(meta, sort_keys=True)),
            p_s=table.p_s, t_s=table.t_s, t_f=table.t_f, delta=table.delta,
            r_star=table.r_star, m_one=table.m_one, defined=table.defined,
        )


def load_table(path, problem: AbstractProblem | None = None) -> RStarTable:
    with np.load(Path(path), allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("format") != TABLE_FORMAT:
            raise TableError(f"{path}: not an r* table")
        if meta.get("version") != TABLE_VERSION:
            raise TableError(f"{path}: unsupported table version {meta.get('version')}")
        if problem is not None and meta["problem_hash"] != problem.digest():
            raise TableError(f"{path}: table was computed for a different problem")
        arrays = {k: data[k] for k in ("p_s", "t_s", "t_f", "delta", "r_star", "m_one")}
        defined = data["defined"]
    return RStarTable(meta["problem_hash"], meta["C_max"], meta["n_features"],
                      meta["n_actions"], arrays, defined, failure_time=meta.get("failure_time", "literal"))
