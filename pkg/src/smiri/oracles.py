"""Brute-force and Monte Carlo references for the tables and the searchers."""

from __future__ import annotations

import heapq
import math
import random
from dataclasses import dataclass

from .problem import ILLEGAL, AbstractProblem
from .rstar import RStarTable
from .tree import TreeInstance


class EnumerationBudgetExceeded(RuntimeError):
    pass


def optimal_cost_in_instance(instance: TreeInstance, C_max: int | None = None,
                             max_nodes: int = 20_000_000):
    """Cheapest goal with cost < ``C_max`` in the instance, or None.

    Depth-first branch and bound: a node at depth ``g`` with feature ``x``
    cannot reach a goal cheaper than ``g + x``, so such subtrees are skipped
    once they cannot beat the best goal found so far.
    """
    if C_max is None:
        C_max = instance.params.C_max
    best = C_max
    x0 = instance.params.h0
    if x0 == 0:
        return 0
    step = instance.step
    stack = [(0, x0, instance.root_hash)]
    nodes = 0
    while stack:
        g, x, h = stack.pop()
        if g + x >= best:
            continue
        for a in (1, 0):
            nodes += 1
            if nodes > max_nodes:
                raise EnumerationBudgetExceeded(f"more than {max_nodes} nodes generated")
            hc, xc = step(h, x, a)
            if xc == 0:
                if g + 1 < best:
                    best = g + 1
            elif g + 1 + xc < best:
                stack.append((g + 1, xc, hc))
    return best if best < C_max else None


@dataclass(frozen=True)
class RateEstimate:
    mean_delta: float
    mean_time: float
    rate: float
    samples: int
    std_error: float
    success_rate: float = 0.0


def _sample(rng, row):
    u = rng.random()
    acc = 0.0
    for y, q in row:
        acc += q
        if u < acc:
            return y
    return row[-1][0]


def mc_estimate_rate(problem: AbstractProblem, table: RStarTable, e, samples: int,
                     seed: int = 0) -> RateEstimate:
    """Simulate the threshold macro-action of edge class ``e = (C, x, a)``.

    Expand the edge, then keep expanding the best out-edge (by table rate)
    of the sampled subtree whose rate is at least that of ``e``, stopping at
    the first goal cheaper than ``C`` or when no such edge is left.
    """
    C, x, a = e
    if problem.kernel[x][a] is ILLEGAL:
        raise ValueError(f"({x}, {a}) is illegal")
    if samples < 1:
        raise ValueError("need at least one sample")
    rs = table.r_star
    thresh = float(rs[C, x, a])
    kernel, cost, goals = problem.kernel, problem.step_cost, problem.goals
    legal = [[b for b, r in enumerate(kernel[y]) if r is not ILLEGAL] for y in range(problem.n_features)]
    rng = random.Random(seed)
    sum_d = sum_t = sum_dd = sum_tt = sum_dt = 0.0
    wins = 0
    for _ in range(samples):
        heap = [(-thresh, 0, 0, x, a)]
        t = 0
        delta = 0.0
        tick = 1
        while heap:
            _, _, g, px, pa = heapq.heappop(heap)
            t += 1
            y = _sample(rng, kernel[px][pa])
            gy = g + cost[y]
            if y in goals:
                if gy < C:
                    delta = float(C - gy)
                    break
                continue
            C_rel = C - gy
            if C_rel < 1:
                continue
            for b in legal[y]:
                r = float(rs[C_rel, y, b])
                if r >= thresh:
                    heapq.heappush(heap, (-r, tick, gy, y, b))
                    tick += 1
        if delta > 0.0:
            wins += 1
        sum_d += delta
        sum_t += t
        sum_dd += delta * delta
        sum_tt += t * t
        sum_dt += delta * t
    n = samples
    md, mt = sum_d / n, sum_t / n
    rate = md / mt
    if n > 1:
        vd = (sum_dd - n * md * md) / (n - 1)
        vt = (sum_tt - n * mt * mt) / (n - 1)
        cdt = (sum_dt - n * md * mt) / (n - 1)
        var = (vd - 2 * rate * cdt + rate * rate * vt) / (mt * mt * n)
        se = math.sqrt(max(var, 0.0))
    else:
        se = math.inf
    return RateEstimate(md, mt, rate, n, se, wins / n)


@dataclass(frozen=True)
class RateCheck:
    edge: tuple
    table_rate: float
    estimate: RateEstimate
    m_one: bool

    @property
    def deviation(self) -> float:
        return self.estimate.rate - self.table_rate

    @property
    def z(self) -> float:
        if self.estimate.std_error > 0:
            return self.deviation / self.estimate.std_error
        return 0.0 if abs(self.deviation) <= 1e-12 else math.inf

    @property
    def relative_deviation(self) -> float:
        if self.table_rate == 0:
            return 0.0 if abs(self.deviation) <= 1e-12 else math.inf
        return abs(self.deviation) / self.table_rate

    @property
    def status(self) -> str:
        """``pass``/``FAIL`` for exact (m = 1) classes, ``ok``/``flag`` otherwise."""
        if self.m_one:
            return "pass" if abs(self.z) <= 3.0 else "FAIL"
        return "flag" if self.relative_deviation > 0.25 else "ok"


def validate_rates(problem: AbstractProblem, table: RStarTable, samples: int, seed: int = 0,
                   C_limit: int = 4, x_limit: int = 4) -> list[RateCheck]:
    """Monte Carlo check of every legal non-goal class with ``C <= C_limit`` and ``x <= x_limit``."""
    checks = []
    k = 0
    for C in range(1, min(C_limit, table.C_max) + 1):
        for x in range(min(x_limit + 1, problem.n_features)):
            for a in problem.legal_actions(x):
                est = mc_estimate_rate(problem, table, (C, x, a), samples, seed=seed * 7919 + k)
                k += 1
                checks.append(RateCheck((C, x, a), float(table.r_star[C, x, a]), est,
                                        bool(table.m_one[C, x, a])))
    return checks
