"""Distribution of the optimal cost-to-go, and what the baselines derive from it.

``S[x, k]`` is the probability that the cheapest solution below a node with
feature ``x`` costs more than ``k``.  Children of different actions are
independent, so

    S(x, k) = prod_a sum_y kappa(x, a, y) * S(y, k - c(y)),   S(., j<0) = 1,

with ``S(goal, k) = 0``.  Features without legal actions that are not goals
(the dead end of the truncated tree model) get ``S = 1``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .problem import ILLEGAL, AbstractProblem


class NoSolutionError(ArithmeticError):
    pass


@dataclass(frozen=True, eq=False)
class SurvivalTable:
    S: np.ndarray  # shape (n_features, C_max + 1)
    C_max: int
    problem_hash: str = ""

    def potential_lists(self):
        """``PT[x][C]`` for ``C`` in ``0..C_max + 1`` as nested lists."""
        pt = np.zeros((self.S.shape[0], self.C_max + 2))
        pt[:, 1:] = 1.0 - self.S
        return pt.tolist()

    def h_hat_list(self):
        return self.S[:, : self.C_max].sum(axis=1).tolist()


def survival_table(problem: AbstractProblem, C_max: int) -> SurvivalTable:
    nf = problem.n_features
    S = np.ones((nf, C_max + 1))
    goals = problem.goals
    legal = [[row for row in problem.kernel[x] if row is not ILLEGAL] for x in range(nf)]
    for k in range(C_max + 1):
        for x in range(nf):
            if x in goals:
                S[x, k] = 0.0
                continue
            prod = 1.0
            for row in legal[x]:
                acc = 0.0
                for y, q in row:
                    j = k - problem.step_cost[y]
                    acc += q * (S[y, j] if j >= 0 else 1.0)
                prod *= acc
            S[x, k] = prod
    return SurvivalTable(S, C_max, problem.digest())


def potential(table: SurvivalTable, x: int, C_rel: int) -> float:
    """Probability of a solution costing strictly less than ``C_rel`` below ``x``."""
    if C_rel < 1:
        return 0.0
    k = min(C_rel - 1, table.C_max)
    return 1.0 - float(table.S[x, k])


def expected_cost_to_go(table: SurvivalTable, x: int) -> float:
    """``E[min(h*, C_max)]`` for a node with feature ``x``."""
    return float(table.S[x, : table.C_max].sum())


def expected_optimal_cost(table: SurvivalTable, h0: int, C_max: int | None = None):
    """``(E[h* | h* <= C_max], Pr(h* <= C_max))`` from the root feature."""
    if C_max is None:
        C_max = table.C_max
    if C_max > table.C_max:
        raise ValueError(f"table only covers costs up to {table.C_max}")
    row = table.S[h0]
    coverage = 1.0 - float(row[C_max])
    if coverage <= 0.0:
        raise NoSolutionError(f"no solution within {C_max} from feature {h0}")
    mean = (float(row[:C_max].sum()) - C_max * float(row[C_max])) / coverage
    return mean, coverage


def write_tables_csv(table: SurvivalTable, path) -> None:
    """Long-format dump with a ``kind`` column: S, PT and h_hat rows."""
    nf, K = table.S.shape
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kind", "x", "k", "value"])
        for x in range(nf):
            for k in range(K):
                w.writerow(["S", x, k, f"{table.S[x, k]:.12g}"])
        for x in range(nf):
            for C in range(K + 1):
                w.writerow(["PT", x, C, f"{potential(table, x, C):.12g}"])
        for x in range(nf):
            w.writerow(["h_hat", x, "", f"{expected_cost_to_go(table, x):.12g}"])
