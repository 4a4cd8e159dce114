"""Finite abstract search problems.

An abstract problem is the prior over search problems that a search
algorithm reasons with: a finite feature space, a set of actions, a Markov
kernel giving the distribution of a child's feature from its parent's
feature and the action taken, per-feature step costs, and a goal set.

Features and actions are referred to by integer index.  Labels are kept
only for display and for the text file format.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

FORMAT_HEADER = "smiri-problem 1"


class _Illegal:
    __slots__ = ()

    def __repr__(self):
        return "ILLEGAL"

    def __reduce__(self):
        return "ILLEGAL"


ILLEGAL = _Illegal()
"""Kernel marker for an illegal (feature, action) pair."""


class ProblemError(ValueError):
    pass


@dataclass(frozen=True)
class AbstractProblem:
    """A finite abstract search problem.

    ``kernel[x][a]`` is either :data:`ILLEGAL` or a tuple of
    ``(child_feature, probability)`` pairs.
    """

    actions: tuple
    features: tuple
    initial: int
    goals: frozenset
    step_cost: tuple
    kernel: tuple

    @property
    def n_features(self) -> int:
        return len(self.features)

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    def is_goal(self, x: int) -> bool:
        return x in self.goals

    def legal_actions(self, x: int) -> list[int]:
        return [a for a, row in enumerate(self.kernel[x]) if row is not ILLEGAL]

    def legal_pairs(self):
        for x in range(self.n_features):
            for a in self.legal_actions(x):
                yield x, a

    def digest(self) -> str:
        """SHA-256 of the canonical text serialization."""
        return hashlib.sha256(dumps_problem(self).encode()).hexdigest()


def make_problem(actions, features, initial, goals, step_cost, kernel) -> AbstractProblem:
    """Build a problem from plain Python containers.

    ``kernel`` may be a nested list or a mapping ``(x, a) -> row``; missing
    entries of a mapping are illegal.
    """
    actions = tuple(str(a) for a in actions)
    features = tuple(str(f) for f in features)
    if isinstance(kernel, dict):
        rows = [[ILLEGAL] * len(actions) for _ in features]
        for (x, a), row in kernel.items():
            rows[x][a] = row
        kernel = rows
    frozen = tuple(
        tuple(
            ILLEGAL if row is ILLEGAL or row is None
            else tuple((int(y), float(q)) for y, q in row)
            for row in per_x
        )
        for per_x in kernel
    )
    return AbstractProblem(
        actions=actions,
        features=features,
        initial=int(initial),
        goals=frozenset(int(g) for g in goals),
        step_cost=tuple(int(c) if float(c).is_integer() else c for c in step_cost),
        kernel=frozen,
    )


def validate_problem(problem: AbstractProblem) -> list[str]:
    """Return one diagnostic string per violated invariant; empty if valid."""
    diags = []
    nf, na = problem.n_features, problem.n_actions
    if not 0 <= problem.initial < nf:
        diags.append(f"initial feature {problem.initial} out of range")
    for g in sorted(problem.goals):
        if not 0 <= g < nf:
            diags.append(f"goal feature {g} out of range")
    if len(problem.step_cost) != nf:
        diags.append(f"step cost list has {len(problem.step_cost)} entries, expected {nf}")
    for x, c in enumerate(problem.step_cost):
        if not isinstance(c, int) or isinstance(c, bool):
            diags.append(f"non-integer step cost {c!r} at feature {x}")
        elif c < 1:
            diags.append(f"non-positive step cost {c} at feature {x}")
    if len(problem.kernel) != nf:
        diags.append(f"kernel has {len(problem.kernel)} feature rows, expected {nf}")
        return diags
    for x, per_x in enumerate(problem.kernel):
        if len(per_x) != na:
            diags.append(f"kernel row for feature {x} has {len(per_x)} actions, expected {na}")
            continue
        for a, row in enumerate(per_x):
            if row is ILLEGAL:
                continue
            if x in problem.goals:
                diags.append(f"goal feature {x} has legal action {a}")
            if not row:
                diags.append(f"kernel ({x}, {a}) is legal but empty")
                continue
            bad = False
            for y, q in row:
                if not 0 <= y < nf:
                    diags.append(f"kernel ({x}, {a}) targets out-of-range feature {y}")
                    bad = True
                if not 0.0 < q <= 1.0:
                    diags.append(f"kernel ({x}, {a}) has probability {q!r} outside (0, 1]")
                    bad = True
            ys = [y for y, _ in row]
            if len(set(ys)) != len(ys):
                diags.append(f"kernel ({x}, {a}) lists a child feature twice")
            total = math.fsum(q for _, q in row)
            if not bad and abs(total - 1.0) > 1e-12:
                diags.append(f"kernel ({x}, {a}) not normalized: sums to {total!r}")
    return diags


def successors(problem: AbstractProblem, x: int, a: int):
    """Kernel row for ``(x, a)``: a tuple of ``(y, prob)`` or :data:`ILLEGAL`."""
    if not 0 <= x < problem.n_features:
        raise IndexError(f"feature {x} out of range")
    if not 0 <= a < problem.n_actions:
        raise IndexError(f"action {a} out of range")
    return problem.kernel[x][a]


# -- text format -------------------------------------------------------------
#
#   smiri-problem 1
#   features <n> <label_0> ... <label_{n-1}>
#   actions <m> <label_0> ... <label_{m-1}>
#   initial <x0>
#   goals <k> <g_1> ... <g_k>
#   costs <c_0> ... <c_{n-1}>
#   row <x> <a> <y>:<prob> <y>:<prob> ...     (one line per legal pair)
#
# Labels must not contain whitespace.  Probabilities use repr() so that a
# write/read round trip is exact.  Lines starting with '#' are ignored.


def dumps_problem(problem: AbstractProblem) -> str:
    lines = [FORMAT_HEADER]
    lines.append(" ".join(["features", str(problem.n_features), *problem.features]))
    lines.append(" ".join(["actions", str(problem.n_actions), *problem.actions]))
    lines.append(f"initial {problem.initial}")
    lines.append(" ".join(["goals", str(len(problem.goals)), *map(str, sorted(problem.goals))]))
    lines.append(" ".join(["costs", *map(str, problem.step_cost)]))
    for x, per_x in enumerate(problem.kernel):
        for a, row in enumerate(per_x):
            if row is ILLEGAL:
                continue
            entries = " ".join(f"{y}:{q!r}" for y, q in row)
            lines.append(f"row {x} {a} {entries}")
    return "\n".join(lines) + "\n"


def loads_problem(text: str) -> AbstractProblem:
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines or lines[0] != FORMAT_HEADER:
        raise ProblemError(f"missing header {FORMAT_HEADER!r}")
    fields = {}
    rows = {}
    for ln in lines[1:]:
        key, *rest = ln.split()
        if key == "row":
            x, a = int(rest[0]), int(rest[1])
            entries = []
            for tok in rest[2:]:
                y, q = tok.split(":")
                entries.append((int(y), float(q)))
            rows[(x, a)] = entries
        elif key in ("features", "actions", "initial", "goals", "costs"):
            fields[key] = rest
        else:
            raise ProblemError(f"unknown record {key!r}")
    try:
        nf = int(fields["features"][0])
        features = fields["features"][1:]
        na = int(fields["actions"][0])
        actions = fields["actions"][1:]
        initial = int(fields["initial"][0])
        goals = [int(g) for g in fields["goals"][1:]]
        costs = [int(c) for c in fields["costs"]]
    except (KeyError, IndexError) as exc:
        raise ProblemError(f"incomplete header: {exc}") from None
    if len(features) != nf or len(actions) != na:
        raise ProblemError("label count does not match declared size")
    kernel = [[ILLEGAL] * na for _ in range(nf)]
    for (x, a), entries in rows.items():
        kernel[x][a] = entries
    return make_problem(actions, features, initial, goals, costs, kernel)


def write_problem(problem: AbstractProblem, path) -> None:
    Path(path).write_text(dumps_problem(problem))


def read_problem(path) -> AbstractProblem:
    return loads_problem(Path(path).read_text())
