"""The random binary tree model T(p, h0).

Every node carries an integer feature h.  Both actions (Left, Right) cost 1
and lead from h to h-1 with probability p and to h+1 otherwise; feature 0
is the goal.  Since h is never more than the true distance to a goal, it is
an admissible and consistent heuristic.

Instances are infinite, so they are realized lazily.  A child's feature is
a pure function of ``(master_seed, case_id, instance_id, history)``: the
history's 64-bit hash is built by chaining a SplitMix64 finalizer from a
seed-derived root hash, and the top 53 bits of the child's hash give a
uniform draw in [0, 1).  No state is shared between calls, so every search
algorithm sees exactly the same tree no matter which order it visits nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

from .problem import ILLEGAL, AbstractProblem, make_problem

LEFT, RIGHT = 0, 1
ACTION_LABELS = ("Left", "Right")
DEAD_END_LABEL = "dead-end"

_MASK = (1 << 64) - 1
_TO_UNIT = 2.0 ** -53


def mix64(z: int) -> int:
    """SplitMix64 output function: a bijective 64-bit avalanche mix."""
    z = (z + 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def child_hash(parent_hash: int, a: int) -> int:
    return mix64(parent_hash ^ (a + 1))


def unit_draw(h: int) -> float:
    return (h >> 11) * _TO_UNIT


@dataclass(frozen=True)
class TreeModelParams:
    p: float
    h0: int
    C_max: int

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ValueError(f"p must lie in (0, 1), got {self.p}")
        if self.h0 < 1:
            raise ValueError(f"h0 must be >= 1, got {self.h0}")
        if self.C_max < 1:
            raise ValueError(f"C_max must be >= 1, got {self.C_max}")

    @property
    def top_feature(self) -> int:
        """Largest feature reachable within C_max steps."""
        return self.h0 + self.C_max

    @property
    def dead_end(self) -> int:
        return self.h0 + self.C_max + 1


class HistoryKey(NamedTuple):
    """Action sequence packed into an int; bit i is the action at depth i+1."""

    bits: int = 0
    length: int = 0

    def child(self, a: int) -> "HistoryKey":
        return HistoryKey(self.bits | (a << self.length), self.length + 1)

    def actions(self) -> list[int]:
        return [(self.bits >> i) & 1 for i in range(self.length)]

    @classmethod
    def from_actions(cls, actions) -> "HistoryKey":
        key = cls()
        for a in actions:
            key = key.child(a)
        return key


ROOT = HistoryKey()


def make_tree_problem(params: TreeModelParams) -> AbstractProblem:
    """Finite abstract problem for T(p, h0) truncated at h0 + C_max.

    Features ``0 .. h0 + C_max`` are live; the mass that would step above
    ``h0 + C_max`` goes to a single dead-end feature with no legal actions.
    """
    p = float(params.p)
    top = params.top_feature
    dead = params.dead_end
    n = dead + 1
    kernel = [[ILLEGAL, ILLEGAL] for _ in range(n)]
    for h in range(1, top + 1):
        up = h + 1 if h < top else dead
        row = ((h - 1, p), (up, 1.0 - p))
        kernel[h] = [row, row]
    labels = [str(h) for h in range(top + 1)] + [DEAD_END_LABEL]
    return make_problem(
        actions=ACTION_LABELS,
        features=labels,
        initial=params.h0,
        goals=[0],
        step_cost=[1] * n,
        kernel=kernel,
    )


@dataclass(frozen=True)
class TreeInstance:
    """One lazily realized sample of T(p, h0)."""

    params: TreeModelParams
    master_seed: int
    case_id: int = 0
    instance_id: int = 0
    root_hash: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        h = mix64(self.master_seed & _MASK)
        h = mix64(h ^ (self.case_id & _MASK))
        h = mix64(h ^ (self.instance_id & _MASK))
        object.__setattr__(self, "root_hash", h)

    def step(self, parent_hash: int, parent_feature: int, a: int):
        """Fast path used by the searchers: ``(child_hash, child_feature)``."""
        h = mix64(parent_hash ^ (a + 1))
        if (h >> 11) * _TO_UNIT < self.params.p:
            return h, parent_feature - 1
        return h, parent_feature + 1

    def hash_of(self, key: HistoryKey) -> int:
        h = self.root_hash
        for a in key.actions():
            h = child_hash(h, a)
        return h

    def feature_of(self, key: HistoryKey) -> int:
        """Feature at ``key``; the history must not pass through a goal."""
        h, x = self.root_hash, self.params.h0
        for depth, a in enumerate(key.actions()):
            if x == 0:
                raise ValueError(f"history passes through a goal at depth {depth}")
            h, x = self.step(h, x, a)
        return x


def realize_child(instance: TreeInstance, parent: HistoryKey, a: int) -> int:
    """Feature of ``parent`` extended by action ``a``."""
    if a not in (LEFT, RIGHT):
        raise ValueError(f"unknown action {a}")
    if parent.length + 1 > instance.params.C_max:
        raise ValueError(
            f"depth {parent.length + 1} exceeds C_max={instance.params.C_max}"
        )
    x = instance.feature_of(parent)
    if x == 0:
        raise ValueError("cannot expand a goal node")
    return instance.step(instance.hash_of(parent), x, a)[1]
