"""Anytime best-first search on tree model instances.

All five policies share the same loop shape: pick a frontier element,
realize children, register any goal child that beats the incumbent, prune.
Effort is counted in generated edges.  SMIRI keeps individual out-edges on
its frontier and is charged 1 per expansion; the node-based policies
generate both children of a node and are charged 1 per child.

Goal children never enter a frontier.  Every other frontier entry satisfies
``g + h < C_inc`` with ``h`` the node's feature, which is admissible in the
tree model, so pruning never discards an improving solution.

Frontier ties break toward larger ``g``, then toward earlier insertion.
"""

from __future__ import annotations

import enum
import hashlib
import heapq
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import count
from typing import NamedTuple, Optional

from .dptables import SurvivalTable
from .rstar import RStarTable
from .tree import HistoryKey, TreeInstance, TreeModelParams, make_tree_problem

ARA_WEIGHTS = (5.0, 3.0, 2.0, 1.5, 1.0)


class PolicyKind(enum.Enum):
    SMIRI = "SMIRI"
    APTS = "APTS"
    AGPTS = "AGPTS"
    AEES = "AEES"
    ARA_STAR = "ARA*"


ALL_POLICIES = tuple(PolicyKind)


@dataclass(frozen=True)
class Policy:
    kind: PolicyKind
    weights: tuple = ARA_WEIGHTS

    def __post_init__(self):
        w = tuple(float(v) for v in self.weights)
        if not w or w[-1] != 1.0 or any(v <= 0 for v in w) or any(a <= b for a, b in zip(w, w[1:])):
            raise ValueError(f"weight schedule must decrease strictly to 1, got {self.weights}")
        object.__setattr__(self, "weights", w)

    @property
    def name(self) -> str:
        return self.kind.value


def as_policy(p) -> Policy:
    if isinstance(p, Policy):
        return p
    if isinstance(p, PolicyKind):
        return Policy(p)
    for kind in PolicyKind:
        if p in (kind.value, kind.name):
            return Policy(kind)
    raise ValueError(f"unknown policy {p!r}")


class SearchNode(NamedTuple):
    key: HistoryKey
    feature: int
    g: int
    parent: Optional["SearchNode"] = None


@dataclass
class ImprovementTrace:
    """Improvements found by one run: ``costs[i]`` became incumbent after ``steps[i]`` edges."""

    steps: list = field(default_factory=list)
    costs: list = field(default_factory=list)
    budget: int = 0
    C_max: int = 0
    expansions: int = 0
    observations: Optional[dict] = None

    @property
    def final_cost(self) -> int:
        return self.costs[-1] if self.costs else self.C_max

    def incumbent_at(self, k: int) -> int:
        """Incumbent after ``k`` edge expansions."""
        cost = self.C_max
        for s, c in zip(self.steps, self.costs):
            if s > k:
                break
            cost = c
        return cost


@dataclass(frozen=True)
class SearchTables:
    problem_hash: str
    rstar: Optional[RStarTable] = None
    survival: Optional[SurvivalTable] = None


@lru_cache(maxsize=64)
def _problem_hash(params: TreeModelParams) -> str:
    return make_tree_problem(params).digest()


def observation_digest(observations: dict, keys=None) -> str:
    """SHA-256 over sorted ``(length, bits, feature)`` triples, optionally restricted to ``keys``."""
    if keys is None:
        keys = observations.keys()
    h = hashlib.sha256()
    for key in sorted(keys, key=lambda k: (k[1], k[0])):
        h.update(f"{key[1]}:{key[0]}:{observations[key]};".encode())
    return h.hexdigest()


# -- priorities ------------------------------------------------------------------


def smiri_priority(node: SearchNode, a: int, C_inc: int, table: RStarTable) -> float:
    C_rel = C_inc - node.g
    if C_rel <= 0:
        return 0.0
    return float(table.r_star[C_rel, node.feature, a])


def apts_priority(node: SearchNode, C_inc: int) -> float:
    if node.feature <= 0:
        raise ValueError("APTS priority is undefined at a goal")
    return (C_inc - node.g) / node.feature


def agpts_priority(node: SearchNode, C_inc: int, S: SurvivalTable) -> float:
    C_rel = C_inc - node.g
    if C_rel < 1:
        return 0.0
    return 1.0 - float(S.S[node.feature, min(C_rel - 1, S.C_max)])


def ara_priority(node: SearchNode, w: float) -> float:
    return node.g + w * node.feature


def aees_select(frontier, C_inc: int, h_hat) -> SearchNode:
    """AEES choice among ``frontier``.

    ``h_hat`` maps a feature to its inadmissible cost estimate, which also
    serves as the distance estimate under unit costs.  Take the node
    nearest to a goal if its estimated total cost beats the incumbent;
    failing that the node with the best estimated total cost; failing
    that the node with the best admissible ``f``.
    """
    if not frontier:
        raise ValueError("empty frontier")
    order = {id(n): i for i, n in enumerate(frontier)}

    def best(key):
        return min(frontier, key=lambda n: (key(n), -n.g, order[id(n)]))

    best_d = best(lambda n: h_hat[n.feature])
    if best_d.g + h_hat[best_d.feature] < C_inc:
        return best_d
    best_fhat = best(lambda n: n.g + h_hat[n.feature])
    if best_fhat.g + h_hat[best_fhat.feature] < C_inc:
        return best_fhat
    return best(lambda n: n.g + n.feature)


# -- the search loop ---------------------------------------------------------------


def run_anytime(policy, instance: TreeInstance, tables: SearchTables, N: int,
                C_max: Optional[int] = None, record_observations: bool = False) -> ImprovementTrace:
    """Run one anytime search for at most ``N`` edge expansions."""
    policy = as_policy(policy)
    params = instance.params
    if C_max is None:
        C_max = params.C_max
    if C_max > params.C_max:
        raise ValueError(f"C_max={C_max} exceeds the instance bound {params.C_max}")
    if tables.problem_hash != _problem_hash(params):
        raise ValueError("tables were computed for a different problem")
    if N < 0:
        raise ValueError("budget must be non-negative")
    trace = ImprovementTrace(budget=N, C_max=C_max)
    obs = {} if record_observations else None
    if obs is not None:
        obs[(0, 0)] = params.h0
    kind = policy.kind
    if kind is PolicyKind.SMIRI:
        if tables.rstar is None:
            raise ValueError("SMIRI needs an r* table")
        _run_smiri(instance, tables.rstar, N, C_max, trace, obs)
    elif kind is PolicyKind.AEES:
        if tables.survival is None:
            raise ValueError("AEES needs a survival table")
        _run_aees(instance, tables.survival, N, C_max, trace, obs)
    else:
        if kind is PolicyKind.AGPTS and tables.survival is None:
            raise ValueError("AGPTS needs a survival table")
        _run_keyed(kind, policy.weights, instance, tables.survival, N, C_max, trace, obs)
    trace.observations = obs
    return trace


@lru_cache(maxsize=16)
def _rate_lists(table: RStarTable):
    return table.rate_lists()


@lru_cache(maxsize=16)
def _potential_lists(S: SurvivalTable):
    return S.potential_lists()


@lru_cache(maxsize=16)
def _h_hat_list(S: SurvivalTable):
    return S.h_hat_list()


def _run_smiri(instance, table, N, C_max, trace, obs):
    rs = _rate_lists(table)
    step = instance.step
    tick = count()
    C_inc = C_max
    h0 = instance.params.h0
    heap = []
    for a in (0, 1):
        r = rs[C_inc][h0][a]
        if r > 0.0:
            heap.append((-r, 0, next(tick), 0, h0, instance.root_hash, 0, a))
    heapq.heapify(heap)
    used = 0
    push, pop = heapq.heappush, heapq.heappop
    while used < N and heap:
        _, _, _, g, x, h, bits, a = pop(heap)
        used += 1
        hc, xc = step(h, x, a)
        gc = g + 1
        bc = bits | (a << g)
        if obs is not None:
            obs[(bc, gc)] = xc
        if xc == 0:
            if gc < C_inc:
                C_inc = gc
                trace.steps.append(used)
                trace.costs.append(gc)
                heap = [
                    (-r, e[1], e[2], e[3], e[4], e[5], e[6], e[7])
                    for e in heap
                    if C_inc - e[3] > 0 and (r := rs[C_inc - e[3]][e[4]][e[7]]) > 0.0
                ]
                heapq.heapify(heap)
            continue
        C_rel = C_inc - gc
        if C_rel > 0:
            row = rs[C_rel][xc]
            for b in (0, 1):
                r = row[b]
                if r > 0.0:
                    push(heap, (-r, -gc, next(tick), gc, xc, hc, bc, b))
    trace.expansions = used


def _run_keyed(kind, weights, instance, S, N, C_max, trace, obs):
    """APTS, AGPTS and ARA*: one heap keyed on a C_inc-dependent score."""
    step = instance.step
    tick = count()
    C_inc = C_max
    w_index = 0
    if kind is PolicyKind.AGPTS:
        pt = _potential_lists(S)

        def key(g, x):
            return -pt[x][C_inc - g]
    elif kind is PolicyKind.APTS:
        def key(g, x):
            return -(C_inc - g) / x
    else:
        def key(g, x):
            return g + weights[w_index] * x

    h0 = instance.params.h0
    heap = []
    if h0 < C_inc:
        heap.append((key(0, h0), 0, next(tick), 0, h0, instance.root_hash, 0))
    used = 0
    push, pop = heapq.heappush, heapq.heappop
    while used < N and heap:
        _, _, _, g, x, h, bits = pop(heap)
        if g + x >= C_inc:
            continue
        improved = False
        gc = g + 1
        for a in (0, 1):
            if used >= N:
                break
            used += 1
            hc, xc = step(h, x, a)
            bc = bits | (a << g)
            if obs is not None:
                obs[(bc, gc)] = xc
            if xc == 0:
                if gc < C_inc:
                    C_inc = gc
                    trace.steps.append(used)
                    trace.costs.append(gc)
                    improved = True
            elif gc + xc < C_inc:
                push(heap, (key(gc, xc), -gc, next(tick), gc, xc, hc, bc))
        if improved:
            if kind is PolicyKind.ARA_STAR and w_index < len(weights) - 1:
                w_index += 1
            heap = [
                (key(e[3], e[4]), e[1], e[2], e[3], e[4], e[5], e[6])
                for e in heap
                if e[3] + e[4] < C_inc
            ]
            heapq.heapify(heap)
    trace.expansions = used


def _run_aees(instance, S, N, C_max, trace, obs):
    hh = _h_hat_list(S)
    step = instance.step
    tick = count()
    C_inc = C_max
    h0 = instance.params.h0
    # node record: [g, x, hash, bits, alive]
    by_d, by_fhat, by_f = [], [], []
    push, pop = heapq.heappush, heapq.heappop

    def add(g, x, h, bits):
        node = [g, x, h, bits, True]
        t = next(tick)
        push(by_d, (hh[x], -g, t, node))
        push(by_fhat, (g + hh[x], -g, t, node))
        push(by_f, (g + x, -g, t, node))

    def top(heap):
        while heap:
            node = heap[0][3]
            if node[4] and node[0] + node[1] < C_inc:
                return node
            node[4] = False
            pop(heap)
        return None

    if h0 < C_inc:
        add(0, h0, instance.root_hash, 0)
    used = 0
    while used < N:
        best_d = top(by_d)
        if best_d is None:
            break
        if best_d[0] + hh[best_d[1]] < C_inc:
            node = best_d
        else:
            best_fhat = top(by_fhat)
            if best_fhat[0] + hh[best_fhat[1]] < C_inc:
                node = best_fhat
            else:
                node = top(by_f)
        node[4] = False
        g, x, h, bits, _ = node
        gc = g + 1
        for a in (0, 1):
            if used >= N:
                break
            used += 1
            hc, xc = step(h, x, a)
            bc = bits | (a << g)
            if obs is not None:
                obs[(bc, gc)] = xc
            if xc == 0:
                if gc < C_inc:
                    C_inc = gc
                    trace.steps.append(used)
                    trace.costs.append(gc)
            elif gc + xc < C_inc:
                add(gc, xc, hc, bc)
    trace.expansions = used
