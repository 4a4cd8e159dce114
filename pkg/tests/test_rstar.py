import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from smiri.problem import make_problem
from smiri.rstar import (INF, TableError, ZERO_ROW, geometric_sums, init_accumulator, load_table,
                         precompute_r_star, r_star_lookup, save_table, _Rows, process_descendant)
from smiri.tree import LEFT, RIGHT, TreeModelParams, make_tree_problem


def tree(p, h0=6, C=12):
    return make_tree_problem(TreeModelParams(p, h0, C))


@pytest.fixture(scope="module")
def t04():
    pr = tree(0.4, 8, 14)
    return pr, precompute_r_star(pr, 14)


def exact_sums(s, m):
    s, m = mpmath.mpf(s), mpmath.mpf(m)
    q = 1 - s
    p_suc = 1 - q ** m
    S0 = m if s == 0 else p_suc / s
    if s == 0:
        S1 = m * (m - 1) / 2
    else:
        S1 = q * (1 - m * q ** (m - 1) + (m - 1) * q ** m) / s ** 2
    return p_suc, S0, S1


@pytest.mark.parametrize("s, m", [(0.4, 2), (0.4, 1), (0.1, 3.5), (1e-9, 7.25), (0.999999, 2.5),
                                  (0.3, 0.2), (0.05, 400.0), (0.7, 1e-6), (0.0, 3.0)])
def test_geometric_sums_against_mpmath(s, m):
    mpmath.mp.dps = 40
    got = geometric_sums(s, 1.0 - s, m)
    for g, e in zip(got, exact_sums(s, m)):
        assert g == pytest.approx(float(e), rel=1e-9, abs=1e-12)


def test_geometric_sums_integer_m():
    p_suc, S0, S1 = geometric_sums(0.4, 0.6, 2)
    assert p_suc == pytest.approx(0.64)
    assert S0 == pytest.approx(1.6)
    assert S1 == pytest.approx(0.6)


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-6, 1 - 1e-6), st.floats(0.01, 50.0))
def test_geometric_sums_property(s, m):
    mpmath.mp.dps = 40
    got = geometric_sums(s, 1.0 - s, m)
    for g, e in zip(got, exact_sums(s, m)):
        assert g == pytest.approx(float(e), rel=1e-8, abs=1e-12)


def test_degenerate_sums():
    assert geometric_sums(1.0, 0.0, 3.0) == (1.0, 1.0, 0.0)
    assert geometric_sums(0.0, 1.0, 4.0) == (0.0, 4.0, 6.0)


@pytest.mark.parametrize("p", [0.1, 0.2, 0.4, 0.6])
def test_closed_form_rows(p):
    pr = tree(p)
    tb = precompute_r_star(pr, 12)
    for a in (LEFT, RIGHT):
        row = tb.row(2, 1, a)
        assert row.r_star == pytest.approx(p, abs=1e-12)
        assert (row.p_s, row.t_s, row.t_f, row.delta) == pytest.approx((p, p, 1 - p, p), abs=1e-12)
        assert row.edges_f == {(1, 2, LEFT): pytest.approx(1.0), (1, 2, RIGHT): pytest.approx(1.0)}
    nf = pr.n_features
    for x in range(1, nf):
        for a in pr.legal_actions(x):
            assert tb.r_star[1, x, a] == 0.0 and tb.delta[1, x, a] == 0.0
            for C in range(1, min(x, 12) + 1):
                assert tb.r_star[C, x, a] == 0.0
    for C in range(1, 13):
        claim = tb.row(C, 0, tb.claim)
        assert (claim.p_s, claim.delta, claim.t_s, claim.t_f) == (1.0, C, 0.0, 0.0)
        assert claim.r_star == INF and claim.edges_f == {}


def test_hand_trace_row_3_2(t04):
    _, tb = t04
    for a in (LEFT, RIGHT):
        row = tb.row(3, 2, a)
        assert row.delta == pytest.approx(0.256, abs=1e-12)
        assert row.t_s == pytest.approx(0.608, abs=1e-12)
        assert row.t_f == pytest.approx(1.032, abs=1e-12)
        assert row.p_s == pytest.approx(0.256, abs=1e-12)
        assert row.r_star == pytest.approx(0.256 / 1.64, abs=1e-12)


def test_processing_order_row_3_2():
    pr = tree(0.4, 8, 14)
    log = {}

    def observer(C, x, a, acc):
        if (C, x) == (3, 2):
            log[a] = list(acc.processed)

    tb = precompute_r_star(pr, 3, observer=observer)
    order = [(tb.edge_class(e), r) for e, r in log[LEFT]]
    assert [e for e, _ in order[:2]] == [(2, 1, LEFT), (2, 1, RIGHT)]
    assert all(r == pytest.approx(0.4) for _, r in order[:2])
    assert len(order) == 2  # (1, 3, .) has rate 0 < 0.156 and is never dequeued


def test_processing_log_non_increasing():
    pr = tree(0.3, 10, 25)
    bad = []

    def observer(C, x, a, acc):
        rates = [r for _, r in acc.processed]
        if any(r1 < r2 for r1, r2 in zip(rates, rates[1:])):
            bad.append((C, x, a))
        eids = [e for e, _ in acc.processed]
        if len(set(eids)) != len(eids):
            bad.append(("twice", C, x, a))

    precompute_r_star(pr, 25, observer=observer)
    assert bad == []


@pytest.mark.parametrize("rule", ["literal", "scaled"])
def test_row_invariants(rule):
    pr = tree(0.35, 12, 30)
    tb = precompute_r_star(pr, 30, failure_time=rule)
    for C in range(1, 31):
        for x, a in pr.legal_pairs():
            r = tb.row(C, x, a)
            assert -1e-12 <= r.p_s <= 1 + 1e-9
            assert r.t_s >= 0 and r.t_f >= 0 and r.delta >= 0
            assert r.delta <= C * r.p_s + 1e-9
            tot = r.t_s + r.t_f
            assert abs(r.r_star * tot - r.delta) <= 1e-9
            assert tot >= 1 - 1e-12  # the edge itself is always expanded
    assert tb.n_entries == 30 * (len(list(pr.legal_pairs())) + 1)


def test_failure_time_rules_agree_when_m_is_one():
    pr = tree(0.4, 8, 16)
    lit = precompute_r_star(pr, 16)
    sc = precompute_r_star(pr, 16, failure_time="scaled")
    mask = lit.m_one & lit.defined
    assert lit.m_one[1:7][lit.defined[1:7]].all()  # small bounds never merge descendants
    np.testing.assert_array_equal(lit.r_star[mask], sc.r_star[mask])
    assert not np.array_equal(lit.r_star, sc.r_star)
    with pytest.raises(ValueError):
        precompute_r_star(pr, 4, failure_time="other")


def test_determinism():
    pr = tree(0.3, 10, 20)
    a, b = precompute_r_star(pr, 20), precompute_r_star(pr, 20)
    for name in ("p_s", "t_s", "t_f", "delta", "r_star"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


def test_lookup_rules(t04):
    pr, tb = t04
    assert r_star_lookup(tb, 0, 3, LEFT) is ZERO_ROW
    assert r_star_lookup(tb, -5, 3, LEFT) == ZERO_ROW
    assert r_star_lookup(tb, 2, 1, LEFT).r_star == pytest.approx(0.4)
    with pytest.raises(ValueError):
        r_star_lookup(tb, 15, 1, LEFT)


def test_save_load(tmp_path, t04):
    pr, tb = t04
    path = tmp_path / "t.npz"
    save_table(tb, path)
    back = load_table(path, pr)
    assert np.array_equal(back.r_star, tb.r_star)
    assert back.problem_hash == tb.problem_hash and back.C_max == tb.C_max
    with pytest.raises(TableError):
        load_table(path, tree(0.5, 8, 14))


def test_memory_cap():
    with pytest.raises(MemoryError, match="W"):
        precompute_r_star(tree(0.4, 50, 80), 80, max_entries=1000)


def test_invalid_problem_rejected():
    bad = make_problem(["a"], ["g", "x"], 1, [0], [1, 1], {(1, 0): [(0, 0.5)]})
    with pytest.raises(TableError):
        precompute_r_star(bad, 3)


def test_process_descendant_claim():
    # child y = goal with p(y) = q: success booked in full, failure side untouched
    pr = tree(0.4, 8, 14)
    rows = _Rows(3, pr.n_features, pr.n_actions)
    claim_e = rows.eid(1, 0, pr.n_actions)
    rows.p_s[claim_e], rows.fail[claim_e], rows.delta[claim_e], rows.r_star[claim_e] = 1.0, 0.0, 1.0, INF
    acc = init_accumulator(pr, rows, 2, 1, LEFT)
    process_descendant(acc, claim_e)
    assert acc.p_s == pytest.approx(0.4)
    assert acc.t_s == pytest.approx(0.4)
    assert acc.delta == pytest.approx(0.4)
    assert acc.p[0] == 0.0 and acc.t[0] == 1.0


def test_nonuniform_costs_and_branching():
    # three actions, a cost-2 feature; only checks structure and invariants
    kernel = {
        (1, 0): [(0, 0.3), (2, 0.7)],
        (1, 1): [(0, 0.1), (1, 0.9)],
        (2, 0): [(1, 0.5), (3, 0.5)],
        (2, 2): [(0, 0.2), (3, 0.8)],
        (3, 0): [(2, 1.0)],
    }
    pr = make_problem(["a", "b", "c"], ["g", "x1", "x2", "x3"], 3, [0], [1, 1, 2, 1], kernel)
    tb = precompute_r_star(pr, 9)
    assert tb.row(1, 1, 0).r_star == 0.0
    assert tb.row(2, 1, 0).r_star == pytest.approx(0.3)
    assert tb.row(2, 1, 1).r_star == pytest.approx(0.1)
    for C in range(1, 10):
        for x, a in pr.legal_pairs():
            r = tb.row(C, x, a)
            assert r.delta <= C * r.p_s + 1e-9
