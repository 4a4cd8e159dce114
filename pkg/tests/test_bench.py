import math

import pytest
from hypothesis import given, settings, strategies as st

from smiri import bench
from smiri.bench import (TestCaseConfig, builtin_cases, discounted_total_cost, dumps_config, loads_config,
                         naive_discounted_total_cost, quality_profile)
from smiri.search import ImprovementTrace


def test_builtin_cases():
    cases = builtin_cases()
    assert [c.case_id for c in cases] == [1, 2, 3, 4, 5, 6]
    c1, c6 = cases[0], cases[5]
    assert (c1.p, c1.h0, c1.C_max, c1.N, c1.instances) == (0.1, 20, 250, 2_000_000, 100)
    assert c1.gamma == pytest.approx(0.999999, abs=1e-12)
    assert (c6.p, c6.h0, c6.C_max, c6.N, c6.instances) == (0.6, 50, 70, 1000, 1000)
    assert c6.gamma == pytest.approx(0.998, abs=1e-12)
    assert [c.instances for c in cases] == [100, 100, 1000, 1000, 1000, 1000]
    for c in cases:
        assert abs(c.gamma - (1 - 2 / c.N)) <= 1e-9


def test_config_validation():
    with pytest.raises(ValueError):
        TestCaseConfig(9, 0.4, 5, 10, 100, gamma=1.0)
    with pytest.raises(ValueError):
        TestCaseConfig(9, 0.4, 5, 10, 100, instances=0)
    with pytest.raises(ValueError):
        TestCaseConfig(9, 1.4, 5, 10, 100)
    assert TestCaseConfig(9, 0.4, 5, 10, 100, gamma=0.5).gamma == 0.5


def test_config_round_trip(tmp_path):
    cases = builtin_cases() + [TestCaseConfig(11, 0.35, 7, 19, 333, 0.9, 12, 5, "scaled")]
    assert loads_config(dumps_config(cases)) == cases
    path = tmp_path / "c.txt"
    bench.write_config(cases, path)
    assert bench.read_config(path) == cases


def test_config_defaults_from_builtin():
    text = "smiri-bench 1\n# comment\ncase 5 instances=20   # fewer\n"
    (c,) = loads_config(text)
    assert (c.p, c.h0, c.C_max, c.N, c.instances) == (0.4, 50, 80, 4000, 20)
    for bad in ["case 5\n", "smiri-bench 1\ncase 5 colour=red\n", "smiri-bench 1\ncase 12 p=0.3\n"]:
        with pytest.raises(ValueError):
            loads_config(bad)


def test_discounted_cost_examples():
    g, N, C, e = 0.99, 300, 40, 25.0
    assert discounted_total_cost(ImprovementTrace(), g, N, C, e) == pytest.approx(C / e)
    tr = ImprovementTrace([1], [25])
    assert discounted_total_cost(tr, g, N, C, e) == pytest.approx(1.0)
    tr = ImprovementTrace([2], [25])
    expect = (C + e * (g - g ** N) / (1 - g)) / (e * (1 - g ** N) / (1 - g))
    assert discounted_total_cost(tr, g, N, C, e) == pytest.approx(expect, rel=1e-12)
    early = ImprovementTrace([5, 40], [30, 26])
    late = ImprovementTrace([6, 40], [30, 26])
    assert discounted_total_cost(early, g, N, C, e) < discounted_total_cost(late, g, N, C, e)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 400), st.floats(0.5, 0.9999), st.lists(st.integers(1, 400), max_size=8, unique=True))
def test_closed_form_matches_naive(N, gamma, steps):
    steps = sorted(steps)
    costs = list(range(50, 50 - len(steps), -1))
    tr = ImprovementTrace(steps, costs, N, 60)
    a = discounted_total_cost(tr, gamma, N, 60, 37.5)
    b = naive_discounted_total_cost(tr, gamma, N, 60, 37.5)
    assert abs(a - b) <= 1e-9


def test_closed_form_long_horizon():
    N = 2_000_000
    gamma = 1 - 2 / N
    tr = ImprovementTrace([10, 5000, 300_000], [200, 150, 120], N, 250)
    got = discounted_total_cost(tr, gamma, N, 250, 100.0)
    # same sum in 50-digit arithmetic
    import mpmath
    mpmath.mp.dps = 50
    G = mpmath.mpf(gamma)

    def seg(a, b):
        return G ** (a - 1) * (1 - G ** (b - a + 1)) / (1 - G)

    J = 250 * seg(1, 9) + 200 * seg(10, 4999) + 150 * seg(5000, 299_999) + 120 * seg(300_000, N)
    assert got == pytest.approx(float(J / (100 * seg(1, N))), rel=1e-9)


def test_quality_profile():
    traces = [ImprovementTrace([10], [30], 100, 40), ImprovementTrace([], [], 100, 40)]
    prof = quality_profile(traces, 11, 20.0)
    assert len(prof) == 11
    assert prof[0] == (0.0, 2.0)
    assert prof[1] == (0.1, pytest.approx((30 + 40) / 2 / 20))
    assert all(a[1] >= b[1] for a, b in zip(prof, prof[1:]))
    assert quality_profile([ImprovementTrace([], [], 50, 40)], 5, 20.0) == [(t / 4, 2.0) for t in range(5)]
    with pytest.raises(ValueError):
        quality_profile(traces, 1, 20.0)


def tiny_case(n=6):
    return TestCaseConfig(6, 0.6, 50, 70, 1000, instances=n)


def test_run_benchmark_outputs(tmp_path):
    out = tmp_path / "run"
    summaries = bench.run_benchmark([tiny_case()], out_dir=out)
    names = sorted(p.name for p in out.iterdir())
    assert names == ["cases.csv", "config.txt", "improvements.csv", "profile.csv", "profile_case6.svg", "summary.csv"]
    lines = (out / "summary.csv").read_text().splitlines()
    assert lines[0].startswith("case,algo,mean_discounted_cost,std_error")
    assert [ln.split(",")[1] for ln in lines[1:]] == ["SMIRI", "APTS", "AGPTS", "AEES", "ARA*"]
    svg = (out / "profile_case6.svg").read_text()
    assert svg.startswith("<svg") and svg.count("<polyline") == 5
    # summary is recomputable from the raw traces
    raw = bench.read_improvements(out / "improvements.csv")
    sm = summaries[0]
    for algo, by_inst in raw[6].items():
        vals = [discounted_total_cost(ImprovementTrace([s for s, _ in ev], [c for _, c in ev]),
                                      sm.case.gamma, 1000, 70, sm.e_copt) for ev in by_inst.values()]
        assert sm.ndtc[algo][0] == pytest.approx(math.fsum(vals) / len(vals), rel=1e-12)
    before = {p.name: p.read_bytes() for p in out.iterdir()}
    bench.build_report(out)
    assert {p.name: p.read_bytes() for p in out.iterdir()} == before


def test_single_run_gives_one_stanza(tmp_path):
    bench.run_benchmark([tiny_case(1)], ["APTS"], out_dir=tmp_path)
    rows = (tmp_path / "improvements.csv").read_text().splitlines()[1:]
    keys = {tuple(r.split(",")[:3]) for r in rows}
    assert keys == {("6", "APTS", "0")}
    assert rows[0] == "6,APTS,0,0,70"


def test_workers_do_not_change_results(tmp_path):
    case = tiny_case(8)
    bench.run_benchmark([case], out_dir=tmp_path / "a")
    bench.run_benchmark([case], out_dir=tmp_path / "b", workers=2)
    for name in ("improvements.csv", "summary.csv", "profile.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_tables_from_directory(tmp_path):
    from smiri.rstar import precompute_r_star, save_table
    from smiri.tree import make_tree_problem
    case = TestCaseConfig(7, 0.5, 6, 12, 200, instances=3)
    pr = make_tree_problem(case.params)
    save_table(precompute_r_star(pr, 12), bench.table_path(tmp_path, case))
    t = bench.case_tables(case, str(tmp_path))
    assert t.rstar.C_max == 12


def test_shared_observations():
    assert bench.shared_observations_agree(tiny_case(), 3, N=400)
