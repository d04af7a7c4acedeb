"""Independent-oracle checks: probabilities, transport LP, piecewise gaps."""

import itertools

import numpy as np
import pytest

from ddu_planner.network import load_instance
from ddu_planner.oracles import (
    OracleRecord,
    exhaustive_plan_oracle,
    pl_interpolant,
    piecewise_gap,
    primal_inner_lp,
    probability_oracle,
    radius_grid,
    write_oracle_csv,
)
from ddu_planner.scenarios import ScenarioSupport, screen_feasible
from ddu_planner.assemble import pattern_outcomes


@pytest.fixture(scope="module")
def tiny2():
    inst = load_instance("tiny2")
    sup = ScenarioSupport(inst)
    feas = screen_feasible(inst)
    return inst, sup, feas


@pytest.fixture(scope="module")
def tiny2_theta(tiny2):
    inst, sup, feas = tiny2
    return pattern_outcomes(inst, sup, feas, (1, 1), engine="highs")


# ---------------------------------------------------------------- probability


def test_probability_matches_support_on_every_pattern(tiny2):
    inst, sup, _ = tiny2
    for w in itertools.product((0, 1), repeat=sup.n_nodes):
        slow = probability_oracle(inst, w)
        fast = sup.probability(np.array(w))
        np.testing.assert_allclose(fast, slow, rtol=0, atol=1e-15)
        assert abs(slow.sum() - 1.0) < 1e-12


def test_probability_pattern_small4t_all_sixteen():
    inst = load_instance("small4t")
    sup = ScenarioSupport(inst)
    for w in itertools.product((0, 1), repeat=sup.n_nodes):
        slow = probability_oracle(inst, w)
        fast = sup.probability(np.array(w))
        np.testing.assert_allclose(fast, slow, rtol=0, atol=1e-15)


def test_probability_endpoints(tiny2):
    inst, sup, _ = tiny2
    base = probability_oracle(inst, (0, 0))
    # no investment: pure product of base vectors
    p0 = [nd.prob_base for nd in inst.candidates]
    expect = np.array([p0[0][i] * p1v for i in range(len(p0[0])) for p1v in p0[1]])
    np.testing.assert_allclose(base, expect, atol=1e-15)


# ------------------------------------------------------------------ transport


def test_transport_zero_radius_is_expectation(tiny2, tiny2_theta):
    inst, sup, feas = tiny2
    p = probability_oracle(inst, (1, 1))
    res = primal_inner_lp(sup, tiny2_theta, p, 0.0, feasible=feas)
    feas_mass = p[feas]
    assert res.value == pytest.approx(float(feas_mass @ tiny2_theta[feas]), rel=1e-9)
    np.testing.assert_allclose(res.worst_p, p, atol=1e-9)
    assert res.moved_mass == pytest.approx(0.0, abs=1e-9)


def test_transport_saturated_radius_moves_all_movable_mass(tiny2, tiny2_theta):
    inst, sup, feas = tiny2
    p = probability_oracle(inst, (1, 1))
    grid = radius_grid(sup)
    res = primal_inner_lp(sup, tiny2_theta, p, float(grid[-1]), feasible=feas)
    movable = p[feas].sum()
    top = tiny2_theta[feas].max()
    assert res.value == pytest.approx(movable * top, rel=1e-9)


def test_transport_phantom_mass_is_frozen(tiny2, tiny2_theta):
    inst, sup, feas = tiny2
    p = probability_oracle(inst, (1, 1))
    res = primal_inner_lp(sup, tiny2_theta, p, 300.0, feasible=feas)
    # screened-out scenario keeps its probability and contributes zero cost
    for j in np.flatnonzero(~feas):
        assert res.worst_p[j] == pytest.approx(p[j], abs=1e-12)
    assert res.worst_p.sum() == pytest.approx(1.0, abs=1e-9)
    assert res.value == pytest.approx(10231.7867564680, rel=1e-9)
    np.testing.assert_allclose(res.worst_p, [0.0, 0.56, 0.11, 0.33], atol=1e-9)


def test_transport_value_nondecreasing_in_radius(tiny2, tiny2_theta):
    inst, sup, feas = tiny2
    p = probability_oracle(inst, (0, 1))
    prev = -np.inf
    for r in radius_grid(sup):
        val = primal_inner_lp(sup, tiny2_theta, p, float(r), feasible=feas).value
        assert val >= prev - 1e-9
        prev = val


def test_radius_grid_endpoints(tiny2):
    _, sup, _ = tiny2
    grid = radius_grid(sup)
    assert grid[0] == 0.0
    d = sup.daily
    dia = max(
        float(np.abs(d[i] - d[j]).sum())
        for i in range(len(d))
        for j in range(len(d))
    )
    assert grid[-1] == pytest.approx(dia)
    assert len(grid) == 5
    assert np.all(np.diff(grid) > 0)


# ------------------------------------------------------------------ piecewise


def _bpr(x):
    # classic polynomial congestion delay, strictly convex on x >= 0
    return 1.5 * x + 0.15 * 1.5 * x**5 / 40.0**4


def test_interpolant_exact_at_knots():
    for k in (1, 2, 7):
        xs = np.linspace(0.0, 80.0, k + 1)
        vals = pl_interpolant(_bpr, 80.0, k, xs)
        np.testing.assert_allclose(vals, _bpr(xs), rtol=1e-12, atol=1e-9)


def test_interpolant_single_segment_is_secant():
    x = np.array([0.0, 20.0, 50.0, 80.0])
    got = pl_interpolant(_bpr, 80.0, 1, x)
    slope = _bpr(80.0) / 80.0
    np.testing.assert_allclose(got, slope * x, rtol=1e-12)


def test_interpolant_overestimates_convex_function():
    x = np.linspace(0.0, 80.0, 301)
    got = pl_interpolant(_bpr, 80.0, 4, x)
    assert np.all(got >= _bpr(x) - 1e-9)


def test_piecewise_gap_shrinks_with_segments():
    g1 = piecewise_gap(_bpr, 80.0, 1)
    g20 = piecewise_gap(_bpr, 80.0, 20)
    g40 = piecewise_gap(_bpr, 80.0, 40)
    assert g1 > g20 > g40 >= 0.0
    assert g40 < 1e-2 * g1


# -------------------------------------------------------------- plan oracle


def test_exhaustive_oracle_agrees_with_enumerate(tiny2):
    inst, sup, feas = tiny2
    from ddu_planner.assemble import RobustConfig, solve_robust

    res = exhaustive_plan_oracle(inst, 300.0, engine="highs")
    sol = solve_robust(
        inst,
        RobustConfig(mode="ddu", radius=300.0, reduce="all", bilinear="enumerate"),
        sup,
        feas,
    )
    assert res.value == pytest.approx(4072096.2993363454, rel=1e-9)
    assert sol.objective == pytest.approx(res.value, rel=1e-9)
    assert sol.pattern.bits == res.bits == (1, 1, 0, 1, 1, 0)
    # every enumerated record is an upper bound for the optimum
    finite = [r for r in res.records if np.isfinite(r.value)]
    assert finite and all(r.value >= res.value - 1e-6 for r in finite)


# ------------------------------------------------------------------- records


def test_oracle_record_errors(tmp_path):
    recs = [
        OracleRecord("dual_gap", "tiny2", "r=0", 10.0, 10.0),
        OracleRecord("dual_gap", "tiny2", "r=300", 10.0, 10.5),
    ]
    assert recs[0].abs_err == 0.0
    assert recs[1].rel_err == pytest.approx(0.5 / 10.5)
    out = tmp_path / "oracle.csv"
    failures = write_oracle_csv(out, recs, tol=1e-6)
    assert failures == 1
    text = out.read_text()
    assert "pass" in text and "FAIL" in text
    # determinism: same call, same bytes
    write_oracle_csv(tmp_path / "o2.csv", recs, tol=1e-6)
    assert out.read_bytes() == (tmp_path / "o2.csv").read_bytes()
