"""Robust-counterpart assembly: counts, duality, modes, guards."""

import copy
import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ddu_planner.assemble import (
    BILINEAR_MODES,
    MODES,
    REDUCE_LEVELS,
    AssembledModel,
    ModelSizeError,
    RobustConfig,
    build_robust_model,
    dual_inner_value,
    max_capacity_pattern,
    nu_upper_bound,
    pattern_outcomes,
    reformulation_report,
    shortage_multiplier_cap,
    size_formula,
    solve_robust,
)
from ddu_planner.network import load_instance
from ddu_planner.oracles import primal_inner_lp, probability_oracle, radius_grid
from ddu_planner.scenarios import ScenarioSupport, screen_feasible

TINY_OPT = 4072096.2993363454
TINY_BITS = (1, 1, 0, 1, 1, 0)
TINY_THETA = np.array([13177.34, 15387.0167079787, 14682.34, 0.0])


@pytest.fixture(scope="module")
def tiny2():
    inst = load_instance("tiny2")
    return inst, ScenarioSupport(inst), screen_feasible(inst)


@pytest.fixture(scope="module")
def tiny2_theta(tiny2):
    inst, sup, feas = tiny2
    return pattern_outcomes(inst, sup, feas, (1, 1), engine="highs")


# -------------------------------------------------------------------- config


def test_config_validation():
    with pytest.raises(ValueError):
        RobustConfig(mode="nope")
    with pytest.raises(ValueError):
        RobustConfig(reduce="partial")
    with pytest.raises(ValueError):
        RobustConfig(bilinear="exact")
    with pytest.raises(ValueError):
        RobustConfig(radius=-1.0)
    cfg = RobustConfig()
    assert cfg.mode in MODES and cfg.reduce in REDUCE_LEVELS
    assert cfg.bilinear in BILINEAR_MODES


# -------------------------------------------------------------------- counts


def test_size_formula_synthetic():
    # 9 scenarios over 2 nodes: the worked numbers from the design notes
    assert size_formula("none", 9, 2) == (981, 497)
    assert size_formula("redundancy", 9, 2) == (162, 164)
    assert size_formula("comonotone", 9, 2) == (81, 83)
    assert size_formula("all", 9, 2) == (81, 83)


def test_full_build_counts_tiny2(tiny2):
    inst, sup, feas = tiny2
    rows, consts = reformulation_report(
        inst, radius=300.0, build=True, support=sup, feasible=feas
    )
    got = {r.reduce: (r.actual_rows, r.actual_vars) for r in rows}
    assert got["none"] == (196, 102)
    assert got["redundancy"] == (32, 34)
    assert got["comonotone"] == (16, 18)
    assert got["all"] == (16, 18)
    assert all(r.matches for r in rows)
    assert consts["multiplier_cap"] == pytest.approx(
        shortage_multiplier_cap(inst)
    )
    assert consts["nu_bound"] == pytest.approx(nu_upper_bound(inst))


def test_big_m_is_per_pair_twice_delta(tiny2):
    inst, sup, feas = tiny2
    _, consts = reformulation_report(
        inst, radius=0.0, build=True, support=sup, feasible=feas
    )
    d = sup.daily
    worst = max(
        2.0 * abs(float(d[s, i] - d[u, i]))
        for s in range(len(d))
        for u in range(len(d))
        for i in range(sup.n_nodes)
    )
    assert consts["big_m_pair_max"] == pytest.approx(worst)


def test_guard_refuses_oversized_full_build():
    inst = load_instance("medium6")
    cfg = RobustConfig(
        mode="ddu", radius=100.0, reduce="none", shape="full", bilinear="mccormick"
    )
    with pytest.raises(ModelSizeError):
        build_robust_model(inst, cfg)


# ------------------------------------------------------------------- duality


def test_dual_matches_primal_on_every_center(tiny2, tiny2_theta):
    inst, sup, feas = tiny2
    m_eps = shortage_multiplier_cap(inst)
    for w in itertools.product((0, 1), repeat=sup.n_nodes):
        p = probability_oracle(inst, w)
        for r in radius_grid(sup):
            ref = primal_inner_lp(sup, tiny2_theta, p, float(r), feasible=feas)
            for red in ("none", "comonotone"):
                dual = dual_inner_value(
                    sup, feas, tiny2_theta, p, float(r), m_eps, reduce=red
                )
                assert dual == pytest.approx(ref.value, rel=1e-8, abs=1e-6)


@settings(max_examples=25, deadline=None)
@given(
    raw=st.lists(
        st.floats(min_value=0.01, max_value=1.0), min_size=4, max_size=4
    ),
    radius=st.floats(min_value=0.0, max_value=1200.0),
)
def test_dual_primal_identity_random_centers(raw, radius):
    inst = load_instance("tiny2")
    sup = ScenarioSupport(inst)
    feas = screen_feasible(inst)
    theta = pattern_outcomes(inst, sup, feas, (1, 1), engine="highs")
    p = np.array(raw) / sum(raw)
    ref = primal_inner_lp(sup, theta, p, radius, feasible=feas)
    dual = dual_inner_value(
        sup, feas, theta, p, radius, shortage_multiplier_cap(inst)
    )
    assert dual == pytest.approx(ref.value, rel=1e-7, abs=1e-5)


# --------------------------------------------------------------------- modes


def test_enumerate_matches_frozen_optimum(tiny2):
    inst, sup, feas = tiny2
    sol = solve_robust(
        inst,
        RobustConfig(mode="ddu", radius=300.0, reduce="all", bilinear="enumerate"),
        sup,
        feas,
    )
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(TINY_OPT, rel=1e-9)
    assert sol.pattern.bits == TINY_BITS
    assert sol.capex == pytest.approx(330369.9831942581, rel=1e-9)
    np.testing.assert_allclose(sol.probs, [0.18, 0.22, 0.27, 0.33], atol=1e-12)
    # screened-out scenario is carried with a hard zero outcome
    assert sol.theta[3] == 0.0


def test_all_reduce_levels_agree_in_enumerate_mode(tiny2):
    inst, sup, feas = tiny2
    objs = {}
    for red in REDUCE_LEVELS:
        sol = solve_robust(
            inst,
            RobustConfig(mode="ddu", radius=300.0, reduce=red, bilinear="enumerate"),
            sup,
            feas,
        )
        objs[red] = sol.objective
        assert sol.pattern.bits == TINY_BITS
    vals = list(objs.values())
    assert max(vals) - min(vals) <= 1e-6 * max(1.0, abs(vals[0]))


def test_mccormick_brackets_exact_value(tiny2):
    inst, sup, feas = tiny2
    sol = solve_robust(
        inst,
        RobustConfig(mode="ddu", radius=300.0, reduce="all", bilinear="mccormick"),
        sup,
        feas,
    )
    assert sol.status == "optimal"
    assert sol.mc_gap > 0.0
    assert sol.objective <= TINY_OPT + 1e-6
    assert sol.objective + sol.mc_gap >= TINY_OPT - 1e-6
    assert sol.certifications["eps_ok"] and sol.certifications["nu_ok"]


def test_so_mode_is_base_expectation(tiny2):
    inst, sup, feas = tiny2
    sol = solve_robust(
        inst,
        RobustConfig(mode="so", radius=0.0, reduce="all", bilinear="enumerate"),
        sup,
        feas,
    )
    # reconstruct: capex + Da * sum(base-product probs * theta) at the optimum
    p0 = probability_oracle(inst, (0,) * sup.n_nodes)
    theta = np.array([sol.theta[j] for j in range(sup.n_scenarios)])
    expect = sol.capex + inst.econ.days_per_year * float(p0 @ theta)
    assert sol.objective == pytest.approx(expect, rel=1e-9)


def test_ro_mode_ignores_radius(tiny2):
    inst, sup, feas = tiny2
    a = solve_robust(
        inst, RobustConfig(mode="ro", radius=0.0, bilinear="enumerate"), sup, feas
    )
    b = solve_robust(
        inst, RobustConfig(mode="ro", radius=900.0, bilinear="enumerate"), sup, feas
    )
    assert a.objective == pytest.approx(b.objective, rel=1e-12)


def test_ddu_collapses_to_so_when_probabilities_static():
    inst = copy.deepcopy(load_instance("small4t"))
    for nd in inst.candidates:
        nd.prob_invested = nd.prob_base.copy()
    sup = ScenarioSupport(inst)
    feas = screen_feasible(inst)
    so = solve_robust(
        inst, RobustConfig(mode="so", radius=0.0, bilinear="enumerate"), sup, feas
    )
    ddu = solve_robust(
        inst, RobustConfig(mode="ddu", radius=0.0, bilinear="enumerate"), sup, feas
    )
    assert ddu.objective == pytest.approx(so.objective, rel=1e-9)


def test_radius_zero_sits_below_positive_radius(tiny2):
    inst, sup, feas = tiny2
    lo = solve_robust(
        inst, RobustConfig(mode="ddu", radius=0.0, bilinear="enumerate"), sup, feas
    )
    hi = solve_robust(
        inst, RobustConfig(mode="ddu", radius=600.0, bilinear="enumerate"), sup, feas
    )
    assert lo.objective <= hi.objective + 1e-9


# ----------------------------------------------------------------- mechanics


def test_all_built_outcomes_frozen(tiny2, tiny2_theta):
    np.testing.assert_allclose(tiny2_theta, TINY_THETA, rtol=1e-9)


def test_max_capacity_pattern_builds_everything(tiny2):
    inst, sup, _ = tiny2
    pat = max_capacity_pattern(inst, (1, 1))
    assert pat.w_hy == (1, 1)
    assert pat.w_p2g == (1, 1)
    assert sum(pat.w_pipe) == max(0, len(inst.candidates) - len(inst.sources))
    assert pat.capex(inst) == pytest.approx(1582000.0)
    for h, nd in zip(pat.h_hy, inst.candidates):
        assert h == pytest.approx(nd.hrs_cap_range[1])


def test_pattern_outcomes_raises_when_underbuilt(tiny2):
    inst, sup, feas = tiny2
    with pytest.raises(RuntimeError, match="infeasible"):
        pattern_outcomes(inst, sup, feas, (0, 0), engine="highs")


def test_assembled_model_registers_eta_and_eps(tiny2):
    inst, sup, feas = tiny2
    cfg = RobustConfig(mode="ddu", radius=300.0, reduce="comonotone",
                       shape="full", bilinear="mccormick")
    am = build_robust_model(inst, cfg, support=sup, feasible=feas)
    assert isinstance(am, AssembledModel)
    assert am.eps_col is not None and am.eta_col is not None
    # the dual constant is pinned, not free
    assert am.model.bounds(am.eta_col) == (0.0, 0.0)
    # the multiplier is capped by the shortage-penalty rate
    assert am.model.bounds(am.eps_col)[1] == pytest.approx(
        shortage_multiplier_cap(inst)
    )
