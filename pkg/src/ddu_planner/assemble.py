"""Robust assembly: worst-case blocks, reductions, baselines, reports.

This layer welds the deterministic dispatch builders to the scenario
machinery and produces solvable models for four planning modes:

* ``ddu``  — worst-case expected cost over a transport-budget ambiguity
  set whose center distribution *moves with the build decisions*;
* ``diu``  — same ambiguity set frozen at the all-invested center,
  independent of the build decisions;
* ``so``   — plain expected cost under the no-investment center;
* ``ro``   — worst single feasible scenario (no probabilities).

Two interchangeable couplings handle the decision-dependent bilinearity
(probability × dual multiplier) in ``ddu`` mode:

* ``enumerate`` — solve one exact model per station-build pattern with
  the probabilities folded to constants, then take the best pattern;
* ``mccormick`` — one monolithic model with envelope variables replacing
  each product, plus a reported worst-case envelope gap.

Model *shape* is orthogonal to all of this. ``lean`` (the solving shape)
folds every pair distance into the epigraph rows. ``full`` additionally
emits the counted exactness-linearization block in one of three
progressively smaller layouts selected by ``reduce``:

* ``none``        — per ordered scenario pair and demand node: an
  indicator-gated linearization of |Δ|·ε with two caps, one floor and
  three indicator-link rows (6·U²·B rows, 3·U²·B auxiliaries), plus one
  outcome-definition row per scenario (U more rows, U more auxiliaries,
  and the two shared multipliers);
* ``redundancy``  — the indicator machinery collapses to one pinning
  equality z = |Δ|·ε per pair and node (U²·B rows);
* ``comonotone``  — only strict upper-triangle pairs carry a pinned
  per-node distance contribution, plus zero rows on half the diagonal
  (U²·B/2 rows; requires an even node count);
* ``bundling``    — the comonotone layout over the bundled unit set
  (U shrinks to the number of units);
* ``all``         — alias for ``bundling``.

Levels are cumulative simplifications of the same block; optimal
objectives are invariant across them (an acceptance criterion).

Infeasible-traffic scenarios ("phantoms") follow the inert convention:
mass kept, outcome pinned 0, multiplier pinned 0 and excluded from the
objective, no dispatch block, no worst-case rows. The shared scalar
offset multiplier is pinned to zero in every mode (a gauge choice at
full mass; a boundedness requirement at partial mass) but registered so
size accounting matches the two-auxiliary convention.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .dispatch import (
    COST_CATEGORIES,
    DispatchBlock,
    InvestmentVars,
    build_dispatch,
    build_investment,
    investment_cost_expr,
)
from .milp import MilpModel, MilpResult, solve_lp, solve_milp
from .network import Instance
from .scenarios import (
    Bundle,
    ScenarioSupport,
    ShapingBlock,
    build_shaping,
    bundle_scenarios,
    screen_feasible,
    singleton_bundles,
    unit_mass,
)

__all__ = [
    "MODES",
    "REDUCE_LEVELS",
    "BILINEAR_MODES",
    "RobustConfig",
    "AssembledModel",
    "ModelSizeError",
    "build_robust_model",
    "solve_robust",
    "RobustSolution",
    "InvestmentPattern",
    "dual_inner_value",
    "pattern_outcomes",
    "resolve_scenario_lp",
    "nu_upper_bound",
    "shortage_multiplier_cap",
    "size_formula",
    "reformulation_report",
    "ReformRow",
]

MODES = ("ddu", "diu", "so", "ro")
REDUCE_LEVELS = ("none", "redundancy", "comonotone", "bundling", "all")
BILINEAR_MODES = ("mccormick", "enumerate")

FULL_ROW_GUARD = 2_000_000     # refuse counted blocks beyond this
LEAN_ROW_GUARD = 4_000_000      # refuse monoliths estimated beyond this


class ModelSizeError(RuntimeError):
    """Requested build exceeds the desk-scale guards."""


# ----------------------------------------------------------------- constants

def shortage_multiplier_cap(inst: Instance) -> float:
    """Valid upper bound on the transport-budget multiplier.

    The hydrogen shortage penalty is a Lipschitz constant of the optimal
    daily operating cost with respect to daily demand mass (any extra
    kilogram can always be left unserved), so the multiplier never needs
    to exceed it. Certified post-solve (optimum strictly below the cap).
    """
    return float(inst.econ.unserved_h2_cost)


def nu_upper_bound(inst: Instance) -> float:
    """Upper bound on any scenario's daily operating cost (envelope use).

    Sums each cost category's worst case: all demand unserved, every
    electric load shed, full-price purchases at every cap, all PV
    curtailed, and every road link at its flow ceiling all day. Generous
    by construction; validity is certified post-solve.
    """
    ec = inst.econ
    T = inst.horizon
    total = 0.0
    total += ec.unserved_h2_cost * sum(
        float(c.demand_levels[-1]) for c in inst.candidates)
    for s in inst.sources:
        total += s.receipt_cap_kg_h * float(np.max(s.purchase_price)) * T
    for link in inst.links:
        worst = 0.15 * link.t0_minutes * link.x_max ** 5 / link.capacity ** 4
        total += ec.congestion_cost_per_min * worst * T
    for plant in inst.power.pv:
        total += plant.curtail_cost * float(np.sum(plant.avail_mw))
    total += inst.power.unserved_cost * float(np.sum(inst.power.loads))
    total += inst.power.purchase_cap_mw * float(
        np.sum(inst.power.price_per_mwh))
    return total


def size_formula(reduce: str, n_units: int, n_nodes: int
                 ) -> tuple[int, int]:
    """(rows, auxiliary variables) of the counted block for a layout."""
    u, b = n_units, n_nodes
    if reduce == "none":
        return 6 * u * u * b + u, 3 * u * u * b + u + 2
    if reduce == "redundancy":
        return u * u * b, u * u * b + 2
    if reduce in ("comonotone", "bundling", "all"):
        if b % 2:
            raise ValueError("triangular layout needs an even node count")
        return u * u * b // 2, u * u * b // 2 + 2
    raise ValueError(f"unknown reduce level {reduce!r}")


# -------------------------------------------------------------- configuration

@dataclass
class RobustConfig:
    mode: str = "ddu"
    radius: float = 0.0
    reduce: str = "all"
    bilinear: str = "enumerate"
    shape: str = "lean"            # lean | full
    engine: str = "highs"
    node_limit: int = 200_000

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.reduce not in REDUCE_LEVELS:
            raise ValueError(f"reduce must be one of {REDUCE_LEVELS}")
        if self.bilinear not in BILINEAR_MODES:
            raise ValueError(f"bilinear must be one of {BILINEAR_MODES}")
        if self.shape not in ("lean", "full"):
            raise ValueError("shape must be 'lean' or 'full'")
        if self.radius < 0:
            raise ValueError("radius must be nonnegative")


def support_units(support: ScenarioSupport, feasible: np.ndarray,
                  reduce: str) -> list[Bundle]:
    """The unit set a layout works over (bundled only at those levels)."""
    if reduce in ("bundling", "all"):
        return bundle_scenarios(support, feasible)
    return singleton_bundles(support, feasible)


# --------------------------------------------------------- counted block emit

@dataclass
class CountedBlock:
    """Handles into an emitted linearization block."""

    kind: str                                  # none | redundancy | triangular
    z_cols: np.ndarray | None = None           # (U, U, B) for z-carrying kinds
    alpha_cols: np.ndarray | None = None       # flat, unreduced only
    c_cols: np.ndarray | None = None
    alpha_neg: np.ndarray | None = None        # 1.0 where the pair delta < 0
    eps_col: int = -1

    def repair(self, x: np.ndarray) -> np.ndarray:
        """Round the cosmetic indicator columns to a feasible point."""
        xr = x.copy()
        e = float(xr[self.eps_col])
        xr[self.alpha_cols] = self.alpha_neg
        xr[self.c_cols] = self.alpha_neg * e
        return xr


def _emit_unreduced(model: MilpModel, rep_daily: np.ndarray, m_eps: float,
                    eps: int, alpha_integer: bool = True) -> CountedBlock:
    """Indicator-gated linearization of |Δ|·ε per ordered pair and node.

    Per (pair s->u, node i) with Δ = daily_u[i] − daily_s[i] and the
    per-pair constant M = 2|Δ| (the tightest valid choice; see the rows):
        floor:  z ≥ |Δ|·ε
        cap_a:  z ≤ Δ·ε + M·c
        cap_b:  z ≤ −Δ·ε + M·ε − M·c
        c_hi:   c ≤ ε
        c_gate: c ≤ m_eps·α
        c_lo:   c ≥ ε − m_eps·(1 − α)
    Any feasible point already has z = |Δ|·ε exactly (the caps and the
    floor pin c to 0 or ε depending on the sign of Δ), so the continuous
    relaxation is objective-exact and α is cosmetic: :meth:`repair`
    rounds it without search.
    """
    n_units, n_nodes = rep_daily.shape
    z_cols = np.empty((n_units, n_units, n_nodes), dtype=np.int64)
    alpha_cols = np.empty(n_units * n_units * n_nodes, dtype=np.int64)
    c_cols = np.empty_like(alpha_cols)
    alpha_neg = np.zeros(alpha_cols.size)
    k = 0
    for s in range(n_units):
        for u in range(n_units):
            for i in range(n_nodes):
                delta = float(rep_daily[u, i] - rep_daily[s, i])
                big_m = 2.0 * abs(delta)
                z = model.add_variable(f"z[{s},{u},{i}]", tag="wlin:z")
                c = model.add_variable(f"cc[{s},{u},{i}]", tag="wlin:c")
                a = model.add_variable(f"al[{s},{u},{i}]", ub=1.0,
                                       integer=alpha_integer,
                                       tag="wlin:alpha")
                model.add_constraint([z, eps], [1.0, -abs(delta)], ">=",
                                     0.0, tag="wlin:floor")
                model.add_constraint([z, eps, c], [1.0, -delta, -big_m],
                                     "<=", 0.0, tag="wlin:cap_a")
                model.add_constraint([z, eps, c],
                                     [1.0, delta - big_m, big_m],
                                     "<=", 0.0, tag="wlin:cap_b")
                model.add_constraint([c, eps], [1.0, -1.0], "<=", 0.0,
                                     tag="wlin:c_hi")
                model.add_constraint([c, a], [1.0, -m_eps], "<=", 0.0,
                                     tag="wlin:c_gate")
                model.add_constraint([c, eps, a], [1.0, -1.0, -m_eps],
                                     ">=", -m_eps, tag="wlin:c_lo")
                z_cols[s, u, i] = z
                alpha_cols[k] = a
                c_cols[k] = c
                alpha_neg[k] = 1.0 if delta < 0 else 0.0
                k += 1
    return CountedBlock("none", z_cols, alpha_cols, c_cols, alpha_neg, eps)


def _emit_redundancy(model: MilpModel, rep_daily: np.ndarray,
                     eps: int) -> CountedBlock:
    """Sign-resolved layout: one pinning equality z = |Δ|·ε per pair/node."""
    n_units, n_nodes = rep_daily.shape
    z_cols = np.empty((n_units, n_units, n_nodes), dtype=np.int64)
    for s in range(n_units):
        for u in range(n_units):
            for i in range(n_nodes):
                delta = abs(float(rep_daily[u, i] - rep_daily[s, i]))
                z = model.add_variable(f"z[{s},{u},{i}]", tag="wfix:z")
                model.add_constraint([z, eps], [1.0, -delta], "=", 0.0,
                                     tag="wfix:pin")
                z_cols[s, u, i] = z
    return CountedBlock("redundancy", z_cols, eps_col=eps)


def _emit_triangular(model: MilpModel, rep_daily: np.ndarray) -> CountedBlock:
    """Comonotone layout: per-node distance contributions, strict pairs.

    One pinned equality γ = |Δ| per strict upper-triangle pair and node,
    plus zero rows on the diagonal for the first half of the nodes —
    U²·B/2 rows total for an even node count B. The γ values are data
    (the support is known), so the worst-case rows fold them as
    constants; the block itself is the size-accounted carrier.
    """
    n_units, n_nodes = rep_daily.shape
    if n_nodes % 2:
        raise ModelSizeError(
            "triangular reduction needs an even demand-node count")
    for s in range(n_units):
        for u in range(s + 1, n_units):
            for i in range(n_nodes):
                g = model.add_variable(f"g[{s},{u},{i}]", tag="wred:gamma")
                delta = abs(float(rep_daily[u, i] - rep_daily[s, i]))
                model.add_constraint([g], [1.0], "=", delta,
                                     tag="wred:dist")
    for u in range(n_units):
        for i in range(n_nodes // 2):
            g = model.add_variable(f"g[{u},{u},{i}]", tag="wred:gamma")
            model.add_constraint([g], [1.0], "=", 0.0, tag="wred:dist")
    return CountedBlock("triangular")


# ------------------------------------------------------------------- assembly

@dataclass
class AssembledModel:
    model: MilpModel
    config: RobustConfig
    inst: Instance
    support: ScenarioSupport
    feasible: np.ndarray
    units: list[Bundle]
    inv: InvestmentVars
    blocks: dict[int, DispatchBlock]           # unit index -> dispatch block
    theta: dict[int, int]                      # unit index -> outcome column
    nu: dict[int, int] = field(default_factory=dict)
    eps_col: int = -1
    eta_col: int = -1
    worst_col: int = -1                        # ro only
    probs: np.ndarray | None = None            # per-unit mass (None: variable)
    shaping: ShapingBlock | None = None
    rho: dict[int, int] = field(default_factory=dict)
    pi_bounds: dict[int, tuple[float, float]] = field(default_factory=dict)
    mc_gap: float = 0.0
    nu_bound: float = 0.0
    m_eps: float = 0.0
    big_m_pair: float = 0.0                    # max per-pair constant 2|Δ|
    big_m_global: float = 0.0                  # max |Δ| over pairs and nodes
    counted: CountedBlock | None = None
    w_fixed: tuple[int, ...] | None = None

    @property
    def repair(self):
        if self.counted is not None and self.counted.kind == "none":
            return self.counted.repair
        return None

    def capex_value(self, x: np.ndarray) -> float:
        cols, coefs = investment_cost_expr(self.inst, self.inv)
        return float(np.dot(x[cols], coefs))


def _unit_pi_bounds(support: ScenarioSupport, unit: Bundle
                    ) -> tuple[float, float]:
    """Range of a unit's probability mass over every build pattern."""
    lo = hi = 1.0
    for i, levels in enumerate(unit.sets):
        m0 = float(sum(support.p0[i][k] for k in levels))
        m1 = float(sum(support.p1[i][k] for k in levels))
        lo *= min(m0, m1)
        hi *= max(m0, m1)
    return lo, hi


def build_robust_model(inst: Instance, cfg: RobustConfig,
                       w_fixed=None,
                       support: ScenarioSupport | None = None,
                       feasible: np.ndarray | None = None
                       ) -> AssembledModel:
    """Assemble one solvable model per the configuration.

    ``w_fixed`` pins the station-build pattern (the enumerate coupling);
    probabilities then fold to constants and no envelope machinery is
    emitted. Without it, ``ddu`` requires the mccormick coupling.
    """
    if support is None:
        support = ScenarioSupport(inst)
    if feasible is None:
        feasible = screen_feasible(inst, engine=cfg.engine)
    units = support_units(support, feasible, cfg.reduce)
    n_units = len(units)
    n_nodes = support.n_nodes
    reps = np.array([u.members[0] for u in units], dtype=np.int64)
    rep_daily = support.daily[reps]
    unit_feas = np.array([u.feasible for u in units], dtype=bool)
    da = float(inst.econ.days_per_year)
    m_eps = shortage_multiplier_cap(inst)
    v_bar = nu_upper_bound(inst)

    if cfg.shape == "full":
        rows_est = size_formula(cfg.reduce, n_units, n_nodes)[0]
        if rows_est > FULL_ROW_GUARD:
            raise ModelSizeError(
                f"counted block would have {rows_est} rows "
                f"(> {FULL_ROW_GUARD}); use the lean shape or a "
                f"stronger reduction")
    n_feas = int(unit_feas.sum())
    est = n_feas * n_feas + 400 * n_feas
    if est > LEAN_ROW_GUARD:
        raise ModelSizeError(
            f"~{est} worst-case/dispatch rows over {n_feas} feasible "
            f"scenarios exceeds the desk guard ({LEAN_ROW_GUARD})")

    if cfg.mode == "ddu" and w_fixed is None and cfg.bilinear != "mccormick":
        raise ValueError("ddu without a fixed pattern needs "
                         "bilinear='mccormick' (or use solve_robust)")

    model = MilpModel(f"{inst.name}-{cfg.mode}")
    inv = build_investment(model, inst)
    if w_fixed is not None:
        w_fixed = tuple(int(v) for v in w_fixed)
        for k, v in enumerate(w_fixed):
            model.fix_variable(int(inv.w_hy[k]), float(v))
            model.fix_variable(int(inv.w_hs[k]), float(v))
    cap_cols, cap_coefs = investment_cost_expr(inst, inv)
    for c, v in zip(cap_cols, cap_coefs):
        model.add_objective(int(c), float(v))

    # per-unit probability mass, when it is a constant of the mode
    if cfg.mode == "so":
        probs = unit_mass(support, units, np.zeros(n_nodes))
    elif cfg.mode == "diu":
        probs = unit_mass(support, units, np.ones(n_nodes))
    elif cfg.mode == "ddu" and w_fixed is not None:
        probs = unit_mass(support, units, np.asarray(w_fixed, dtype=float))
    else:
        probs = None

    # second-stage dispatch per feasible unit
    blocks: dict[int, DispatchBlock] = {}
    for u in range(n_units):
        if unit_feas[u]:
            blocks[u] = build_dispatch(model, inst, support.daily[reps[u]],
                                       inv, label=f"s{reps[u]}:")

    in_block = cfg.shape == "full" and cfg.reduce == "none"
    theta_vtag = "wlin:theta" if in_block else "dual:theta"
    theta_rtag = "wlin:theta_def" if in_block else "dual:theta_def"
    if cfg.shape == "full":
        mult_prefix = {"none": "wlin", "redundancy": "wfix"}.get(
            cfg.reduce, "wred")
    else:
        mult_prefix = "dual"

    theta: dict[int, int] = {}
    for u in range(n_units):
        if unit_feas[u]:
            t = model.add_variable(f"theta[{u}]", tag=theta_vtag)
            blk = blocks[u]
            model.add_constraint(
                np.concatenate([[t], blk.cost_cols]),
                np.concatenate([[1.0], -blk.cost_coefs]),
                "=", 0.0, tag=theta_rtag)
        else:
            t = model.add_variable(f"theta[{u}]", ub=0.0, tag=theta_vtag)
            model.add_constraint([t], [1.0], "=", 0.0, tag=theta_rtag)
        theta[u] = t

    am = AssembledModel(model, cfg, inst, support, feasible, units, inv,
                        blocks, theta, m_eps=m_eps, nu_bound=v_bar,
                        probs=probs, w_fixed=w_fixed)
    diffs = np.abs(rep_daily[:, None, :] - rep_daily[None, :, :])
    am.big_m_global = float(diffs.max()) if diffs.size else 0.0
    am.big_m_pair = 2.0 * am.big_m_global

    if cfg.mode == "ro":
        worst = model.add_variable("worst_case", obj=da, tag="dual:worst")
        for u in range(n_units):
            if unit_feas[u]:
                model.add_constraint([worst, theta[u]], [1.0, -1.0], ">=",
                                     0.0, tag="dual:epi")
        am.worst_col = worst
        return am

    if cfg.mode == "so":
        # plain expectation: no transport machinery, mass on outcomes
        for u in range(n_units):
            if unit_feas[u]:
                model.add_objective(theta[u], da * float(probs[u]))
        return am

    # ---------------- worst-case expectation dual ----------------
    mccormick = cfg.mode == "ddu" and w_fixed is None
    nu_lb, nu_ub = (0.0, v_bar) if mccormick else (-math.inf, math.inf)
    nu: dict[int, int] = {}
    for u in range(n_units):
        if unit_feas[u]:
            ob = da * float(probs[u]) if probs is not None else 0.0
            nu[u] = model.add_variable(f"nu[{u}]", nu_lb, nu_ub, obj=ob,
                                       tag="dual:nu")
        else:
            nu[u] = model.add_variable(f"nu[{u}]", 0.0, 0.0, tag="dual:nu")
    eps = model.add_variable("eps", 0.0, m_eps, obj=da * cfg.radius,
                             tag=f"{mult_prefix}:eps")
    eta = model.add_variable("eta", 0.0, 0.0, obj=da,
                             tag=f"{mult_prefix}:eta")
    am.nu, am.eps_col, am.eta_col = nu, eps, eta

    counted: CountedBlock | None = None
    if cfg.shape == "full":
        if cfg.reduce == "none":
            counted = _emit_unreduced(model, rep_daily, m_eps, eps)
        elif cfg.reduce == "redundancy":
            counted = _emit_redundancy(model, rep_daily, eps)
        else:
            counted = _emit_triangular(model, rep_daily)
    am.counted = counted

    feas_units = [u for u in range(n_units) if unit_feas[u]]
    for s in feas_units:
        for u in feas_units:
            if counted is not None and counted.z_cols is not None:
                cols = np.concatenate(
                    [[nu[s], eta, theta[u]], counted.z_cols[s, u]])
                vals = np.concatenate(
                    [[1.0, 1.0, -1.0], np.ones(n_nodes)])
                model.add_constraint(cols, vals, ">=", 0.0, tag="dual:epi")
            else:
                d_su = float(np.abs(rep_daily[s] - rep_daily[u]).sum())
                model.add_constraint(
                    [nu[s], eps, eta, theta[u]], [1.0, d_su, 1.0, -1.0],
                    ">=", 0.0, tag="dual:epi")

    if mccormick:
        shaping = build_shaping(model, support, inv.w_hy, bundles=units)
        am.shaping = shaping
        final = shaping.final_cols
        gap = 0.0
        for u in feas_units:
            lo, hi = _unit_pi_bounds(support, units[u])
            am.pi_bounds[u] = (lo, hi)
            rho = model.add_variable(f"rho[{u}]", -math.inf, math.inf,
                                     obj=da, tag="mc:rho")
            pi_c, nu_c = int(final[u]), nu[u]
            model.add_constraint([rho, nu_c], [1.0, -lo], ">=", 0.0,
                                 tag="mc:env_a")
            model.add_constraint([rho, nu_c, pi_c], [1.0, -hi, -v_bar],
                                 ">=", -hi * v_bar, tag="mc:env_b")
            model.add_constraint([rho, nu_c], [1.0, -hi], "<=", 0.0,
                                 tag="mc:env_c")
            model.add_constraint([rho, nu_c, pi_c], [1.0, -lo, -v_bar],
                                 "<=", -lo * v_bar, tag="mc:env_d")
            am.rho[u] = rho
            gap += (hi - lo) * v_bar / 4.0
        am.mc_gap = da * gap
    return am


# ------------------------------------------------------------ inner-dual solve

def dual_inner_value(support: ScenarioSupport, feasible: np.ndarray,
                     theta: np.ndarray, probs: np.ndarray, radius: float,
                     m_eps: float, reduce: str = "comonotone",
                     engine: str = "highs") -> float:
    """Worst-case expectation via the dual block alone, outcomes fixed.

    Builds only the multiplier machinery (no dispatch, no investment) on
    constant outcomes ``theta`` and center mass ``probs``; the strong-
    duality acceptance check compares this against the independent
    transport-LP oracle. ``reduce='none'`` exercises the unreduced
    linearization (indicators relaxed — the block is already exact in
    its continuous relaxation).
    """
    n = support.n_scenarios
    model = MilpModel("inner-dual")
    feas = [i for i in range(n) if feasible[i]]
    nu = {}
    for i in feas:
        nu[i] = model.add_variable(f"nu[{i}]", -math.inf, math.inf,
                                   obj=float(probs[i]))
    eps = model.add_variable("eps", 0.0, m_eps, obj=float(radius))
    eta = model.add_variable("eta", 0.0, 0.0, obj=1.0)
    counted = None
    if reduce == "none":
        counted = _emit_unreduced(model, support.daily, m_eps, eps,
                                  alpha_integer=False)
    elif reduce == "redundancy":
        counted = _emit_redundancy(model, support.daily, eps)
    for s in feas:
        for u in feas:
            if counted is not None:
                cols = np.concatenate([[nu[s], eta], counted.z_cols[s, u]])
                vals = np.concatenate([[1.0, 1.0], np.ones(support.n_nodes)])
                model.add_constraint(cols, vals, ">=", float(theta[u]))
            else:
                d_su = support.distance(s, u)
                model.add_constraint([nu[s], eps, eta], [1.0, d_su, 1.0],
                                     ">=", float(theta[u]))
    res = solve_lp(model, engine=engine)
    if res.status != "optimal":
        raise RuntimeError(f"inner dual LP {res.status}")
    return float(res.objective)


# ------------------------------------------------------- fixed-pattern resolve

@dataclass
class InvestmentPattern:
    w_hy: tuple[int, ...]
    w_p2g: tuple[int, ...]
    w_pipe: tuple[int, ...]
    h_hy: np.ndarray
    h_hs: np.ndarray
    h_p2g: np.ndarray

    @property
    def bits(self) -> tuple[int, ...]:
        return self.w_hy + self.w_p2g + self.w_pipe

    def capex(self, inst: Instance) -> float:
        ec = inst.econ
        return (ec.hrs_capex_per_kg * float(self.h_hy.sum())
                + ec.storage_capex_per_kg * float(self.h_hs.sum())
                + ec.p2g_capex_per_mw * float(self.h_p2g.sum())
                + sum(p.capital_cost * w
                      for p, w in zip(inst.pipes, self.w_pipe)))


def max_capacity_pattern(inst: Instance, w_hy) -> InvestmentPattern:
    """Deterministic sizing convention for outcome evaluations.

    Capacities at their maxima times the build flag, electrolyzers
    following the stations, and the lowest-index pipes up to the count
    cap — the convention under which per-scenario outcomes are computed
    when a duality check needs *some* consistent second stage.
    """
    cands = inst.candidates
    w_hy = tuple(int(v) for v in w_hy)
    cap = max(0, len(cands) - len(inst.sources))
    w_pipe = tuple(1 if k < cap else 0 for k in range(len(inst.pipes)))
    return InvestmentPattern(
        w_hy, w_hy, w_pipe,
        np.array([c.hrs_cap_range[1] * w for c, w in zip(cands, w_hy)]),
        np.array([c.storage_cap_range[1] * w for c, w in zip(cands, w_hy)]),
        np.array([c.p2g_cap_range[1] * w for c, w in zip(cands, w_hy)]),
    )


def resolve_scenario_lp(inst: Instance, pattern: InvestmentPattern,
                        daily: np.ndarray, engine: str = "highs"
                        ) -> tuple[float, DispatchBlock, np.ndarray]:
    """Exact one-scenario operating cost under a frozen investment."""
    model = MilpModel("resolve")
    inv = build_investment(model, inst, relax_binaries=True)
    for k in range(len(pattern.w_hy)):
        model.fix_variable(int(inv.w_hy[k]), float(pattern.w_hy[k]))
        model.fix_variable(int(inv.w_hs[k]), float(pattern.w_hy[k]))
        model.fix_variable(int(inv.w_p2g[k]), float(pattern.w_p2g[k]))
        model.fix_variable(int(inv.h_hy[k]), float(pattern.h_hy[k]))
        model.fix_variable(int(inv.h_hs[k]), float(pattern.h_hs[k]))
        model.fix_variable(int(inv.h_p2g[k]), float(pattern.h_p2g[k]))
    for k in range(len(pattern.w_pipe)):
        model.fix_variable(int(inv.w_pipe[k]), float(pattern.w_pipe[k]))
    blk = build_dispatch(model, inst, daily, inv)
    for c, v in zip(blk.cost_cols, blk.cost_coefs):
        model.add_objective(int(c), float(v))
    res = solve_lp(model, engine=engine)
    if res.status != "optimal":
        return math.nan, blk, res.x
    return float(res.objective), blk, res.x


def pattern_outcomes(inst: Instance, support: ScenarioSupport,
                     feasible: np.ndarray, w_hy,
                     engine: str = "highs") -> np.ndarray:
    """Per-scenario optimal operating costs under the max-capacity
    convention for pattern ``w_hy`` (phantoms pinned to zero)."""
    pattern = max_capacity_pattern(inst, w_hy)
    out = np.zeros(support.n_scenarios)
    for j in range(support.n_scenarios):
        if not feasible[j]:
            continue
        val, _, _ = resolve_scenario_lp(inst, pattern, support.daily[j],
                                        engine)
        if math.isnan(val):
            raise RuntimeError(
                f"scenario {j} dispatch infeasible under max-capacity "
                f"pattern {w_hy}")
        out[j] = val
    return out


# -------------------------------------------------------------------- solving

@dataclass
class PatternSolve:
    bits: tuple[int, ...]
    status: str
    objective: float
    nodes: int = 0


@dataclass
class RobustSolution:
    mode: str
    status: str
    objective: float
    pattern: InvestmentPattern | None
    radius: float
    reduce: str
    bilinear: str
    probs: np.ndarray | None = None        # per-scenario center mass at w*
    theta: dict[int, float] = field(default_factory=dict)
    certifications: dict = field(default_factory=dict)
    mc_gap: float = 0.0
    records: list[PatternSolve] = field(default_factory=list)
    nodes: int = 0
    lp_iterations: int = 0
    model_rows: int = 0
    model_vars: int = 0
    assembled: AssembledModel | None = None
    x: np.ndarray | None = None
    capex: float = 0.0


def _extract_pattern(am: AssembledModel, x: np.ndarray) -> InvestmentPattern:
    iv = am.inv
    rnd = lambda cols: tuple(int(round(float(x[c]))) for c in cols)
    return InvestmentPattern(
        rnd(iv.w_hy), rnd(iv.w_p2g), rnd(iv.w_pipe),
        x[iv.h_hy].astype(float), x[iv.h_hs].astype(float),
        x[iv.h_p2g].astype(float))


def _finish_solution(am: AssembledModel, res: MilpResult,
                     sol: RobustSolution) -> RobustSolution:
    sol.x = res.x
    sol.assembled = am
    sol.nodes += res.nodes
    sol.lp_iterations += res.lp_iterations
    arrays = am.model.build_arrays()
    sol.model_rows, sol.model_vars = arrays.n_cons, arrays.n_vars
    pattern = _extract_pattern(am, res.x)
    sol.pattern = pattern
    sol.capex = am.capex_value(res.x)
    reps = [u.members[0] for u in am.units]
    for u, col in am.theta.items():
        sol.theta[int(reps[u])] = float(res.x[col])
    if am.support is not None and pattern is not None:
        sol.probs = am.support.probability(
            np.asarray(pattern.w_hy, dtype=float))
    cert = {}
    if am.eps_col >= 0:
        frac = float(res.x[am.eps_col]) / am.m_eps if am.m_eps else 0.0
        cert["eps_value"] = float(res.x[am.eps_col])
        cert["eps_cap"] = am.m_eps
        cert["eps_ok"] = frac < 0.99
    if am.rho:
        worst_nu = max(abs(float(res.x[c])) for c in am.nu.values())
        cert["nu_max"] = worst_nu
        cert["nu_bound"] = am.nu_bound
        cert["nu_ok"] = worst_nu < 0.99 * am.nu_bound
    sol.certifications = cert
    sol.mc_gap = am.mc_gap
    return sol


def solve_robust(inst: Instance, cfg: RobustConfig,
                 support: ScenarioSupport | None = None,
                 feasible: np.ndarray | None = None) -> RobustSolution:
    """Solve the configured planning problem to a deterministic optimum."""
    if support is None:
        support = ScenarioSupport(inst)
    if feasible is None:
        feasible = screen_feasible(inst, engine=cfg.engine)
    sol = RobustSolution(cfg.mode, "infeasible", math.inf, None,
                         cfg.radius, cfg.reduce, cfg.bilinear)

    if cfg.mode == "ddu" and cfg.bilinear == "enumerate":
        best: tuple[float, tuple[int, ...]] | None = None
        best_pair: tuple[AssembledModel, MilpResult] | None = None
        for w in itertools.product([0, 1], repeat=support.n_nodes):
            am = build_robust_model(inst, cfg, w_fixed=w, support=support,
                                    feasible=feasible)
            res = solve_milp(am.model, engine=cfg.engine, repair=am.repair,
                             node_limit=cfg.node_limit)
            sol.nodes += res.nodes
            sol.lp_iterations += res.lp_iterations
            sol.records.append(PatternSolve(w, res.status,
                                            float(res.objective), res.nodes))
            if res.status != "optimal":
                continue
            key = (float(res.objective), w)
            if best is None or key < best:
                best = key
                best_pair = (am, res)
        if best_pair is None:
            return sol
        am, res = best_pair
        sol.status = "optimal"
        sol.objective = float(res.objective)
        return _finish_solution(am, res, sol)

    am = build_robust_model(inst, cfg, support=support, feasible=feasible)
    res = solve_milp(am.model, engine=cfg.engine, repair=am.repair,
                     node_limit=cfg.node_limit)
    sol.status = res.status
    if res.status != "optimal":
        return sol
    sol.objective = float(res.objective)
    return _finish_solution(am, res, sol)


# -------------------------------------------------------------------- reports

@dataclass
class ReformRow:
    reduce: str
    n_units: int
    n_nodes: int
    formula_rows: int
    formula_vars: int
    actual_rows: int | None = None
    actual_vars: int | None = None

    @property
    def matches(self) -> bool | None:
        if self.actual_rows is None:
            return None
        return (self.actual_rows == self.formula_rows
                and self.actual_vars == self.formula_vars)


_COUNT_PREFIX = {"none": "wlin:", "redundancy": "wfix:",
                 "comonotone": "wred:", "bundling": "wred:", "all": "wred:"}


def reformulation_report(inst: Instance, radius: float = 0.0,
                         engine: str = "highs",
                         build: bool | None = None,
                         support: ScenarioSupport | None = None,
                         feasible: np.ndarray | None = None
                         ) -> tuple[list[ReformRow], dict]:
    """Size formulas per layout, checked against real builds when small.

    Returns the rows plus a constants dict (per-pair and global big-M,
    multiplier cap, envelope bound). Formula values are always computed;
    actual tag-census counts are filled in when the full-shape build
    fits the desk guard (or is forced/suppressed via ``build``).
    """
    if support is None:
        support = ScenarioSupport(inst)
    if feasible is None:
        feasible = screen_feasible(inst, engine=engine)
    rows: list[ReformRow] = []
    for level in ("none", "redundancy", "comonotone", "all"):
        units = support_units(support, feasible, level)
        n_units = len(units)
        f_rows, f_vars = size_formula(level, n_units, support.n_nodes)
        row = ReformRow(level, n_units, support.n_nodes, f_rows, f_vars)
        do_build = build if build is not None else (
            f_rows <= FULL_ROW_GUARD
            and n_units * n_units * support.n_nodes <= 600_000)
        if do_build:
            cfg = RobustConfig(mode="ddu", radius=radius, reduce=level,
                               bilinear="mccormick", shape="full",
                               engine=engine)
            am = build_robust_model(inst, cfg, support=support,
                                    feasible=feasible)
            c, v = am.model.count_by_tag(_COUNT_PREFIX[level])
            row.actual_rows, row.actual_vars = c, v
        rows.append(row)
    daily = support.daily
    diffs = np.abs(daily[:, None, :] - daily[None, :, :])
    big = float(diffs.max()) if diffs.size else 0.0
    constants = {
        "big_m_global": big,
        "big_m_pair_max": 2.0 * big,
        "multiplier_cap": shortage_multiplier_cap(inst),
        "nu_bound": nu_upper_bound(inst),
    }
    return rows, constants
