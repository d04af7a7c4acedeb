"""Independent oracles for the robust layer.

These deliberately avoid the production code paths they certify:

* :func:`probability_oracle` recomputes scenario probabilities with plain
  Python loops (no vectorized support machinery);
* :func:`primal_inner_lp` solves the worst-case expectation as an explicit
  mass-transport LP — the primal counterpart of the epigraph/dual block the
  assembler builds, so agreement of the two optima is a strong-duality
  certificate;
* :func:`exhaustive_plan_oracle` enumerates every binary investment
  pattern and solves one pure LP per pattern (probabilities folded to
  constants, transport distances folded into the epigraph rows — no
  shaping chains, no indicator linearization, no branch and bound);
* :func:`pl_interpolant` / :func:`piecewise_gap` re-derive the secant
  approximation independently for convergence and knot-exactness checks.

Shared with production code: the instance loader, the LP solver backends,
the deterministic dispatch builders (their physics is certified separately
by direct residual tests), and the traffic screening mask. The decision
layer under test — probability shaping, indicator linearization,
reduction, bundling, bilinear handling — is never reused here.

Infeasible ("phantom") scenarios follow the inert convention throughout:
they keep their probability mass, their outcome is pinned to zero, and
their mass cannot be transported. The worst-case adversary therefore only
redistributes mass among road-feasible scenarios.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .dispatch import build_dispatch, build_investment, investment_cost_expr
from .milp import MilpModel, solve_lp
from .network import Instance
from .scenarios import ScenarioSupport, screen_feasible

__all__ = [
    "probability_oracle",
    "primal_inner_lp",
    "TransportResult",
    "exhaustive_plan_oracle",
    "PlanOracleResult",
    "pl_interpolant",
    "piecewise_gap",
    "radius_grid",
    "OracleRecord",
    "write_oracle_csv",
]

PRIMAL_SCENARIO_LIMIT = 64
EXHAUSTIVE_NODE_LIMIT = 4
EXHAUSTIVE_PIPE_LIMIT = 4


# -------------------------------------------------------------- probabilities

def probability_oracle(inst: Instance, w) -> np.ndarray:
    """Scenario probabilities under build pattern ``w``, by plain loops."""
    cands = inst.candidates
    if len(cands) > 6:
        raise ValueError("probability oracle is for small supports only")
    w = [float(v) for v in w]
    out = []
    for combo in itertools.product(*(range(len(c.demand_levels))
                                     for c in cands)):
        p = 1.0
        for i, k in enumerate(combo):
            base = float(cands[i].prob_base[k])
            inv = float(cands[i].prob_invested[k])
            p *= (1.0 - w[i]) * base + w[i] * inv
        out.append(p)
    return np.asarray(out)


# ------------------------------------------------------------------ transport

@dataclass
class TransportResult:
    value: float              # worst-case expected outcome
    worst_p: np.ndarray       # (N,) adversarial marginal (phantom mass kept)
    moved_mass: float         # total transported mass off the diagonal
    status: str


def primal_inner_lp(support: ScenarioSupport, theta: np.ndarray,
                    probs: np.ndarray, radius: float,
                    feasible: np.ndarray | None = None,
                    engine: str = "highs") -> TransportResult:
    """Worst-case expectation over the transport-budget ambiguity set.

    max_w  sum_{n,j} theta_j w_{nj}
    s.t.   sum_j w_{nj} = probs_n          for every movable source n
           sum_{n,j} d_{nj} w_{nj} <= radius
           w >= 0

    Mass at infeasible scenarios is frozen in place with outcome zero, so
    only feasible-to-feasible arcs exist. Returns the optimum and the
    adversarial destination marginal (phantom entries keep their mass).
    """
    n = support.n_scenarios
    if n > PRIMAL_SCENARIO_LIMIT:
        raise ValueError(
            f"transport oracle limited to {PRIMAL_SCENARIO_LIMIT} scenarios")
    theta = np.asarray(theta, dtype=float)
    probs = np.asarray(probs, dtype=float)
    if feasible is None:
        feasible = np.ones(n, dtype=bool)
    feas_idx = np.nonzero(feasible)[0]
    nf = feas_idx.size
    dist = support.distance_matrix()[np.ix_(feas_idx, feas_idx)]

    model = MilpModel("transport-oracle")
    # maximize => negate
    arc = np.empty((nf, nf), dtype=np.int64)
    for a in range(nf):
        for b in range(nf):
            arc[a, b] = model.add_variable(
                f"w[{feas_idx[a]},{feas_idx[b]}]",
                obj=-float(theta[feas_idx[b]]))
    for a in range(nf):
        model.add_constraint(arc[a], np.ones(nf), "=",
                             float(probs[feas_idx[a]]),
                             name=f"marginal[{feas_idx[a]}]")
    model.add_constraint(arc.ravel(), dist.ravel(), "<=", float(radius),
                         name="budget")
    res = solve_lp(model, engine=engine)
    if res.status != "optimal":
        return TransportResult(math.nan, np.full(n, math.nan), math.nan,
                               res.status)
    w = res.x[arc.reshape(nf * nf)].reshape(nf, nf)
    worst = probs.copy()
    worst[feas_idx] = w.sum(axis=0)
    moved = float(w.sum() - np.trace(w))
    return TransportResult(-res.objective, worst, moved, "optimal")


def radius_grid(support: ScenarioSupport, points: int = 5) -> np.ndarray:
    """Evenly spaced transport budgets from 0 to the support diameter."""
    diam = float(np.abs(support.daily - support.daily[0]).sum(axis=1).max())
    for n in range(support.n_scenarios):
        diam = max(diam, float(
            np.abs(support.daily - support.daily[n]).sum(axis=1).max()))
    return np.linspace(0.0, diam, points)


# ------------------------------------------------------------- plan enumeration

@dataclass
class PatternRecord:
    bits: tuple[int, ...]     # (w_hy..., w_p2g..., w_pipe...)
    value: float
    status: str


@dataclass
class PlanOracleResult:
    value: float
    bits: tuple[int, ...]
    records: list[PatternRecord] = field(default_factory=list)

    @property
    def n_feasible_patterns(self) -> int:
        return sum(1 for r in self.records if r.status == "optimal")


def _pattern_lp(inst: Instance, support: ScenarioSupport,
                feasible: np.ndarray, w_hy, w_p2g, w_pipe,
                radius: float, engine: str) -> float:
    """One investment pattern's exact cost: dispatch LPs coupled through a
    folded-constant worst-case block. Returns inf when infeasible."""
    model = MilpModel("plan-oracle")
    inv = build_investment(model, inst, relax_binaries=True)
    for k, v in enumerate(w_hy):
        model.fix_variable(int(inv.w_hy[k]), float(v))
        model.fix_variable(int(inv.w_hs[k]), float(v))
    for k, v in enumerate(w_p2g):
        model.fix_variable(int(inv.w_p2g[k]), float(v))
    for k, v in enumerate(w_pipe):
        model.fix_variable(int(inv.w_pipe[k]), float(v))
    cols, coefs = investment_cost_expr(inst, inv)
    for c, v in zip(cols, coefs):
        model.add_objective(int(c), float(v))

    probs = probability_oracle(inst, w_hy)
    feas_idx = np.nonzero(feasible)[0]
    da = inst.econ.days_per_year

    nu = {int(j): model.add_variable(f"nu[{j}]", -math.inf, math.inf,
                                     obj=da * float(probs[j]))
          for j in feas_idx}
    eps = model.add_variable("eps", 0.0, math.inf, obj=da * float(radius))

    blocks = {}
    for j in feas_idx:
        blocks[int(j)] = build_dispatch(
            model, inst, support.daily[j], inv, label=f"s{j}:")
    for n_i in feas_idx:
        for j in feas_idx:
            d_nj = support.distance(int(n_i), int(j))
            blk = blocks[int(j)]
            cols_r = np.concatenate(
                [[nu[int(n_i)], eps], blk.cost_cols])
            vals_r = np.concatenate(
                [[1.0, d_nj], -blk.cost_coefs])
            model.add_constraint(cols_r, vals_r, ">=", 0.0)
    res = solve_lp(model, engine=engine)
    return float(res.objective) if res.status == "optimal" else math.inf


def exhaustive_plan_oracle(inst: Instance, radius: float,
                           engine: str = "highs") -> PlanOracleResult:
    """Ground-truth optimum by enumerating every binary investment pattern.

    Guarded to small instances. Patterns honor the technology-linking
    rules (storage follows the station, electrolyzers need the station)
    and the pipeline-count cap; each surviving pattern is a pure LP. Ties
    in the optimum go to the lexicographically smallest bit string.
    """
    cands = inst.candidates
    if len(cands) > EXHAUSTIVE_NODE_LIMIT:
        raise ValueError("plan oracle limited to small candidate sets")
    if len(inst.pipes) > EXHAUSTIVE_PIPE_LIMIT:
        raise ValueError("plan oracle limited to small pipe sets")
    support = ScenarioSupport(inst)
    feasible = screen_feasible(inst, engine=engine)
    max_pipes = max(0, len(cands) - len(inst.sources))

    records: list[PatternRecord] = []
    best: tuple[float, tuple[int, ...]] | None = None
    for w_hy in itertools.product([0, 1], repeat=len(cands)):
        for w_p2g in itertools.product([0, 1], repeat=len(cands)):
            if any(p > h for p, h in zip(w_p2g, w_hy)):
                continue
            for w_pipe in itertools.product([0, 1], repeat=len(inst.pipes)):
                if sum(w_pipe) > max_pipes:
                    continue
                bits = tuple(w_hy) + tuple(w_p2g) + tuple(w_pipe)
                val = _pattern_lp(inst, support, feasible, w_hy, w_p2g,
                                  w_pipe, radius, engine)
                status = "optimal" if math.isfinite(val) else "infeasible"
                records.append(PatternRecord(bits, val, status))
                if math.isfinite(val) and (best is None
                                           or (val, bits) < best):
                    best = (val, bits)
    if best is None:
        raise RuntimeError("no feasible investment pattern")
    return PlanOracleResult(best[0], best[1], records)


# ------------------------------------------------------------------- piecewise

def pl_interpolant(fn, x_max: float, segments: int, x) -> np.ndarray:
    """Value of the in-order-filled secant model at ``x`` (vectorized)."""
    xs = np.linspace(0.0, x_max, segments + 1)
    vals = np.array([fn(v) for v in xs])
    slopes = np.diff(vals) / np.diff(xs)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    filled = np.clip(x[:, None] - xs[:-1][None, :], 0.0,
                     np.diff(xs)[None, :])
    return filled @ slopes


def piecewise_gap(fn, x_max: float, segments: int,
                  grid: int = 1001) -> float:
    """Largest secant-model error over a uniform evaluation grid."""
    x = np.linspace(0.0, x_max, grid)
    exact = np.array([fn(v) for v in x])
    return float(np.abs(pl_interpolant(fn, x_max, segments, x) - exact).max())


# -------------------------------------------------------------------- reports

@dataclass
class OracleRecord:
    check: str
    instance: str
    detail: str
    value: float
    reference: float

    @property
    def abs_err(self) -> float:
        return abs(self.value - self.reference)

    @property
    def rel_err(self) -> float:
        scale = max(1.0, abs(self.reference))
        return self.abs_err / scale


def write_oracle_csv(path: str, records: list[OracleRecord],
                     tol: float = 1e-6) -> int:
    """Write oracle comparisons; returns the number of failures."""
    failures = 0
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["check", "instance", "detail", "value", "reference",
                     "abs_err", "status"])
        for r in records:
            ok = r.rel_err <= tol
            failures += 0 if ok else 1
            wr.writerow([r.check, r.instance, r.detail,
                         "%.9g" % r.value, "%.9g" % r.reference,
                         "%.3e" % r.abs_err, "pass" if ok else "FAIL"])
    return failures
