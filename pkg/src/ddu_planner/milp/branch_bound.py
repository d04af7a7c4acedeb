"""Deterministic best-bound branch and bound over either LP backend.

Ordering rules are fixed so repeated runs explore the identical tree:

* node selection: smallest LP bound, ties broken by insertion counter;
* branching variable: most fractional (largest ``min(f, 1-f)``), ties
  broken by lowest column index;
* down-branch (``floor``) is pushed before the up-branch.

An optional ``repair`` callback lets callers exploit problem structure: it
receives the (possibly fractional) node solution and may return a repaired
point; if that point is integral and feasible it becomes an incumbent
candidate. This closes trees whose fractional variables are provably
cosmetic (the exactness linearization's indicator columns) without
branching on them.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field

import numpy as np

from .highs import solve_lp_highs
from .model import MilpModel
from .simplex import SimplexResult, solve_lp_simplex

__all__ = ["MilpResult", "solve_lp", "solve_milp"]

INT_TOL = 1e-6
GAP_ABS = 1e-6


def solve_lp(
    model: MilpModel,
    engine: str = "simplex",
    lb_override: np.ndarray | None = None,
    ub_override: np.ndarray | None = None,
    max_iter: int | None = None,
) -> SimplexResult:
    """Solve the LP relaxation with the selected backend."""
    if engine == "simplex":
        return solve_lp_simplex(model, lb_override, ub_override, max_iter)
    if engine == "highs":
        return solve_lp_highs(model, lb_override, ub_override, max_iter)
    raise ValueError(f"unknown engine {engine!r} (use 'simplex' or 'highs')")


@dataclass
class MilpResult:
    status: str               # optimal | infeasible | unbounded | node_limit
    objective: float
    x: np.ndarray
    nodes: int
    best_bound: float
    lp_iterations: int = 0
    log: list = field(default_factory=list)


def _fractional(x: np.ndarray, int_cols: np.ndarray) -> tuple[int, float]:
    """Most fractional integer column, ties to lowest index; (-1, 0) if none."""
    if int_cols.size == 0:
        return -1, 0.0
    vals = x[int_cols]
    frac = np.abs(vals - np.round(vals))
    score = np.minimum(frac, 1.0 - frac)
    j = int(np.argmax(score))
    if frac[j] <= INT_TOL:
        return -1, 0.0
    return int(int_cols[j]), float(score[j])


def solve_milp(
    model: MilpModel,
    engine: str = "simplex",
    repair=None,
    node_limit: int = 200000,
    gap_abs: float = GAP_ABS,
) -> MilpResult:
    """Branch and bound to absolute gap ``gap_abs`` (default 1e-6)."""
    arrays = model.build_arrays()
    int_cols = model.integer_columns()
    counter = itertools.count()
    root_lb = arrays.lb.copy()
    root_ub = arrays.ub.copy()

    incumbent: np.ndarray | None = None
    inc_obj = np.inf
    nodes = 0
    lp_iters = 0

    heap: list = []

    def push(bound, lbs, ubs):
        heapq.heappush(heap, (bound, next(counter), lbs, ubs))

    res0 = solve_lp(model, engine, root_lb, root_ub)
    lp_iters += res0.iterations
    if res0.status == "infeasible":
        return MilpResult("infeasible", np.nan, np.full(arrays.n_vars, np.nan), 1, np.nan, lp_iters)
    if res0.status == "unbounded":
        return MilpResult("unbounded", -np.inf, np.full(arrays.n_vars, np.nan), 1, -np.inf, lp_iters)
    if res0.status != "optimal":
        return MilpResult(res0.status, np.nan, np.full(arrays.n_vars, np.nan), 1, np.nan, lp_iters)
    push(res0.objective, root_lb, root_ub)

    def offer(x: np.ndarray):
        nonlocal incumbent, inc_obj
        xi = x.copy()
        if int_cols.size:
            r = np.round(xi[int_cols])
            if np.max(np.abs(xi[int_cols] - r)) > INT_TOL:
                return
            xi[int_cols] = r
        if model.max_violation(xi) > 1e-6:
            return
        obj = model.objective_value(xi)
        if obj < inc_obj - 1e-12:
            inc_obj = obj
            incumbent = xi

    best_bound = res0.objective
    while heap:
        bound, _, lbs, ubs = heapq.heappop(heap)
        best_bound = bound
        if incumbent is not None and bound >= inc_obj - gap_abs:
            break
        nodes += 1
        if nodes > node_limit:
            return MilpResult(
                "node_limit", inc_obj, incumbent if incumbent is not None else np.full(arrays.n_vars, np.nan),
                nodes, best_bound, lp_iters,
            )
        res = solve_lp(model, engine, lbs, ubs)
        lp_iters += res.iterations
        if res.status == "infeasible":
            continue
        if res.status != "optimal":
            return MilpResult(res.status, np.nan, np.full(arrays.n_vars, np.nan), nodes, best_bound, lp_iters)
        if incumbent is not None and res.objective >= inc_obj - gap_abs:
            continue
        col, _ = _fractional(res.x, int_cols)
        if col < 0:
            offer(res.x)
            continue
        if repair is not None:
            fixed = repair(res.x)
            if fixed is not None:
                offer(fixed)
                if incumbent is not None and res.objective >= inc_obj - gap_abs:
                    continue
        v = res.x[col]
        down_ub = ubs.copy()
        down_ub[col] = np.floor(v + INT_TOL)
        up_lb = lbs.copy()
        up_lb[col] = np.ceil(v - INT_TOL)
        if down_ub[col] >= lbs[col] - 1e-12:
            push(res.objective, lbs, down_ub)
        if up_lb[col] <= ubs[col] + 1e-12:
            push(res.objective, up_lb, ubs)

    if incumbent is None:
        return MilpResult("infeasible", np.nan, np.full(arrays.n_vars, np.nan), max(nodes, 1), best_bound, lp_iters)
    if not heap:
        best_bound = inc_obj
    return MilpResult("optimal", inc_obj, incumbent, max(nodes, 1), best_bound, lp_iters)
