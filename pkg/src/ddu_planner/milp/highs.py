"""Alternative LP backend: scipy's HiGHS interface.

Used for the larger instances where a dense-tableau simplex is the wrong
tool. Only the LP relaxation goes through scipy; integrality is always
handled by our own branch and bound so that branching order, tie-breaking
and incumbent selection stay deterministic and engine-independent.
"""

from __future__ import annotations

import numpy as np

from .model import MilpModel, ModelArrays
from .simplex import SimplexResult

__all__ = ["solve_lp_highs"]

_STATUS = {0: "optimal", 1: "iteration_limit", 2: "infeasible", 3: "unbounded", 4: "numerical"}


def _split(arrays: ModelArrays):
    """Cached (A_ub, b_ub_rowsign, A_eq) sparse split of the row system."""
    cached = getattr(arrays, "_highs_split", None)
    if cached is not None:
        return cached
    from scipy.sparse import coo_matrix

    full = coo_matrix(
        (arrays.values, (arrays.row_idx, arrays.col_idx)),
        shape=(arrays.n_cons, arrays.n_vars),
    ).tocsr()
    le = np.nonzero(arrays.senses == 0)[0]
    ge = np.nonzero(arrays.senses == 1)[0]
    eq = np.nonzero(arrays.senses == 2)[0]
    a_ub = None
    b_ub = None
    if le.size or ge.size:
        from scipy.sparse import vstack

        parts = []
        rhs_parts = []
        if le.size:
            parts.append(full[le])
            rhs_parts.append(arrays.rhs[le])
        if ge.size:
            parts.append(-full[ge])
            rhs_parts.append(-arrays.rhs[ge])
        a_ub = vstack(parts).tocsr() if len(parts) > 1 else parts[0]
        b_ub = np.concatenate(rhs_parts)
    a_eq = full[eq] if eq.size else None
    b_eq = arrays.rhs[eq] if eq.size else None
    cached = (a_ub, b_ub, a_eq, b_eq)
    arrays._highs_split = cached
    return cached


def solve_lp_highs(
    model: MilpModel,
    lb_override: np.ndarray | None = None,
    ub_override: np.ndarray | None = None,
    max_iter: int | None = None,
) -> SimplexResult:
    """Solve the LP relaxation of ``model`` via scipy.optimize.linprog."""
    from scipy.optimize import linprog

    arrays = model.build_arrays()
    lbs = arrays.lb if lb_override is None else np.asarray(lb_override, dtype=np.float64)
    ubs = arrays.ub if ub_override is None else np.asarray(ub_override, dtype=np.float64)
    if np.any(lbs > ubs + 1e-12):
        return SimplexResult("infeasible", np.nan, np.full(arrays.n_vars, np.nan), 0)
    a_ub, b_ub, a_eq, b_eq = _split(arrays)
    options = {"presolve": True}
    if max_iter is not None:
        options["maxiter"] = int(max_iter)
    res = linprog(
        arrays.obj,
        A_ub=a_ub,
        b_ub=b_ub,
        A_eq=a_eq,
        b_eq=b_eq,
        bounds=np.column_stack([lbs, ubs]),
        method="highs",
        options=options,
    )
    status = _STATUS.get(res.status, "numerical")
    x = np.asarray(res.x, dtype=np.float64) if res.x is not None else np.full(arrays.n_vars, np.nan)
    obj = float(res.fun) if status == "optimal" else np.nan
    nit = int(getattr(res, "nit", 0) or 0)
    return SimplexResult(status, obj, x, nit)
