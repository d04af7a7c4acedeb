"""Driver for the bounded-variable primal simplex.

Assembles the computational form consumed by :mod:`.kernels`:

* one slack column per row, ``a.x + s = b``, with slack bounds encoding the
  row sense (``<=``: ``[0, inf)``, ``>=``: ``(-inf, 0]``, ``=``: ``[0, 0]``);
* crash basis = slacks; rows whose slack value would violate its bounds get
  the slack clamped to the nearest bound and an artificial column carrying
  the residual, driven to zero by phase 1.

Bound overrides make repeated solves with tightened variable bounds (branch
and bound) cheap: the dense ``[A | I]`` block is built once per model
snapshot and reused.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import get_kernel
from .model import MilpModel, ModelArrays

__all__ = ["SimplexResult", "solve_lp_simplex", "STATUS_NAMES"]

STATUS_NAMES = {
    0: "optimal",
    1: "unbounded",
    2: "infeasible",
    3: "iteration_limit",
    4: "numerical",
}


@dataclass
class SimplexResult:
    status: str
    objective: float
    x: np.ndarray
    iterations: int


def _dense_block(arrays: ModelArrays) -> np.ndarray:
    """Cached dense ``[A | I]`` block for the model snapshot."""
    cached = getattr(arrays, "_simplex_block", None)
    if cached is not None:
        return cached
    m, n = arrays.n_cons, arrays.n_vars
    block = np.zeros((m, n + m))
    block[arrays.row_idx, arrays.col_idx] = arrays.values
    block[np.arange(m), np.arange(m) + n] = 1.0
    arrays._simplex_block = block
    return block


def _slack_bounds(senses: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    m = senses.shape[0]
    sl = np.zeros(m)
    su = np.zeros(m)
    su[senses == 0] = np.inf      # <=  : slack in [0, inf)
    sl[senses == 1] = -np.inf     # >=  : slack in (-inf, 0]
    return sl, su                 # =   : slack fixed at 0


def solve_lp_simplex(
    model: MilpModel,
    lb_override: np.ndarray | None = None,
    ub_override: np.ndarray | None = None,
    max_iter: int | None = None,
    kernel: str | None = None,
) -> SimplexResult:
    """Solve the LP relaxation of ``model`` with the built-in simplex."""
    arrays = model.build_arrays()
    m, n = arrays.n_cons, arrays.n_vars
    lbs = arrays.lb if lb_override is None else np.asarray(lb_override, dtype=np.float64)
    ubs = arrays.ub if ub_override is None else np.asarray(ub_override, dtype=np.float64)
    if np.any(lbs > ubs + 1e-12):
        return SimplexResult("infeasible", np.nan, np.full(n, np.nan), 0)

    sl, su = _slack_bounds(arrays.senses)
    lb_all = np.concatenate([lbs, sl])
    ub_all = np.concatenate([ubs, su])

    # nonbasic start for structurals: finite lower, else finite upper, else 0
    xval = np.zeros(n + m)
    vstat = np.full(n + m, 3, dtype=np.int8)
    fin_lb = np.isfinite(lb_all[:n])
    fin_ub = np.isfinite(ub_all[:n])
    xval[:n][fin_lb] = lb_all[:n][fin_lb]
    vstat[:n][fin_lb] = 0
    at_ub = (~fin_lb) & fin_ub
    xval[:n][at_ub] = ub_all[:n][at_ub]
    vstat[:n][at_ub] = 1

    block = _dense_block(arrays)
    act = block[:, :n] @ xval[:n] if n else np.zeros(m)
    s_raw = arrays.rhs - act

    # crash basis: slacks where feasible, artificials elsewhere
    basis = np.arange(m, dtype=np.int64) + n
    vstat[n:] = 2
    xb = s_raw.copy()
    bad = np.nonzero((s_raw < sl - 1e-12) | (s_raw > su + 1e-12))[0]
    n_art = int(bad.shape[0])
    ncols = n + m + n_art
    tab = np.zeros((m, ncols))
    tab[:, : n + m] = block
    lb_full = np.concatenate([lb_all, np.zeros(n_art)])
    ub_full = np.concatenate([ub_all, np.zeros(n_art)])
    xval = np.concatenate([xval, np.zeros(n_art)])
    vstat = np.concatenate([vstat, np.full(n_art, 2, dtype=np.int8)])
    cost1 = np.zeros(ncols)
    for k, i in enumerate(bad):
        col = n + m + k
        # clamp the slack to its nearest bound, park the residual on the
        # artificial, which starts basic at its far bound
        clamped = min(max(s_raw[i], sl[i]), su[i])
        xval[n + i] = clamped
        vstat[n + i] = 0 if clamped == sl[i] else 1
        resid = s_raw[i] - clamped
        tab[i, col] = 1.0
        basis[i] = col
        xb[i] = resid
        if resid > 0:
            lb_full[col], ub_full[col] = 0.0, resid
            cost1[col] = 1.0
        else:
            lb_full[col], ub_full[col] = resid, 0.0
            cost1[col] = -1.0

    cost2 = np.concatenate([arrays.obj, np.zeros(m + n_art)])
    cmax = float(np.max(np.abs(cost2))) if ncols else 0.0
    tol2 = 1e-8 * (1.0 + cmax)
    rscale = float(np.max(np.abs(arrays.rhs))) if m else 0.0
    feas_tol = 1e-7 * (1.0 + rscale)
    if max_iter is None:
        max_iter = 20000 + 200 * (m + n)

    fn = get_kernel(kernel)
    status, iters = fn(
        tab, xb, lb_full, ub_full, xval, vstat, basis,
        cost1, cost2, n_art, 1e-9, tol2, feas_tol, max_iter,
    )
    xval[basis] = xb
    x = xval[:n].copy()
    obj = float(np.dot(arrays.obj, x)) if status == 0 else np.nan
    return SimplexResult(STATUS_NAMES[status], obj, x, iters)
