"""Hot kernel of the LP engine: bounded-variable primal simplex iteration.

One source function, two compilations. :func:`get_kernel` returns either the
numba ``@njit``-compiled version (default when numba is importable) or the
plain interpreted one, selected by the ``DDU_PLANNER_KERNEL`` environment
variable (``"numba"`` / ``"numpy"``). The function body is written with
vectorized numpy operations so the interpreted fallback stays usable;
``benchmarks/bench_lp_kernel.py`` compares the two.

Computational form handled here (assembled by :mod:`.simplex`):

* columns = structural variables, then one slack per row, then (phase 1
  only) artificial columns; every column has finite or infinite bounds;
* the tableau holds ``B^-1 @ A_all``; basic values are kept separately in
  ``xb`` (bounded-variable simplex: the rhs is not ``B^-1 b``);
* phase 1 minimizes the total artificial mass, phase 2 the true cost;
* entering rule: Dantzig (most negative reduced-cost violation), switching
  to Bland's smallest-index rule after ``bland_after`` consecutive
  degenerate steps; leaving rule: largest |pivot| among minimum-ratio rows
  (smallest basis index under Bland).

Status codes: 0 optimal, 1 unbounded, 2 infeasible, 3 iteration limit,
4 numerical breakdown.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = ["simplex_core", "get_kernel", "kernel_name", "KERNEL_ENV_VAR"]

KERNEL_ENV_VAR = "DDU_PLANNER_KERNEL"

_PEPS = 1e-10          # smallest acceptable pivot magnitude
_DEGEN_EPS = 1e-9      # a step shorter than this counts as degenerate
_REFRESH_EVERY = 512   # recompute reduced costs from scratch this often


def simplex_core(
    tab: np.ndarray,      # (m, ncols) float64, B^-1 A, mutated in place
    xb: np.ndarray,       # (m,) float64, basic values, mutated
    lb: np.ndarray,       # (ncols,) float64, mutated only to pin artificials
    ub: np.ndarray,       # (ncols,) float64, mutated likewise
    xval: np.ndarray,     # (ncols,) float64, nonbasic values, mutated
    vstat: np.ndarray,    # (ncols,) int8: 0 at-lb, 1 at-ub, 2 basic, 3 free
    basis: np.ndarray,    # (m,) int64, basic column per row, mutated
    cost1: np.ndarray,    # (ncols,) float64 phase-1 cost (zeros if n_art == 0)
    cost2: np.ndarray,    # (ncols,) float64 true cost
    n_art: int,
    tol1: float,
    tol2: float,
    feas_tol: float,
    max_iter: int,
) -> tuple[int, int]:
    m, ncols = tab.shape
    iters = 0
    bland_after = 1000
    start_phase = 1 if n_art > 0 else 2
    for phase in range(start_phase, 3):
        if phase == 1:
            c = cost1
            tol = tol1
        else:
            c = cost2
            tol = tol2
            if n_art > 0:
                # phase 1 is over: artificials are pinned at zero for good
                for j in range(ncols - n_art, ncols):
                    lb[j] = 0.0
                    ub[j] = 0.0
                    if vstat[j] != 2:
                        xval[j] = 0.0
                        vstat[j] = 0
        movable = (ub - lb) > 0.0
        # reduced costs of the current basis
        zrow = c.copy()
        for i in range(m):
            cb = c[basis[i]]
            if cb != 0.0:
                zrow -= cb * tab[i]
        degen = 0
        since_refresh = 0
        while True:
            if iters >= max_iter:
                return 3, iters
            iters += 1
            since_refresh += 1
            if since_refresh >= _REFRESH_EVERY:
                since_refresh = 0
                zrow = c.copy()
                for i in range(m):
                    cb = c[basis[i]]
                    if cb != 0.0:
                        zrow -= cb * tab[i]
            # ---- entering column -------------------------------------
            can_inc = ((vstat == 0) | (vstat == 3)) & movable
            can_dec = ((vstat == 1) | (vstat == 3)) & movable
            viol = np.where(can_inc & (zrow < -tol), -zrow, 0.0)
            viol = np.maximum(
                viol, np.where(can_dec & (zrow > tol), zrow, 0.0)
            )
            if degen >= bland_after:
                elig = np.nonzero(viol > 0.0)[0]
                if elig.shape[0] == 0:
                    break
                q = int(elig[0])
            else:
                q = int(np.argmax(viol))
                if viol[q] <= 0.0:
                    break
            dirq = 1.0 if zrow[q] < 0.0 else -1.0
            # ---- ratio test ------------------------------------------
            d = tab[:, q].copy()
            delta = -dirq * d
            lbb = lb[basis]
            ubb = ub[basis]
            t_lo = np.where(
                delta < -_PEPS,
                (lbb - xb) / np.minimum(delta, -_PEPS),
                np.inf,
            )
            t_hi = np.where(
                delta > _PEPS,
                (ubb - xb) / np.maximum(delta, _PEPS),
                np.inf,
            )
            t = np.maximum(np.minimum(t_lo, t_hi), 0.0)
            theta_row = np.inf
            if m > 0:
                theta_row = t.min()
            rng_q = ub[q] - lb[q]
            if rng_q <= theta_row:
                # ---- bound flip (no basis change) --------------------
                if not np.isfinite(rng_q):
                    return (1 if phase == 2 else 4), iters
                theta = rng_q
                xb -= (dirq * theta) * d
                if dirq > 0.0:
                    xval[q] = ub[q]
                    vstat[q] = 1
                else:
                    xval[q] = lb[q]
                    vstat[q] = 0
                degen = degen + 1 if theta <= _DEGEN_EPS else 0
                continue
            if not np.isfinite(theta_row):
                return (1 if phase == 2 else 4), iters
            theta = theta_row
            cut = theta + 1e-9 * (1.0 + theta)
            elig_rows = np.nonzero(t <= cut)[0]
            if degen >= bland_after:
                r = int(elig_rows[np.argmin(basis[elig_rows])])
            else:
                r = int(elig_rows[np.argmax(np.abs(d[elig_rows]))])
            piv = tab[r, q]
            if abs(piv) <= _PEPS:
                return 4, iters
            # ---- pivot -----------------------------------------------
            xb -= (dirq * theta) * d
            enter_val = xval[q] + dirq * theta
            leave = basis[r]
            if delta[r] < 0.0:
                xval[leave] = lb[leave]
                vstat[leave] = 0
            else:
                xval[leave] = ub[leave]
                vstat[leave] = 1
            vstat[q] = 2
            basis[r] = q
            xb[r] = enter_val
            prow = tab[r] / piv
            tab[r] = prow
            colq = tab[:, q].copy()
            colq[r] = 0.0
            tab -= colq.reshape(m, 1) * prow.reshape(1, ncols)
            zq = zrow[q]
            if zq != 0.0:
                zrow = zrow - zq * prow
            degen = degen + 1 if theta <= _DEGEN_EPS else 0
        if phase == 1:
            val = xval.copy()
            for i in range(m):
                val[basis[i]] = xb[i]
            obj1 = float(np.dot(cost1, val))
            if obj1 > feas_tol:
                return 2, iters
    return 0, iters


_kernels: dict = {}


def kernel_name() -> str:
    """Resolve the active kernel name from the environment."""
    want = os.environ.get(KERNEL_ENV_VAR, "").strip().lower()
    if want in ("numba", "numpy"):
        return want
    try:
        import numba  # noqa: F401
        return "numba"
    except ImportError:
        return "numpy"


def get_kernel(name: str | None = None):
    """Return the simplex kernel callable (compiled on first use)."""
    name = name or kernel_name()
    if name in _kernels:
        return _kernels[name]
    if name == "numba":
        from numba import njit
        fn = njit(cache=True, fastmath=False)(simplex_core)
    elif name == "numpy":
        fn = simplex_core
    else:
        raise ValueError(f"unknown kernel {name!r} (use 'numba' or 'numpy')")
    _kernels[name] = fn
    return fn
