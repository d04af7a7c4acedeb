"""Mixed-integer linear model container.

A :class:`MilpModel` is a plain in-memory description of

    min  c'x
    s.t. lhs_r (<=, =, >=) rhs_r      for each row r
         lb <= x <= ub
         x_j integer for flagged j

Rows and variables carry a free-form ``tag`` string used for structural
accounting (:meth:`MilpModel.count_by_tag`): callers group related rows and
variables under a common prefix (``"hyd:balance"``, ``"wlin:z"``, ...) and
tests assert block sizes without caring about row order.

The container is append-only and deliberately dumb: no presolve, no
simplification, no duplicate-coefficient merging beyond what
:meth:`add_constraint` does at entry. Solvers consume the arrays produced by
:meth:`build_arrays`, which are cached until the model is touched again.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["MilpModel", "ModelArrays", "SENSES"]

SENSES = ("<=", ">=", "=")

_INF = float("inf")


@dataclass
class ModelArrays:
    """Dense/COO snapshot of a model, in solver-friendly layout."""

    n_vars: int
    n_cons: int
    obj: np.ndarray          # (n_vars,) float64
    lb: np.ndarray           # (n_vars,) float64, -inf allowed
    ub: np.ndarray           # (n_vars,) float64, +inf allowed
    is_integer: np.ndarray   # (n_vars,) bool
    # constraint matrix in COO form, row-major sorted
    row_idx: np.ndarray      # (nnz,) int64
    col_idx: np.ndarray      # (nnz,) int64
    values: np.ndarray       # (nnz,) float64
    senses: np.ndarray       # (n_cons,) int8: 0 '<=', 1 '>=', 2 '='
    rhs: np.ndarray          # (n_cons,) float64

    def dense_matrix(self) -> np.ndarray:
        a = np.zeros((self.n_cons, self.n_vars))
        a[self.row_idx, self.col_idx] = self.values
        return a


@dataclass
class _Rows:
    cols: list = field(default_factory=list)    # list[np.ndarray]
    vals: list = field(default_factory=list)    # list[np.ndarray]
    sense: list = field(default_factory=list)   # list[int]
    rhs: list = field(default_factory=list)     # list[float]
    name: list = field(default_factory=list)
    tag: list = field(default_factory=list)


class MilpModel:
    """Append-only MILP description with tagged rows and variables."""

    def __init__(self, name: str = "model") -> None:
        self.name = name
        self._vnames: list[str] = []
        self._vname_set: set[str] = set()
        self._lb: list[float] = []
        self._ub: list[float] = []
        self._obj: list[float] = []
        self._integer: list[bool] = []
        self._vtag: list[str] = []
        self._rows = _Rows()
        self._rname_set: set[str] = set()
        self._arrays: ModelArrays | None = None

    # ------------------------------------------------------------------ vars

    @property
    def n_vars(self) -> int:
        return len(self._vnames)

    @property
    def n_cons(self) -> int:
        return len(self._rows.rhs)

    def add_variable(
        self,
        name: str,
        lb: float = 0.0,
        ub: float = _INF,
        obj: float = 0.0,
        integer: bool = False,
        tag: str = "",
    ) -> int:
        """Register a variable; returns its column index."""
        if name in self._vname_set:
            raise ValueError(f"duplicate variable name {name!r}")
        if lb > ub:
            raise ValueError(f"variable {name!r} has lb {lb} > ub {ub}")
        self._vname_set.add(name)
        self._vnames.append(name)
        self._lb.append(float(lb))
        self._ub.append(float(ub))
        self._obj.append(float(obj))
        self._integer.append(bool(integer))
        self._vtag.append(tag)
        self._arrays = None
        return len(self._vnames) - 1

    def add_variables(
        self,
        prefix: str,
        count: int,
        lb: float = 0.0,
        ub: float = _INF,
        obj: float = 0.0,
        integer: bool = False,
        tag: str = "",
    ) -> np.ndarray:
        """Register ``count`` homogeneous variables ``prefix[k]``; returns indices."""
        start = len(self._vnames)
        for k in range(count):
            self.add_variable(f"{prefix}[{k}]", lb, ub, obj, integer, tag)
        return np.arange(start, start + count, dtype=np.int64)

    def set_objective(self, col: int, coef: float) -> None:
        self._obj[col] = float(coef)
        self._arrays = None

    def add_objective(self, col: int, coef: float) -> None:
        self._obj[col] += float(coef)
        self._arrays = None

    def variable_name(self, col: int) -> str:
        return self._vnames[col]

    def variable_tag(self, col: int) -> str:
        return self._vtag[col]

    def bounds(self, col: int) -> tuple[float, float]:
        return self._lb[col], self._ub[col]

    def set_bounds(self, col: int, lb: float, ub: float) -> None:
        if lb > ub:
            raise ValueError(f"lb {lb} > ub {ub} for column {col}")
        self._lb[col] = float(lb)
        self._ub[col] = float(ub)
        self._arrays = None

    def fix_variable(self, col: int, value: float) -> None:
        self.set_bounds(col, value, value)

    def integer_columns(self) -> np.ndarray:
        return np.nonzero(np.asarray(self._integer, dtype=bool))[0]

    # ------------------------------------------------------------------ rows

    def add_constraint(
        self,
        cols,
        vals,
        sense: str,
        rhs: float,
        name: str = "",
        tag: str = "",
    ) -> int:
        """Append row ``sum(vals[k]*x[cols[k]]) sense rhs``; returns row index.

        Duplicate column indices within one row are summed. Zero-coefficient
        entries are kept (they do not affect solves and keep builders simple).
        """
        if sense not in SENSES:
            raise ValueError(f"bad sense {sense!r}")
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        if cols.shape != vals.shape or cols.ndim != 1:
            raise ValueError("cols/vals must be 1-d arrays of equal length")
        if cols.size and (cols.min() < 0 or cols.max() >= len(self._vnames)):
            raise ValueError("constraint references unknown column")
        if cols.size != np.unique(cols).size:
            # merge duplicates deterministically
            order = np.argsort(cols, kind="stable")
            cols_s, vals_s = cols[order], vals[order]
            uniq, start = np.unique(cols_s, return_index=True)
            vals = np.add.reduceat(vals_s, start)
            cols = uniq
        if name:
            if name in self._rname_set:
                raise ValueError(f"duplicate constraint name {name!r}")
            self._rname_set.add(name)
        r = self._rows
        r.cols.append(cols)
        r.vals.append(vals)
        r.sense.append(SENSES.index(sense))
        r.rhs.append(float(rhs))
        r.name.append(name)
        r.tag.append(tag)
        self._arrays = None
        return len(r.rhs) - 1

    def constraint_name(self, row: int) -> str:
        return self._rows.name[row]

    def constraint_tag(self, row: int) -> str:
        return self._rows.tag[row]

    def row_entries(self, row: int) -> tuple[np.ndarray, np.ndarray, str, float]:
        r = self._rows
        return r.cols[row], r.vals[row], SENSES[r.sense[row]], r.rhs[row]

    # ------------------------------------------------------------- accounting

    def count_by_tag(self, prefix: str) -> tuple[int, int]:
        """Return (n_constraints, n_variables) whose tag starts with ``prefix``."""
        ncons = sum(1 for t in self._rows.tag if t.startswith(prefix))
        nvars = sum(1 for t in self._vtag if t.startswith(prefix))
        return ncons, nvars

    def tag_census(self) -> dict[str, tuple[int, int]]:
        """Counts per whole tag (exact, not prefix), sorted by tag."""
        out: dict[str, list[int]] = {}
        for t in self._rows.tag:
            out.setdefault(t, [0, 0])[0] += 1
        for t in self._vtag:
            out.setdefault(t, [0, 0])[1] += 1
        return {k: (v[0], v[1]) for k, v in sorted(out.items())}

    # ---------------------------------------------------------------- arrays

    def build_arrays(self) -> ModelArrays:
        """Snapshot the model into solver arrays (cached until next mutation)."""
        if self._arrays is not None:
            return self._arrays
        r = self._rows
        n_cons = len(r.rhs)
        nnz = sum(c.size for c in r.cols)
        row_idx = np.empty(nnz, dtype=np.int64)
        col_idx = np.empty(nnz, dtype=np.int64)
        values = np.empty(nnz, dtype=np.float64)
        pos = 0
        for i in range(n_cons):
            k = r.cols[i].size
            row_idx[pos:pos + k] = i
            col_idx[pos:pos + k] = r.cols[i]
            values[pos:pos + k] = r.vals[i]
            pos += k
        self._arrays = ModelArrays(
            n_vars=self.n_vars,
            n_cons=n_cons,
            obj=np.asarray(self._obj, dtype=np.float64),
            lb=np.asarray(self._lb, dtype=np.float64),
            ub=np.asarray(self._ub, dtype=np.float64),
            is_integer=np.asarray(self._integer, dtype=bool),
            row_idx=row_idx,
            col_idx=col_idx,
            values=values,
            senses=np.asarray(r.sense, dtype=np.int8),
            rhs=np.asarray(r.rhs, dtype=np.float64),
        )
        return self._arrays

    # ------------------------------------------------------------ evaluation

    def objective_value(self, x: np.ndarray) -> float:
        return float(np.dot(self.build_arrays().obj, x))

    def max_violation(self, x: np.ndarray) -> float:
        """Largest constraint/bound violation of a candidate point."""
        a = self.build_arrays()
        act = np.zeros(a.n_cons)
        np.add.at(act, a.row_idx, a.values * x[a.col_idx])
        resid = act - a.rhs
        viol = np.zeros(a.n_cons)
        le = a.senses == 0
        ge = a.senses == 1
        eq = a.senses == 2
        viol[le] = np.maximum(resid[le], 0.0)
        viol[ge] = np.maximum(-resid[ge], 0.0)
        viol[eq] = np.abs(resid[eq])
        vb = np.maximum(a.lb - x, 0.0) + np.maximum(x - a.ub, 0.0)
        vmax = viol.max() if a.n_cons else 0.0
        return float(max(vmax, vb.max() if x.size else 0.0))
