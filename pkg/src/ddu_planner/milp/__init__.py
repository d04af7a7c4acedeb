"""Self-contained MILP toolkit: model container, bounded-variable primal
simplex (numba kernel with interpreted fallback), deterministic branch and
bound, scipy/HiGHS LP backend, and MPS/LP exporters."""

from .branch_bound import MilpResult, solve_lp, solve_milp
from .kernels import KERNEL_ENV_VAR, get_kernel, kernel_name
from .model import MilpModel, ModelArrays
from .simplex import SimplexResult, solve_lp_simplex
from .writers import export_lp_text, export_mps

__all__ = [
    "MilpModel",
    "ModelArrays",
    "MilpResult",
    "SimplexResult",
    "solve_lp",
    "solve_lp_simplex",
    "solve_milp",
    "export_mps",
    "export_lp_text",
    "get_kernel",
    "kernel_name",
    "KERNEL_ENV_VAR",
]
