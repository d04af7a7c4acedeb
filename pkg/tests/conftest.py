import numpy as np
import pytest

from ddu_planner.milp import MilpModel, solve_lp
from ddu_planner.milp.kernels import kernel_name


@pytest.fixture(scope="session", autouse=True)
def warm_kernel():
    """Trigger the one-off numba compile before any timed work."""
    m = MilpModel("warmup")
    x = m.add_variable("x", 0, 1, obj=-1.0)
    m.add_constraint([x], [1.0], "<=", 1.0)
    solve_lp(m, engine="simplex")
    return kernel_name()


def random_lp(rng, n_max=10, m_max=8, integers=False):
    """Shared generator for randomized solver corpora."""
    n = int(rng.integers(2, n_max))
    m = int(rng.integers(1, m_max))
    mod = MilpModel("rand")
    for j in range(n):
        lb = float(rng.choice([0.0, -rng.uniform(0, 5), -np.inf], p=[0.5, 0.3, 0.2]))
        ub = float(rng.choice([np.inf, rng.uniform(0, 8)], p=[0.4, 0.6]))
        if lb > ub:
            lb, ub = ub - 1.0, lb + 1.0
        intg = bool(integers and rng.random() < 0.5)
        if intg:
            lb, ub = 0.0, float(rng.integers(1, 5))
        mod.add_variable(f"x{j}", lb, ub, obj=float(rng.normal()), integer=intg)
    for i in range(m):
        k = int(rng.integers(1, n + 1))
        cols = rng.choice(n, size=k, replace=False)
        vals = rng.normal(size=k)
        sense = str(rng.choice(["<=", ">=", "="], p=[0.5, 0.3, 0.2]))
        mod.add_constraint(cols, vals, sense, float(rng.normal() * 3))
    return mod
