"""Timing comparison of the two simplex kernel compilations.

The LP engine's hot loop (``ddu_planner.milp.kernels.simplex_core``) ships
as one source function with two callables: the numba ``@njit`` compile and
the plain interpreted numpy version, normally selected by the
``DDU_PLANNER_KERNEL`` environment variable.  This script times both on the
same workloads and checks they return identical objectives.

Usage::

    python3 benchmarks/bench_lp_kernel.py [--repeats 5] [--skip-model-lps]
"""

from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from ddu_planner.assemble import RobustConfig, build_robust_model
from ddu_planner.milp import MilpModel
from ddu_planner.milp.kernels import get_kernel
from ddu_planner.milp.simplex import solve_lp_simplex
from ddu_planner.network import load_instance


def random_lp(rng: np.random.Generator, n: int, m: int) -> MilpModel:
    """Dense-ish feasible LP: minimize c'x over Ax <= b, 0 <= x <= u."""
    model = MilpModel(f"rand-{n}x{m}")
    for j in range(n):
        model.add_variable(f"x{j}", 0.0, float(rng.uniform(1.0, 10.0)),
                           obj=float(rng.normal()))
    for i in range(m):
        k = max(2, int(0.3 * n))
        cols = rng.choice(n, size=k, replace=False)
        vals = rng.uniform(-1.0, 2.0, size=k)
        # rhs chosen above the row value at the box midpoint: keeps the
        # instance feasible without making every constraint slack
        mid = 0.5 * sum(vals[t] * model.bounds(int(c))[1]
                        for t, c in enumerate(cols))
        model.add_constraint(cols, vals, "<=", float(mid + rng.uniform(0, 3)))
    return model


def model_lps() -> list[tuple[str, MilpModel]]:
    """LP relaxations of real planning models (investment binaries relaxed).

    Only the smallest instance is used: the built-in simplex carries a dense
    tableau, so the larger models are HiGHS territory by design.
    """
    out = []
    for name, reduce in (("tiny2", "none"), ("tiny2", "comonotone")):
        inst = load_instance(name)
        cfg = RobustConfig(mode="ddu", radius=150.0, reduce=reduce,
                           shape="full", bilinear="mccormick")
        am = build_robust_model(inst, cfg)
        out.append((f"{name}/{reduce}", am.model))
    return out


def time_solves(model: MilpModel, kernel: str, repeats: int
                ) -> tuple[float, float, int]:
    best = []
    objective = np.nan
    iters = 0
    for _ in range(repeats):
        t0 = time.perf_counter()
        res = solve_lp_simplex(model, kernel=kernel)
        best.append(time.perf_counter() - t0)
        if res.status != "optimal":
            raise RuntimeError(f"{model.name}: {res.status} under {kernel}")
        objective = res.objective
        iters = res.iterations
    return statistics.median(best), objective, iters


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--seed", type=int, default=20260818)
    ap.add_argument("--skip-model-lps", action="store_true",
                    help="only run the synthetic LP ladder")
    args = ap.parse_args(argv)

    # force both compilations up front so the numba JIT cost is visible
    # separately rather than polluting the first timed row
    t0 = time.perf_counter()
    get_kernel("numpy")
    t_np = time.perf_counter() - t0
    t0 = time.perf_counter()
    get_kernel("numba")
    t_nb = time.perf_counter() - t0
    print(f"kernel setup: numpy {t_np * 1e3:.1f} ms, "
          f"numba compile {t_nb:.1f} s (cached across runs)\n")

    rng = np.random.default_rng(args.seed)
    jobs: list[tuple[str, MilpModel]] = [
        (f"synthetic {n}x{m}", random_lp(rng, n, m))
        for n, m in ((40, 25), (120, 80), (250, 160))
    ]
    if not args.skip_model_lps:
        jobs += model_lps()

    hdr = (f"{'workload':24s} {'rows':>6s} {'vars':>6s} {'iters':>6s} "
           f"{'numpy(ms)':>10s} {'numba(ms)':>10s} {'speedup':>8s}")
    print(hdr)
    print("-" * len(hdr))
    for label, model in jobs:
        arr = model.build_arrays()
        t_numpy, obj_a, it_a = time_solves(model, "numpy", args.repeats)
        t_numba, obj_b, it_b = time_solves(model, "numba", args.repeats)
        if not np.isclose(obj_a, obj_b, rtol=1e-9, atol=1e-9):
            raise RuntimeError(
                f"{label}: kernels disagree ({obj_a} vs {obj_b})")
        if it_a != it_b:
            raise RuntimeError(
                f"{label}: iteration paths diverge ({it_a} vs {it_b})")
        print(f"{label:24s} {arr.n_cons:6d} {arr.n_vars:6d} {it_a:6d} "
              f"{t_numpy * 1e3:10.2f} {t_numba * 1e3:10.2f} "
              f"{t_numpy / max(t_numba, 1e-12):7.2f}x")
    print("\nidentical objectives and iteration counts under both kernels")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
