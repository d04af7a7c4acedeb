"""Command-line front end: build / solve / compare / verify.

Exit codes: 0 success, 1 failed verification or non-optimal solve,
2 bad input, 3 model-size guard refusal.  All CSV artifacts are
byte-deterministic; wall-clock timings go to stdout only.
"""

from __future__ import annotations

import argparse
import itertools
import os
import sys
import time

import numpy as np

from .assemble import (
    BILINEAR_MODES,
    MODES,
    REDUCE_LEVELS,
    ModelSizeError,
    RobustConfig,
    build_robust_model,
    dual_inner_value,
    pattern_outcomes,
    reformulation_report,
    shortage_multiplier_cap,
    solve_robust,
)
from .milp.writers import export_lp_text, export_mps
from .network import Instance, load_instance
from .oracles import (
    EXHAUSTIVE_NODE_LIMIT,
    EXHAUSTIVE_PIPE_LIMIT,
    OracleRecord,
    exhaustive_plan_oracle,
    pl_interpolant,
    piecewise_gap,
    primal_inner_lp,
    probability_oracle,
    radius_grid,
    write_oracle_csv,
)
from .reporting import (
    capture_rows,
    certified_costs,
    compare_rows,
    costs_rows,
    counts_rows,
    production_rows,
    siting_rows,
    write_csv,
    write_manifest,
)
from .scenarios import ScenarioSupport, screen_feasible

VERIFY_CHECKS = ("transport", "duality", "reduction", "oracle", "piecewise")
DUALITY_SCENARIO_LIMIT = 128
ENUMERATE_BIT_LIMIT = 12


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="ddu-planner",
        description="Hydrogen refuelling network planning under "
        "decision-dependent demand uncertainty.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("instance", help="packaged instance name or YAML path")
        p.add_argument("--mode", choices=MODES, default="ddu")
        p.add_argument("--radius", type=float, default=0.0,
                       help="ambiguity budget in kg of daily demand")
        p.add_argument("--beta", type=float, default=None,
                       help="override the service-level fraction")
        p.add_argument("--segments", type=int, nargs=2, default=None,
                       metavar=("FLOW", "DELAY"),
                       help="piecewise segment counts")
        p.add_argument("--reduce", choices=REDUCE_LEVELS, default="all")
        p.add_argument("--bilinear", choices=BILINEAR_MODES,
                       default="enumerate")
        p.add_argument("--engine", choices=("highs", "simplex"),
                       default="highs")
        p.add_argument("--out", default="out", help="artifact directory")

    for name in ("build", "solve", "compare", "verify"):
        p = sub.add_parser(name)
        common(p)
        if name == "verify":
            p.add_argument("--check", choices=VERIFY_CHECKS + ("all",),
                           default="all")
            p.add_argument("--r-sweep", dest="r_sweep", action="store_true",
                           help="also check objective monotonicity in the "
                           "radius")
    return ap


def _load(args) -> Instance:
    inst = load_instance(args.instance)
    if args.beta is not None:
        if not 0.0 < args.beta <= 1.0:
            raise ValueError("--beta must lie in (0, 1]")
        inst.econ.beta = float(args.beta)
    if args.segments is not None:
        k, h = args.segments
        if k < 1 or h < 1:
            raise ValueError("--segments counts must be >= 1")
        inst.flow_segments = int(k)
        inst.delay_segments = int(h)
    return inst


def _config(args, **overrides) -> RobustConfig:
    kw = dict(mode=args.mode, radius=args.radius, reduce=args.reduce,
              bilinear=args.bilinear, engine=args.engine)
    kw.update(overrides)
    return RobustConfig(**kw)


def _echo_config(args) -> dict:
    keys = ("instance", "mode", "radius", "beta", "segments", "reduce",
            "bilinear", "engine")
    return {k: getattr(args, k, None) for k in keys}


# ----------------------------------------------------------------- commands


def cmd_build(args) -> int:
    inst = _load(args)
    # the monolithic McCormick build is the representative artifact for the
    # decision-dependent mode; other modes have no bilinear term to relax
    cfg = _config(args, shape="lean",
                  bilinear="mccormick" if args.mode == "ddu" else args.bilinear)
    t0 = time.perf_counter()
    am = build_robust_model(inst, cfg)
    dt = time.perf_counter() - t0
    os.makedirs(args.out, exist_ok=True)
    export_mps(am.model, os.path.join(args.out, "model.mps"))
    export_lp_text(am.model, os.path.join(args.out, "model.lp"))
    hdr, rows = counts_rows(am.model)
    write_csv(os.path.join(args.out, "counts.csv"), hdr, rows)
    write_manifest(args.out, ["model.mps", "model.lp", "counts.csv"],
                   _echo_config(args))
    arr = am.model.build_arrays()
    print(f"built {inst.name}: {arr.n_cons} rows, {arr.n_vars} vars "
          f"({cfg.mode}/{cfg.reduce}) in {dt:.2f}s -> {args.out}/")
    return 0


def cmd_solve(args) -> int:
    inst = _load(args)
    sup = ScenarioSupport(inst)
    feas = screen_feasible(inst, engine=args.engine)
    cfg = _config(args)
    t0 = time.perf_counter()
    sol = solve_robust(inst, cfg, sup, feas)
    dt = time.perf_counter() - t0
    if sol.status != "optimal":
        print(f"solve failed: status={sol.status}", file=sys.stderr)
        return 1
    rep = certified_costs(inst, sol, sup, feas, engine=args.engine)
    os.makedirs(args.out, exist_ok=True)
    for name, (hdr, rows) in {
        "costs.csv": costs_rows(rep),
        "production.csv": production_rows(inst, sup, rep),
        "capture.csv": capture_rows(inst, sup, rep),
        "siting.csv": siting_rows(inst, sol),
    }.items():
        write_csv(os.path.join(args.out, name), hdr, rows)
    write_manifest(args.out, ["costs.csv", "production.csv", "capture.csv",
                              "siting.csv"], _echo_config(args))
    bits = "".join(str(b) for b in sol.pattern.bits)
    print(f"{inst.name} {cfg.mode} r={cfg.radius:g}: "
          f"objective {sol.objective:.6f} (certified {rep.total:.6f})")
    print(f"  plan bits {bits}  capex {sol.capex:.2f}  "
          f"worst-case p {np.array2string(rep.worst_p, precision=4)}")
    print(f"  solved in {dt:.2f}s ({sol.nodes} nodes) -> {args.out}/")
    return 0


def cmd_compare(args) -> int:
    inst = _load(args)
    sup = ScenarioSupport(inst)
    feas = screen_feasible(inst, engine=args.engine)
    results = []
    timings = {}
    for mode in MODES:
        cfg = _config(args, mode=mode)
        t0 = time.perf_counter()
        sol = solve_robust(inst, cfg, sup, feas)
        timings[mode] = time.perf_counter() - t0
        if sol.status != "optimal":
            print(f"{mode}: solve failed ({sol.status})", file=sys.stderr)
            return 1
        rep = certified_costs(inst, sol, sup, feas, engine=args.engine)
        results.append((mode, sol, rep))
    os.makedirs(args.out, exist_ok=True)
    hdr, rows = compare_rows(results)
    write_csv(os.path.join(args.out, "compare.csv"), hdr, rows)
    write_manifest(args.out, ["compare.csv"], _echo_config(args))
    print(f"{inst.name} r={args.radius:g}  (timings stay out of the CSV)")
    for (mode, sol, rep), row in zip(results, rows):
        print(f"  {mode:4s} objective {sol.objective:14.2f}  "
              f"capex {sol.capex:12.2f}  stations {row[5]}  "
              f"[{timings[mode]:.2f}s]")
    return 0


# ------------------------------------------------------------------- verify


def _verify_transport(inst, sup, feas, theta, engine, recs):
    center = probability_oracle(inst, (1,) * sup.n_nodes)
    grid = radius_grid(sup)
    r0 = primal_inner_lp(sup, theta, center, 0.0, feasible=feas,
                         engine=engine)
    expect = float(center[feas] @ theta[feas])
    recs.append(OracleRecord("transport_r0", inst.name,
                             "expectation identity", r0.value, expect))
    sat = primal_inner_lp(sup, theta, center, float(grid[-1]),
                          feasible=feas, engine=engine)
    cap = float(center[feas].sum() * theta[feas].max())
    recs.append(OracleRecord("transport_saturated", inst.name,
                             f"r={grid[-1]:g}", sat.value, cap))
    recs.append(OracleRecord("transport_mass", inst.name, "sum(worst_p)",
                             float(sat.worst_p.sum()), 1.0))


def _verify_duality(inst, sup, feas, theta, engine, recs):
    if sup.n_scenarios > DUALITY_SCENARIO_LIMIT:
        print(f"  duality: skipped ({sup.n_scenarios} scenarios exceed "
              f"the check budget)")
        return
    m_eps = shortage_multiplier_cap(inst)
    if sup.n_nodes <= 4:
        patterns = list(itertools.product((0, 1), repeat=sup.n_nodes))
    else:
        rng = np.random.default_rng(20260818)
        patterns = [(0,) * sup.n_nodes, (1,) * sup.n_nodes]
        patterns += [tuple(int(b) for b in rng.integers(0, 2, sup.n_nodes))
                     for _ in range(6)]
    for w in patterns:
        p = probability_oracle(inst, w)
        for r in radius_grid(sup):
            ref = primal_inner_lp(sup, theta, p, float(r), feasible=feas,
                                  engine=engine)
            dual = dual_inner_value(sup, feas, theta, p, float(r), m_eps,
                                    reduce="comonotone", engine=engine)
            recs.append(OracleRecord(
                "duality_gap", inst.name,
                f"w={''.join(map(str, w))} r={r:g}", dual, ref.value))


def _verify_reduction(inst, sup, feas, args, recs):
    if sup.n_scenarios > DUALITY_SCENARIO_LIMIT or \
            len(inst.candidates) * 2 + len(inst.pipes) > ENUMERATE_BIT_LIMIT:
        print("  reduction: skipped (instance too large for enumerate mode)")
        return
    base = None
    for red in REDUCE_LEVELS:
        cfg = _config(args, mode="ddu", reduce=red, bilinear="enumerate")
        sol = solve_robust(inst, cfg, sup, feas)
        if base is None:
            base = sol.objective
        recs.append(OracleRecord("reduction_objective", inst.name,
                                 red, sol.objective, base))


def _verify_oracle(inst, sup, feas, args, recs):
    if len(inst.candidates) > EXHAUSTIVE_NODE_LIMIT or \
            len(inst.pipes) > EXHAUSTIVE_PIPE_LIMIT:
        print("  oracle: skipped (instance too large for exhaustive "
              "enumeration)")
        return
    res = exhaustive_plan_oracle(inst, args.radius, engine=args.engine)
    cfg = _config(args, mode="ddu", bilinear="enumerate")
    sol = solve_robust(inst, cfg, sup, feas)
    recs.append(OracleRecord("plan_oracle", inst.name,
                             f"r={args.radius:g}", sol.objective, res.value))
    recs.append(OracleRecord("plan_oracle_bits", inst.name,
                             f"r={args.radius:g}",
                             float(sol.pattern.bits == res.bits), 1.0))


def _verify_piecewise(inst, recs):
    link = max(inst.links, key=lambda l: l.x_max)
    t0c, cap = link.t0_minutes, link.capacity

    def total_delay(x):
        return t0c * x * (1.0 + 0.15 * (x / cap) ** 4)

    k = inst.delay_segments
    xs = np.linspace(0.0, link.x_max, k + 1)
    knots = pl_interpolant(total_delay, link.x_max, k, xs)
    recs.append(OracleRecord("piecewise_knots", inst.name, link.id,
                             float(np.abs(knots - total_delay(xs)).max()),
                             0.0))
    g1 = piecewise_gap(total_delay, link.x_max, max(1, k // 2))
    g2 = piecewise_gap(total_delay, link.x_max, k)
    recs.append(OracleRecord("piecewise_refines", inst.name,
                             f"{max(1, k // 2)}->{k} segments",
                             min(g1, g2), g2))


def cmd_verify(args) -> int:
    inst = _load(args)
    sup = ScenarioSupport(inst)
    feas = screen_feasible(inst, engine=args.engine)
    checks = VERIFY_CHECKS if args.check == "all" else (args.check,)
    recs: list[OracleRecord] = []
    theta = None
    if {"transport", "duality"} & set(checks):
        theta = pattern_outcomes(inst, sup, feas, (1,) * sup.n_nodes,
                                 engine=args.engine)
    for chk in checks:
        t0 = time.perf_counter()
        before = len(recs)
        if chk == "transport":
            _verify_transport(inst, sup, feas, theta, args.engine, recs)
        elif chk == "duality":
            _verify_duality(inst, sup, feas, theta, args.engine, recs)
        elif chk == "reduction":
            _verify_reduction(inst, sup, feas, args, recs)
        elif chk == "oracle":
            _verify_oracle(inst, sup, feas, args, recs)
        elif chk == "piecewise":
            _verify_piecewise(inst, recs)
        n = len(recs) - before
        print(f"  {chk}: {n} records in {time.perf_counter() - t0:.2f}s")

    if args.r_sweep:
        prev = -np.inf
        ok = True
        for r in radius_grid(sup):
            cfg = _config(args, mode="ddu", radius=float(r),
                          bilinear="enumerate")
            sol = solve_robust(inst, cfg, sup, feas)
            ok = ok and sol.objective >= prev - 1e-6
            prev = sol.objective
        recs.append(OracleRecord("radius_monotone", inst.name,
                                 "objective nondecreasing", float(ok), 1.0))

    os.makedirs(args.out, exist_ok=True)
    failures = write_oracle_csv(os.path.join(args.out, "verify.csv"), recs,
                                tol=1e-6)
    write_manifest(args.out, ["verify.csv"], _echo_config(args))
    worst = max((r.rel_err for r in recs), default=0.0)
    print(f"{inst.name}: {len(recs)} oracle records, {failures} failures "
          f"(worst relative error {worst:.2e}) -> {args.out}/verify.csv")
    return 1 if failures else 0


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    handlers = {"build": cmd_build, "solve": cmd_solve,
                "compare": cmd_compare, "verify": cmd_verify}
    try:
        return handlers[args.command](args)
    except ModelSizeError as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return 3
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
