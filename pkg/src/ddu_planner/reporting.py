"""Post-solve certification and deterministic CSV reporting.

The cost report never trusts the solved monolith's internal bookkeeping.
It freezes the chosen investment, re-solves every feasible scenario's
dispatch as an exact LP, recovers the worst-case distribution from the
independent transport oracle on those re-solved outcomes, and rebuilds
the total from scratch:

    total = capital + Da * (worst-case expected operating cost)

For the exact couplings this certified total matches the solver
objective to tolerance; for the envelope coupling it may exceed it by at
most the reported envelope gap. All CSV output uses ``%.9g`` floats and
fully deterministic row ordering so repeated runs are byte-identical.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .assemble import RobustSolution, resolve_scenario_lp
from .dispatch import COST_CATEGORIES, DispatchBlock
from .network import Instance
from .oracles import primal_inner_lp
from .scenarios import ScenarioSupport, screen_feasible

__all__ = [
    "COST_ROW_NAMES",
    "CostReport",
    "certified_costs",
    "fmt",
    "write_csv",
    "costs_rows",
    "production_rows",
    "capture_rows",
    "siting_rows",
    "counts_rows",
    "compare_rows",
    "write_manifest",
]

_CATEGORY_ROW = {
    "h2_purchase": "hydrogen_purchase",
    "h2_unserved": "unserved_hydrogen",
    "congestion": "congestion_time",
    "pv_curtail": "pv_curtailment",
    "elec_purchase": "electricity_purchase",
    "elec_unserved": "unserved_electricity",
}

COST_ROW_NAMES = (
    "investment_hrs", "investment_storage", "investment_p2g",
    "investment_pipeline",
    "hydrogen_purchase", "unserved_hydrogen", "congestion_time",
    "pv_curtailment", "electricity_purchase", "unserved_electricity",
    "total",
)


@dataclass
class CostReport:
    rows: list[tuple[str, float]]
    total: float
    solver_objective: float
    worst_p: np.ndarray
    theta: np.ndarray
    mc_gap: float
    resolves: dict[int, tuple[DispatchBlock, np.ndarray]] = field(
        default_factory=dict)

    def value(self, name: str) -> float:
        for n, v in self.rows:
            if n == name:
                return v
        raise KeyError(name)


def certified_costs(inst: Instance, sol: RobustSolution,
                    support: ScenarioSupport | None = None,
                    feasible: np.ndarray | None = None,
                    engine: str = "highs") -> CostReport:
    """Re-derive the cost breakdown under the solved plan (see module doc)."""
    if sol.pattern is None:
        raise ValueError("solution has no investment pattern")
    if support is None:
        support = ScenarioSupport(inst)
    if feasible is None:
        feasible = screen_feasible(inst, engine=engine)
    pat = sol.pattern
    n = support.n_scenarios
    theta = np.zeros(n)
    resolves: dict[int, tuple[DispatchBlock, np.ndarray]] = {}
    for j in range(n):
        if not feasible[j]:
            continue
        val, blk, x = resolve_scenario_lp(inst, pat, support.daily[j],
                                          engine)
        if math.isnan(val):
            raise RuntimeError(
                f"dispatch re-solve infeasible for scenario {j} under the "
                f"reported plan")
        theta[j] = val
        resolves[j] = (blk, x)

    if sol.mode == "ro":
        feas_idx = np.nonzero(feasible)[0]
        worst_j = int(feas_idx[int(np.argmax(theta[feas_idx]))])
        worst_p = np.zeros(n)
        worst_p[worst_j] = 1.0
        inner = float(theta[worst_j])
    else:
        if sol.mode == "so":
            center = support.base_probability()
            radius = 0.0
        elif sol.mode == "diu":
            center = support.invested_probability()
            radius = sol.radius
        else:
            center = support.probability(
                np.asarray(pat.w_hy, dtype=float))
            radius = sol.radius
        tr = primal_inner_lp(support, theta, center, radius,
                             feasible=feasible, engine=engine)
        if tr.status != "optimal":
            raise RuntimeError(f"transport certification LP {tr.status}")
        worst_p = tr.worst_p
        inner = tr.value

    da = float(inst.econ.days_per_year)
    ec = inst.econ
    rows: list[tuple[str, float]] = [
        ("investment_hrs", ec.hrs_capex_per_kg * float(pat.h_hy.sum())),
        ("investment_storage",
         ec.storage_capex_per_kg * float(pat.h_hs.sum())),
        ("investment_p2g", ec.p2g_capex_per_mw * float(pat.h_p2g.sum())),
        ("investment_pipeline",
         float(sum(p.capital_cost * w
                   for p, w in zip(inst.pipes, pat.w_pipe)))),
    ]
    for cat in COST_CATEGORIES:
        val = da * float(sum(
            worst_p[j] * blk.category_value(cat, x)
            for j, (blk, x) in resolves.items()))
        rows.append((_CATEGORY_ROW[cat], val))
    capex = float(sum(v for _, v in rows[:4]))
    total = capex + da * inner
    op_sum = float(sum(v for n_, v in rows[4:]))
    if abs(op_sum - da * inner) > 1e-6 * max(1.0, abs(da * inner)):
        raise RuntimeError(
            "certified category sum disagrees with the worst-case value "
            f"({op_sum} vs {da * inner})")
    ordered = {n_: v for n_, v in rows}
    out = [(name, ordered[name]) for name in COST_ROW_NAMES[:-1]]
    out.append(("total", total))
    return CostReport(out, total, sol.objective, worst_p, theta,
                      sol.mc_gap, resolves)


# ------------------------------------------------------------------ CSV plumbing

def fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.9g" % float(v)
    return str(v)


def write_csv(path: str, header: list[str], rows: list) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for row in rows:
            wr.writerow([fmt(v) for v in row])


def costs_rows(report: CostReport) -> tuple[list[str], list]:
    return ["category", "annual_cost"], list(report.rows)


def production_rows(inst: Instance, support: ScenarioSupport,
                    report: CostReport) -> tuple[list[str], list]:
    header = ["scenario", "node", "hour", "served_kg", "unserved_kg",
              "receipt_kg", "charge_kg", "discharge_kg", "soc_kg",
              "p2g_kg", "purchase_kg"]
    rows = []
    cands = inst.candidates
    srcs = inst.sources
    for j in sorted(report.resolves):
        blk, x = report.resolves[j]
        g = blk.groups
        for k, node in enumerate(cands):
            for t in range(inst.horizon):
                rows.append([j, node.id, t,
                             x[g["served"][k, t]], x[g["unserved"][k, t]],
                             x[g["receipt"][k, t]], x[g["charge"][k, t]],
                             x[g["discharge"][k, t]], x[g["soc"][k, t]],
                             x[g["p2g_kg"][k, t]], 0.0])
        for k, node in enumerate(srcs):
            for t in range(inst.horizon):
                rows.append([j, node.id, t, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
                             0.0, x[g["src_purchase"][k, t]]])
    return header, rows


def capture_rows(inst: Instance, support: ScenarioSupport,
                 report: CostReport) -> tuple[list[str], list]:
    header = ["scenario", "candidate", "hour", "captured_veh_h",
              "required_veh_h"]
    rows = []
    for j in sorted(report.resolves):
        blk, x = report.resolves[j]
        req = inst.capture_requirement(support.daily[j])
        cap = blk.groups["capture"]
        for k, node in enumerate(inst.candidates):
            for t in range(inst.horizon):
                rows.append([j, node.id, t, x[cap[k, t]], req[k]])
    return header, rows


def siting_rows(inst: Instance, sol: RobustSolution
                ) -> tuple[list[str], list]:
    header = ["element", "id", "built", "storage_built", "p2g_built",
              "station_cap_kg", "storage_cap_kg", "p2g_cap_mw"]
    pat = sol.pattern
    rows = []
    for k, node in enumerate(inst.candidates):
        rows.append(["station", node.id, pat.w_hy[k], pat.w_hy[k],
                     pat.w_p2g[k], pat.h_hy[k], pat.h_hs[k], pat.h_p2g[k]])
    for k, pipe in enumerate(inst.pipes):
        rows.append(["pipe", pipe.id, pat.w_pipe[k], 0, 0, 0.0, 0.0, 0.0])
    return header, rows


def counts_rows(model) -> tuple[list[str], list]:
    header = ["tag", "rows", "vars"]
    census = model.tag_census()
    rows = [[tag, c, v] for tag, (c, v) in sorted(census.items())]
    nr, nv = model.build_arrays().n_cons, model.build_arrays().n_vars
    rows.append(["TOTAL", nr, nv])
    return header, rows


def compare_rows(results: list[tuple[str, RobustSolution, CostReport]]
                 ) -> tuple[list[str], list]:
    header = ["mode", "solver_objective", "certified_total", "capital",
              "worst_case_operating", "stations", "pipes", "radius"]
    rows = []
    for mode, sol, rep in results:
        rows.append([
            mode, sol.objective, rep.total, sol.capex,
            rep.total - sol.capex,
            "".join(str(b) for b in sol.pattern.w_hy),
            "".join(str(b) for b in sol.pattern.w_pipe),
            sol.radius,
        ])
    return header, rows


def write_manifest(out_dir: str, files: list[str],
                   config: dict) -> str:
    """Deterministic manifest: config echo + sha256 of each artifact."""
    entries = []
    for name in sorted(files):
        path = os.path.join(out_dir, name)
        h = hashlib.sha256()
        with open(path, "rb") as fh:
            h.update(fh.read())
        entries.append({"file": name, "sha256": h.hexdigest(),
                        "bytes": os.path.getsize(path)})
    payload = {"config": config, "artifacts": entries}
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path
