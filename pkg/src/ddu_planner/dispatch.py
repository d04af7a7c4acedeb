"""Tagged model builders for the deterministic planning layers.

Every builder appends rows/variables to a caller-supplied
:class:`~ddu_planner.milp.MilpModel` and tags them by constraint family so
structural tests can count blocks without parsing names. None of the
builders touches the model objective: operating costs are returned as
sparse linear expressions (column/coefficient arrays) and the assembler
decides how to weight them (expectation, worst case, or per-scenario
epigraph variables).

Builders
========
``build_investment``
    first-stage siting/sizing variables: station build flags, refuelling /
    storage / power-to-gas capacities, pipeline build flags; capacity
    gating, technology linking, pipeline-count and budget rows.
``build_traffic``
    hourly path flows for the two vehicle classes, link totals, captured
    refuelling vehicles per candidate; OD balance, link-path coupling,
    hard caps, network capture conservation, path/station capture
    consistency and per-station capture floors.
``build_bpr_delay``
    incremental secant model of the marginal congestion-delay term per
    link-hour; no ordering binaries are needed because the term is convex
    and delay is cost-minimized.
``build_hydrogen``
    served/unserved split of station demand, dispensing-capacity caps, a
    network fulfilment floor, cyclic storage dynamics, power-to-gas
    conversion, nodal hydrogen balance, pipeline receipts and source
    purchases.
``build_pipeline``
    secant-linearized pressure-drop relation gated by the pipe build flag,
    flow caps, cyclic linepack dynamics pinned to the reference fill.
``build_power``
    DC network via line sensitivities (slack-referenced); grid purchase,
    load shedding, PV curtailment, electrolyzer cap.
``build_dispatch``
    one scenario's full second stage: traffic + delay + hydrogen +
    pipeline + power wired together, with per-category operating-cost
    expressions collected into a :class:`DispatchBlock`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .milp import MilpModel
from .network import (
    Instance,
    bpr_secant_slopes,
    hourly_station_demand,
    secant_slopes,
)

__all__ = [
    "InvestmentVars",
    "TrafficVars",
    "DispatchBlock",
    "build_investment",
    "build_traffic",
    "build_bpr_delay",
    "build_hydrogen",
    "build_pipeline",
    "build_power",
    "build_dispatch",
    "investment_cost_expr",
    "COST_CATEGORIES",
]

# report-facing operating cost categories, in output order
COST_CATEGORIES = (
    "h2_purchase",
    "h2_unserved",
    "congestion",
    "pv_curtail",
    "elec_purchase",
    "elec_unserved",
)


# ------------------------------------------------------------------ investment

@dataclass
class InvestmentVars:
    """Column indices of the first-stage variables."""

    w_hy: np.ndarray     # (n_cand,) station build flags, binary
    w_hs: np.ndarray     # (n_cand,) storage build flags, binary
    w_p2g: np.ndarray    # (n_cand,) power-to-gas build flags, binary
    w_pipe: np.ndarray   # (n_pipes,) pipeline build flags, binary
    h_hy: np.ndarray     # (n_cand,) dispensing capacity, kg/h
    h_hs: np.ndarray     # (n_cand,) storage capacity, kg
    h_p2g: np.ndarray    # (n_cand,) electrolyzer capacity, MW

    def all_binary(self) -> np.ndarray:
        return np.concatenate([self.w_hy, self.w_hs, self.w_p2g, self.w_pipe])


def investment_cost_expr(inst: Instance, inv: InvestmentVars
                         ) -> tuple[np.ndarray, np.ndarray]:
    """(cols, coefs) of the annualized capital cost."""
    ec = inst.econ
    cols = np.concatenate([inv.h_hy, inv.h_hs, inv.h_p2g, inv.w_pipe])
    coefs = np.concatenate([
        np.full(inv.h_hy.size, ec.hrs_capex_per_kg),
        np.full(inv.h_hs.size, ec.storage_capex_per_kg),
        np.full(inv.h_p2g.size, ec.p2g_capex_per_mw),
        np.array([p.capital_cost for p in inst.pipes], dtype=float),
    ])
    return cols, coefs


def build_investment(model: MilpModel, inst: Instance,
                     relax_binaries: bool = False) -> InvestmentVars:
    """First-stage build/size variables with gating and budget rows.

    ``relax_binaries`` registers the build flags as continuous in [0, 1]
    (used by bound-certification solves); default is binary.
    """
    cands = inst.candidates
    nc = len(cands)
    np_pipes = len(inst.pipes)
    integer = not relax_binaries

    w_hy = np.array([model.add_variable(
        f"inv:w_hy[{c.id}]", 0.0, 1.0, integer=integer, tag="inv:w_hy")
        for c in cands], dtype=np.int64)
    w_hs = np.array([model.add_variable(
        f"inv:w_hs[{c.id}]", 0.0, 1.0, integer=integer, tag="inv:w_hs")
        for c in cands], dtype=np.int64)
    w_p2g = np.array([model.add_variable(
        f"inv:w_p2g[{c.id}]", 0.0, 1.0, integer=integer, tag="inv:w_p2g")
        for c in cands], dtype=np.int64)
    w_pipe = np.array([model.add_variable(
        f"inv:w_pipe[{p.id}]", 0.0, 1.0, integer=integer, tag="inv:w_pipe")
        for p in inst.pipes], dtype=np.int64)
    h_hy = np.array([model.add_variable(
        f"inv:h_hy[{c.id}]", 0.0, c.hrs_cap_range[1], tag="inv:h_hy")
        for c in cands], dtype=np.int64)
    h_hs = np.array([model.add_variable(
        f"inv:h_hs[{c.id}]", 0.0, c.storage_cap_range[1], tag="inv:h_hs")
        for c in cands], dtype=np.int64)
    h_p2g = np.array([model.add_variable(
        f"inv:h_p2g[{c.id}]", 0.0, c.p2g_cap_range[1], tag="inv:h_p2g")
        for c in cands], dtype=np.int64)

    for k, c in enumerate(cands):
        # capacity exists iff built, and sits inside its design range
        for hcol, wcol, rng, fam in (
            (h_hy[k], w_hy[k], c.hrs_cap_range, "inv:hrs_gate"),
            (h_hs[k], w_hs[k], c.storage_cap_range, "inv:hs_gate"),
            (h_p2g[k], w_p2g[k], c.p2g_cap_range, "inv:p2g_gate"),
        ):
            model.add_constraint(
                [hcol, wcol], [1.0, -rng[0]], ">=", 0.0,
                name=f"{fam}_lo[{c.id}]", tag=fam)
            model.add_constraint(
                [hcol, wcol], [1.0, -rng[1]], "<=", 0.0,
                name=f"{fam}_hi[{c.id}]", tag=fam)
        # electrolyzers need a station; storage comes with the station
        model.add_constraint(
            [w_p2g[k], w_hy[k]], [1.0, -1.0], "<=", 0.0,
            name=f"inv:tech_link_p2g[{c.id}]", tag="inv:tech_link")
        model.add_constraint(
            [w_hs[k], w_hy[k]], [1.0, -1.0], "=", 0.0,
            name=f"inv:tech_link_hs[{c.id}]", tag="inv:tech_link")

    if np_pipes:
        max_pipes = max(0, len(cands) - len(inst.sources))
        model.add_constraint(
            w_pipe, np.ones(np_pipes), "<=", float(max_pipes),
            name="inv:pipe_count", tag="inv:pipe_count")

    inv = InvestmentVars(w_hy, w_hs, w_p2g, w_pipe, h_hy, h_hs, h_p2g)
    if math.isfinite(inst.econ.budget):
        cols, coefs = investment_cost_expr(inst, inv)
        model.add_constraint(cols, coefs, "<=", inst.econ.budget,
                             name="inv:budget", tag="inv:budget")
    return inv


# --------------------------------------------------------------------- traffic

@dataclass
class TrafficVars:
    """Column indices of one scenario-hour-indexed traffic block."""

    path_flow: dict          # (path_id, cls, t) -> col
    link_flow: np.ndarray    # (n_links, T)
    capture: np.ndarray      # (n_cand, T) captured vehicles/h


def build_traffic(model: MilpModel, inst: Instance,
                  req: np.ndarray | None = None,
                  label: str = "", hours=None) -> TrafficVars:
    """Hourly traffic assignment with refuelling capture.

    ``req`` (vehicles/h per candidate, hour-invariant) adds the capture
    floors; pass ``None`` to omit them (the screening LP imposes floors
    through bound overrides instead, so one template serves all
    scenarios). ``hours`` restricts the block to a subset of hours.
    """
    cands = inst.candidates
    # map h2-node index -> candidate ordinal (paths store h2-node indices)
    ord_of = {inst.h2_index(c.id): k for k, c in enumerate(cands)}
    hours = list(range(inst.horizon)) if hours is None else list(hours)
    nl = len(inst.links)

    path_flow: dict = {}
    link_flow = np.full((nl, inst.horizon), -1, dtype=np.int64)
    capture = np.full((len(cands), inst.horizon), -1, dtype=np.int64)

    link_ord = {l.id: k for k, l in enumerate(inst.links)}
    paths_by_link: dict[int, list] = {k: [] for k in range(nl)}
    for p in inst.paths:
        for li in p.link_idx:
            paths_by_link[int(li)].append(p)

    q_t = inst.total_hfcv_trips()

    for t in hours:
        for p in inst.paths:
            for cls in ("H", "O"):
                path_flow[(p.id, cls, t)] = model.add_variable(
                    f"{label}traffic:f[{p.id},{cls},t{t}]",
                    tag="traffic:path_flow")
        for l in inst.links:
            k = link_ord[l.id]
            link_flow[k, t] = model.add_variable(
                f"{label}traffic:x[{l.id},t{t}]", 0.0, l.x_max,
                tag="traffic:link_flow")
        for k, c in enumerate(cands):
            capture[k, t] = model.add_variable(
                f"{label}traffic:cap[{c.id},t{t}]", tag="traffic:capture")

        scale = float(inst.hourly_profile[t])
        for od in inst.ods:
            for cls, trips in (("H", od.trips_hfcv), ("O", od.trips_other)):
                cols = [path_flow[(pid, cls, t)] for pid in od.path_ids]
                model.add_constraint(
                    cols, np.ones(len(cols)), "=", trips * scale,
                    name=f"{label}traffic:od_balance[{od.id},{cls},t{t}]",
                    tag="traffic:od_balance")
        for l in inst.links:
            k = link_ord[l.id]
            cols = [link_flow[k, t]]
            vals = [1.0]
            for p in paths_by_link[k]:
                for cls in ("H", "O"):
                    cols.append(path_flow[(p.id, cls, t)])
                    vals.append(-1.0)
            model.add_constraint(
                cols, vals, "=", 0.0,
                name=f"{label}traffic:link_path[{l.id},t{t}]",
                tag="traffic:link_path")
            model.add_constraint(
                [link_flow[k, t]], [1.0], "<=", l.x_max,
                name=f"{label}traffic:link_total[{l.id},t{t}]",
                tag="traffic:link_total")
        # every refuelling trip is captured exactly once network-wide
        model.add_constraint(
            capture[:, t], np.ones(len(cands)), "=", float(q_t[t]),
            name=f"{label}traffic:capture_total[t{t}]",
            tag="traffic:capture_total")
        for p in inst.paths:
            cols = [path_flow[(p.id, "H", t)]]
            vals = [1.0]
            for hidx in p.candidate_idx:
                cols.append(capture[ord_of[hidx], t])
                vals.append(-1.0)
            model.add_constraint(
                cols, vals, "<=", 0.0,
                name=f"{label}traffic:path_capture[{p.id},t{t}]",
                tag="traffic:path_capture")
        for k, c in enumerate(cands):
            cols = [capture[k, t]]
            vals = [1.0]
            for p in inst.paths:
                if inst.h2_index(c.id) in p.candidate_idx:
                    cols.append(path_flow[(p.id, "H", t)])
                    vals.append(-1.0)
            model.add_constraint(
                cols, vals, "<=", 0.0,
                name=f"{label}traffic:node_capture[{c.id},t{t}]",
                tag="traffic:node_capture")
        if req is not None:
            for k, c in enumerate(cands):
                model.add_constraint(
                    [capture[k, t]], [1.0], ">=", float(req[k]),
                    name=f"{label}traffic:capture_demand[{c.id},t{t}]",
                    tag="traffic:capture_demand")

    return TrafficVars(path_flow, link_flow, capture)


def build_bpr_delay(model: MilpModel, inst: Instance, tv: TrafficVars,
                    label: str = "") -> np.ndarray:
    """Marginal congestion delay per link-hour via the incremental secant
    model; returns the (n_links, T) delay-variable columns (veh-min/h)."""
    nseg = inst.delay_segments
    delay = np.full((len(inst.links), inst.horizon), -1, dtype=np.int64)
    for k, l in enumerate(inst.links):
        xs, slopes = bpr_secant_slopes(l.t0_minutes, l.capacity, l.x_max, nseg)
        seg_ub = float(xs[1] - xs[0])
        for t in range(inst.horizon):
            if tv.link_flow[k, t] < 0:
                continue
            segs = model.add_variables(
                f"{label}bpr:seg[{l.id},t{t}]", nseg, 0.0, seg_ub,
                tag="bpr:segment")
            model.add_constraint(
                np.concatenate([[tv.link_flow[k, t]], segs]),
                np.concatenate([[1.0], -np.ones(nseg)]),
                "=", 0.0,
                name=f"{label}bpr:flow_split[{l.id},t{t}]",
                tag="bpr:flow_split")
            d = model.add_variable(
                f"{label}bpr:delay[{l.id},t{t}]", tag="bpr:delay")
            model.add_constraint(
                np.concatenate([[d], segs]),
                np.concatenate([[1.0], -slopes]),
                "=", 0.0,
                name=f"{label}bpr:delay_def[{l.id},t{t}]",
                tag="bpr:delay")
            delay[k, t] = d
    return delay


# -------------------------------------------------------------------- hydrogen

def build_hydrogen(model: MilpModel, inst: Instance, hourly_u: np.ndarray,
                   inv: InvestmentVars, label: str = "") -> dict:
    """Station demand service, cyclic storage, power-to-gas, nodal balance,
    pipeline receipts and source purchases for one scenario.

    ``hourly_u`` is the (n_cand, T) realized station demand in kg/h.
    Returns a dict of column groups.
    """
    cands = inst.candidates
    srcs = inst.sources
    ec = inst.econ
    nc, t_n = len(cands), inst.horizon

    groups = {
        "served": np.empty((nc, t_n), dtype=np.int64),
        "unserved": np.empty((nc, t_n), dtype=np.int64),
        "soc": np.empty((nc, t_n), dtype=np.int64),
        "charge": np.empty((nc, t_n), dtype=np.int64),
        "discharge": np.empty((nc, t_n), dtype=np.int64),
        "receipt": np.empty((nc, t_n), dtype=np.int64),
        "p2g_kg": np.empty((nc, t_n), dtype=np.int64),
        "p2g_mw": np.empty((nc, t_n), dtype=np.int64),
        "src_purchase": np.empty((len(srcs), t_n), dtype=np.int64),
    }

    for k, c in enumerate(cands):
        for t in range(t_n):
            groups["served"][k, t] = model.add_variable(
                f"{label}hyd:gd[{c.id},t{t}]", tag="hyd:served")
            groups["unserved"][k, t] = model.add_variable(
                f"{label}hyd:gls[{c.id},t{t}]", tag="hyd:unserved")
            groups["soc"][k, t] = model.add_variable(
                f"{label}hyd:soc[{c.id},t{t}]", tag="hyd:soc")
            groups["charge"][k, t] = model.add_variable(
                f"{label}hyd:gch[{c.id},t{t}]", tag="hyd:charge")
            groups["discharge"][k, t] = model.add_variable(
                f"{label}hyd:gdis[{c.id},t{t}]", tag="hyd:discharge")
            groups["receipt"][k, t] = model.add_variable(
                f"{label}hyd:gm[{c.id},t{t}]", tag="hyd:receipt")
            groups["p2g_kg"][k, t] = model.add_variable(
                f"{label}hyd:gp2g[{c.id},t{t}]", tag="hyd:p2g_kg")
            groups["p2g_mw"][k, t] = model.add_variable(
                f"{label}pwr:pp2g[{c.id},t{t}]", tag="pwr:p2g_mw")
    for s_k, s in enumerate(srcs):
        for t in range(t_n):
            groups["src_purchase"][s_k, t] = model.add_variable(
                f"{label}hyd:gsrc[{s.id},t{t}]", 0.0, s.receipt_cap_kg_h,
                tag="hyd:src_purchase")

    kg_per_mw_h = ec.eta_p2g * ec.kg_per_mw

    for k, c in enumerate(cands):
        for t in range(t_n):
            gd = groups["served"][k, t]
            gls = groups["unserved"][k, t]
            model.add_constraint(
                [gd, gls], [1.0, 1.0], "=", float(hourly_u[k, t]),
                name=f"{label}hyd:serve_split[{c.id},t{t}]",
                tag="hyd:serve_split")
            model.add_constraint(
                [gd, inv.h_hy[k]], [1.0, -1.0], "<=", 0.0,
                name=f"{label}hyd:station_cap[{c.id},t{t}]",
                tag="hyd:station_cap")
            # cyclic storage: hour 0 wraps to the last hour
            prev = groups["soc"][k, (t - 1) % t_n]
            model.add_constraint(
                [groups["soc"][k, t], prev,
                 groups["charge"][k, t], groups["discharge"][k, t]],
                [1.0, -1.0, -ec.eta_charge, 1.0 / ec.eta_discharge],
                "=", 0.0,
                name=f"{label}hyd:soc_dyn[{c.id},t{t}]", tag="hyd:soc_dyn")
            model.add_constraint(
                [groups["soc"][k, t], inv.h_hs[k]], [1.0, -1.0], "<=", 0.0,
                name=f"{label}hyd:soc_gate[{c.id},t{t}]", tag="hyd:soc_gate")
            model.add_constraint(
                [groups["charge"][k, t], inv.h_hs[k]], [1.0, -1.0], "<=", 0.0,
                name=f"{label}hyd:charge_gate[{c.id},t{t}]",
                tag="hyd:charge_gate")
            model.add_constraint(
                [groups["discharge"][k, t], inv.h_hs[k]], [1.0, -1.0],
                "<=", 0.0,
                name=f"{label}hyd:discharge_gate[{c.id},t{t}]",
                tag="hyd:charge_gate")
            model.add_constraint(
                [groups["p2g_kg"][k, t], groups["p2g_mw"][k, t]],
                [1.0, -kg_per_mw_h], "=", 0.0,
                name=f"{label}hyd:p2g_conv[{c.id},t{t}]", tag="hyd:p2g_conv")
            # node balance: served = receipts + production + net discharge
            model.add_constraint(
                [gd, groups["receipt"][k, t], groups["p2g_kg"][k, t],
                 groups["discharge"][k, t], groups["charge"][k, t]],
                [1.0, -1.0, -1.0, -1.0, 1.0], "=", 0.0,
                name=f"{label}hyd:balance[{c.id},t{t}]", tag="hyd:balance")
            model.add_constraint(
                [groups["receipt"][k, t], inv.w_hy[k]],
                [1.0, -c.receipt_cap_kg_h], "<=", 0.0,
                name=f"{label}hyd:receipt_gate[{c.id},t{t}]",
                tag="hyd:receipt_gate")

    # network fulfilment floor: at least beta of the day's demand is served
    total_u = float(hourly_u.sum())
    model.add_constraint(
        groups["served"].ravel(), np.ones(nc * t_n), ">=",
        ec.beta * total_u,
        name=f"{label}hyd:fulfillment", tag="hyd:fulfillment")

    return groups


def build_pipeline(model: MilpModel, inst: Instance, inv: InvestmentVars,
                   hyd: dict, label: str = "") -> dict:
    """Candidate pipelines: gated secant pressure-drop, caps, cyclic
    linepack; ties pipe flows into the nodal receipt definitions."""
    t_n = inst.horizon
    n_p = len(inst.pipes)
    s_lo, s_hi = inst.pressure_sq_range
    pr_lo = math.sqrt(s_lo)
    h2_ids = [n.id for n in inst.h2_nodes]

    groups = {
        "flow_in": np.full((n_p, t_n), -1, dtype=np.int64),
        "flow_out": np.full((n_p, t_n), -1, dtype=np.int64),
        "linepack": np.full((n_p, t_n), -1, dtype=np.int64),
        "pressure_sq": np.full((len(h2_ids), t_n), -1, dtype=np.int64),
    }
    if n_p == 0:
        # still define receipts: with no pipes a candidate receives nothing
        for k in range(len(inst.candidates)):
            for t in range(t_n):
                model.add_constraint(
                    [hyd["receipt"][k, t]], [1.0], "=", 0.0,
                    name=f"{label}hyd:net_receipt[{inst.candidates[k].id},t{t}]",
                    tag="hyd:net_receipt")
        return groups

    for i, nid in enumerate(h2_ids):
        for t in range(t_n):
            groups["pressure_sq"][i, t] = model.add_variable(
                f"{label}pipe:s[{nid},t{t}]", s_lo, s_hi,
                tag="pipe:pressure_sq")

    nseg = inst.flow_segments
    for pk, pipe in enumerate(inst.pipes):
        if pipe.psi_kg_per_mpa * pr_lo > pipe.linepack_cap_kg + 1e-9:
            raise ValueError(
                f"pipe {pipe.id}: reference linepack exceeds its cap")
        f_bar = pipe.flow_cap_kg_h
        xs, slopes = secant_slopes(lambda g: g * g, f_bar, nseg)
        seg_ub = float(xs[1] - xs[0])
        a_i = h2_ids.index(pipe.a)
        b_i = h2_ids.index(pipe.b)
        big_m = pipe.phi * (s_hi - s_lo)
        for t in range(t_n):
            gin = model.add_variable(
                f"{label}pipe:gin[{pipe.id},t{t}]", tag="pipe:flow_in")
            gout = model.add_variable(
                f"{label}pipe:gout[{pipe.id},t{t}]", tag="pipe:flow_out")
            gavg = model.add_variable(
                f"{label}pipe:gavg[{pipe.id},t{t}]", 0.0, f_bar,
                tag="pipe:flow_avg")
            gsq = model.add_variable(
                f"{label}pipe:gsq[{pipe.id},t{t}]", 0.0, f_bar * f_bar,
                tag="pipe:flow_sq")
            lp = model.add_variable(
                f"{label}pipe:e[{pipe.id},t{t}]", tag="pipe:linepack")
            groups["flow_in"][pk, t] = gin
            groups["flow_out"][pk, t] = gout
            groups["linepack"][pk, t] = lp

            model.add_constraint(
                [gavg, gin, gout], [2.0, -1.0, -1.0], "=", 0.0,
                name=f"{label}pipe:flow_avg[{pipe.id},t{t}]",
                tag="pipe:flow_avg")
            segs = model.add_variables(
                f"{label}pipe:dg[{pipe.id},t{t}]", nseg, 0.0, seg_ub,
                tag="pipe:flow_seg_var")
            model.add_constraint(
                np.concatenate([[gavg], segs]),
                np.concatenate([[1.0], -np.ones(nseg)]), "=", 0.0,
                name=f"{label}pipe:flow_seg[{pipe.id},t{t}]",
                tag="pipe:flow_seg")
            model.add_constraint(
                np.concatenate([[gsq], segs]),
                np.concatenate([[1.0], -slopes]), "=", 0.0,
                name=f"{label}pipe:flow_sq[{pipe.id},t{t}]",
                tag="pipe:flow_seg")
            # pressure-square drop, active only when the pipe is built
            model.add_constraint(
                [gsq, groups["pressure_sq"][a_i, t],
                 groups["pressure_sq"][b_i, t], inv.w_pipe[pk]],
                [1.0, -pipe.phi, pipe.phi, big_m], "<=", big_m,
                name=f"{label}pipe:pressure_drop_hi[{pipe.id},t{t}]",
                tag="pipe:pressure_drop")
            model.add_constraint(
                [gsq, groups["pressure_sq"][a_i, t],
                 groups["pressure_sq"][b_i, t], inv.w_pipe[pk]],
                [1.0, -pipe.phi, pipe.phi, -big_m], ">=", -big_m,
                name=f"{label}pipe:pressure_drop_lo[{pipe.id},t{t}]",
                tag="pipe:pressure_drop")
            for col, what in ((gin, "in"), (gout, "out")):
                model.add_constraint(
                    [col, inv.w_pipe[pk]], [1.0, -f_bar], "<=", 0.0,
                    name=f"{label}pipe:flow_gate_{what}[{pipe.id},t{t}]",
                    tag="pipe:flow_gate")
            model.add_constraint(
                [lp, inv.w_pipe[pk]], [1.0, -pipe.linepack_cap_kg],
                "<=", 0.0,
                name=f"{label}pipe:linepack_gate[{pipe.id},t{t}]",
                tag="pipe:linepack_gate")
        for t in range(t_n):
            # cyclic mass accounting; the boundary state is pinned to the
            # reference fill so a day's sends and deliveries net out
            model.add_constraint(
                [groups["linepack"][pk, t],
                 groups["linepack"][pk, (t - 1) % t_n],
                 groups["flow_in"][pk, t], groups["flow_out"][pk, t]],
                [1.0, -1.0, -1.0, 1.0], "=", 0.0,
                name=f"{label}pipe:linepack_dyn[{pipe.id},t{t}]",
                tag="pipe:linepack_dyn")
        model.add_constraint(
            [groups["linepack"][pk, t_n - 1], inv.w_pipe[pk]],
            [1.0, -pipe.psi_kg_per_mpa * pr_lo], "=", 0.0,
            name=f"{label}pipe:linepack_init[{pipe.id}]",
            tag="pipe:linepack_init")

    # receipts: net pipeline inflow at candidates, net outflow at sources
    for k, c in enumerate(inst.candidates):
        for t in range(t_n):
            cols = [hyd["receipt"][k, t]]
            vals = [1.0]
            for pk, pipe in enumerate(inst.pipes):
                if pipe.b == c.id:
                    cols.append(groups["flow_out"][pk, t])
                    vals.append(-1.0)
                if pipe.a == c.id:
                    cols.append(groups["flow_in"][pk, t])
                    vals.append(1.0)
            model.add_constraint(
                cols, vals, "=", 0.0,
                name=f"{label}hyd:net_receipt[{c.id},t{t}]",
                tag="hyd:net_receipt")
    for s_k, s in enumerate(inst.sources):
        for t in range(t_n):
            cols = [hyd["src_purchase"][s_k, t]]
            vals = [1.0]
            for pk, pipe in enumerate(inst.pipes):
                if pipe.a == s.id:
                    cols.append(groups["flow_in"][pk, t])
                    vals.append(-1.0)
                if pipe.b == s.id:
                    cols.append(groups["flow_out"][pk, t])
                    vals.append(1.0)
            model.add_constraint(
                cols, vals, "=", 0.0,
                name=f"{label}hyd:src_balance[{s.id},t{t}]",
                tag="hyd:balance")
    return groups


def build_power(model: MilpModel, inst: Instance, hyd: dict,
                label: str = "") -> dict:
    """DC power layer: system balance, line sensitivities, purchase,
    shedding and PV curtailment; electrolyzer consumption capped by the
    installed capacity."""
    pw = inst.power
    t_n = inst.horizon
    nb = len(pw.buses)
    bus_of = {b: i for i, b in enumerate(pw.buses)}
    cands = inst.candidates
    cand_bus = np.array([bus_of[c.bus] for c in cands], dtype=np.int64)

    groups = {
        "grid_mw": np.empty(t_n, dtype=np.int64),
        "shed": np.empty((nb, t_n), dtype=np.int64),
        "curtail": np.empty((len(pw.pv), t_n), dtype=np.int64),
    }
    for t in range(t_n):
        groups["grid_mw"][t] = model.add_variable(
            f"{label}pwr:pm[t{t}]", 0.0, pw.purchase_cap_mw,
            tag="pwr:purchase")
        for i, b in enumerate(pw.buses):
            groups["shed"][i, t] = model.add_variable(
                f"{label}pwr:psh[{b},t{t}]", 0.0, float(pw.loads[i, t]),
                tag="pwr:shed")
        for g, plant in enumerate(pw.pv):
            groups["curtail"][g, t] = model.add_variable(
                f"{label}pwr:cur[{plant.bus},t{t}]", 0.0,
                float(plant.avail_mw[t]), tag="pwr:curtail")

    for t in range(t_n):
        # system balance: purchase + pv - curtail + shed = load + p2g
        cols = [groups["grid_mw"][t]]
        vals = [1.0]
        rhs = float(pw.loads[:, t].sum())
        for g, plant in enumerate(pw.pv):
            rhs -= float(plant.avail_mw[t])
            cols.append(groups["curtail"][g, t])
            vals.append(-1.0)
        for i in range(nb):
            cols.append(groups["shed"][i, t])
            vals.append(1.0)
        for k in range(len(cands)):
            cols.append(hyd["p2g_mw"][k, t])
            vals.append(-1.0)
        model.add_constraint(
            cols, vals, "=", rhs,
            name=f"{label}pwr:balance[t{t}]", tag="pwr:balance")

        for line in pw.lines:
            # flow = sum_i ptdf_i * injection_i; purchase enters at the
            # slack whose sensitivity is zero by construction
            cols, vals = [], []
            const = 0.0
            for i in range(nb):
                s = float(line.ptdf[i])
                if s == 0.0:
                    continue
                const += s * (-float(pw.loads[i, t]))
                cols.append(groups["shed"][i, t])
                vals.append(s)
            for g, plant in enumerate(pw.pv):
                s = float(line.ptdf[bus_of[plant.bus]])
                if s == 0.0:
                    continue
                const += s * float(plant.avail_mw[t])
                cols.append(groups["curtail"][g, t])
                vals.append(-s)
            for k in range(len(cands)):
                s = float(line.ptdf[cand_bus[k]])
                if s == 0.0:
                    continue
                cols.append(hyd["p2g_mw"][k, t])
                vals.append(-s)
            if not cols:
                continue
            model.add_constraint(
                cols, vals, "<=", line.cap_mw - const,
                name=f"{label}pwr:line_flow_hi[{line.id},t{t}]",
                tag="pwr:line_flow")
            model.add_constraint(
                cols, vals, ">=", -line.cap_mw - const,
                name=f"{label}pwr:line_flow_lo[{line.id},t{t}]",
                tag="pwr:line_flow")

    return groups


def _p2g_cap_rows(model: MilpModel, inst: Instance, hyd: dict,
                  inv: InvestmentVars, label: str) -> None:
    for k, c in enumerate(inst.candidates):
        for t in range(inst.horizon):
            model.add_constraint(
                [hyd["p2g_mw"][k, t], inv.h_p2g[k]], [1.0, -1.0], "<=", 0.0,
                name=f"{label}pwr:p2g_cap[{c.id},t{t}]", tag="pwr:p2g_cap")


# -------------------------------------------------------------------- dispatch

@dataclass
class DispatchBlock:
    """One scenario's second stage: column groups plus cost expressions."""

    label: str
    cost_cols: np.ndarray
    cost_coefs: np.ndarray
    categories: dict = field(default_factory=dict)
    groups: dict = field(default_factory=dict)

    def category_value(self, name: str, x: np.ndarray) -> float:
        cols, coefs = self.categories[name]
        return float(np.dot(x[cols], coefs)) if cols.size else 0.0

    def cost_value(self, x: np.ndarray) -> float:
        return float(np.dot(x[self.cost_cols], self.cost_coefs))


def build_dispatch(model: MilpModel, inst: Instance, daily: np.ndarray,
                   inv: InvestmentVars, label: str = "") -> DispatchBlock:
    """Build one scenario's full second stage.

    ``daily`` is the per-candidate realized daily demand (kg). The
    returned block's cost expression is the scenario's daily operating
    cost in dollars (not yet annualized).
    """
    ec = inst.econ
    cands = inst.candidates
    hourly_u = np.stack([
        hourly_station_demand(float(d), inst.trip_profile) for d in daily
    ]) if len(cands) else np.zeros((0, inst.horizon))
    req = inst.capture_requirement(daily)

    tv = build_traffic(model, inst, req=req, label=label)
    delay = build_bpr_delay(model, inst, tv, label=label)
    hyd = build_hydrogen(model, inst, hourly_u, inv, label=label)
    pipes = build_pipeline(model, inst, inv, hyd, label=label)
    power = build_power(model, inst, hyd, label=label)
    _p2g_cap_rows(model, inst, hyd, inv, label)

    price_h2 = [s.purchase_price for s in inst.sources]
    categories: dict[str, tuple[np.ndarray, np.ndarray]] = {}

    def cat(name, cols, coefs):
        cols = np.asarray(cols, dtype=np.int64).ravel()
        coefs = np.asarray(coefs, dtype=np.float64).ravel()
        categories[name] = (cols, coefs)

    src_cols = hyd["src_purchase"].ravel()
    src_coefs = np.concatenate([p for p in price_h2]) if price_h2 else np.empty(0)
    cat("h2_purchase", src_cols, src_coefs)
    cat("h2_unserved", hyd["unserved"].ravel(),
        np.full(hyd["unserved"].size, ec.unserved_h2_cost))
    dcols = delay[delay >= 0]
    cat("congestion", dcols,
        np.full(dcols.size, ec.congestion_cost_per_min))
    cur_cols = power["curtail"].ravel()
    cur_coefs = np.concatenate([
        np.full(inst.horizon, p.curtail_cost) for p in inst.power.pv
    ]) if inst.power.pv else np.empty(0)
    cat("pv_curtail", cur_cols, cur_coefs)
    cat("elec_purchase", power["grid_mw"],
        inst.power.price_per_mwh.astype(float))
    cat("elec_unserved", power["shed"].ravel(),
        np.full(power["shed"].size, inst.power.unserved_cost))

    cost_cols = np.concatenate([c for c, _ in categories.values()])
    cost_coefs = np.concatenate([v for _, v in categories.values()])

    groups = {"delay": delay, "capture": tv.capture,
              "link_flow": tv.link_flow}
    groups.update(hyd)
    groups.update({f"pipe_{k}": v for k, v in pipes.items()})
    groups.update({f"pwr_{k}": v for k, v in power.items()})

    return DispatchBlock(label=label, cost_cols=cost_cols,
                         cost_coefs=cost_coefs, categories=categories,
                         groups=groups)
