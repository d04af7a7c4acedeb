"""Coupled network data model: road traffic, hydrogen, and power layers.

An :class:`Instance` is loaded from a YAML document and validated eagerly so
that model builders can assume a consistent object graph:

* road network: nodes, directed links (free-flow time, BPR capacity, hard
  cap), OD pairs with enumerated simple paths, one shared hourly trip
  profile;
* hydrogen layer: candidate station nodes (each tied to a road node and a
  power bus, with a finite daily-demand support and two per-level
  probability vectors — base and invested) and source nodes (hourly
  purchase price and cap); candidate pipelines between hydrogen nodes,
  validated to form a forest (radial network);
* power layer: buses, PTDF-monitored lines (sensitivities either given or
  derived from reactances), hourly loads, PV profiles, grid purchase price
  and caps.

Physics helpers live here too: the pipeline pressure-drop constant and
linepack constant from diameter/length, the BPR congestion-delay secant
slopes, and the demand disaggregation used to turn a daily scenario level
into hourly station demand.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
import yaml

__all__ = [
    "Instance", "RoadLink", "ODPair", "RoadPath", "HydrogenNode", "Pipe",
    "PowerLine", "PVPlant", "PowerGrid", "Economics",
    "load_instance", "instance_path", "weymouth_constant",
    "linepack_constant", "bpr_secant_slopes", "compute_ptdf",
    "hourly_station_demand",
]

GAS_CONSTANT = 8.314      # J/(mol K)
H2_MOLAR_KG = 2.016e-3    # kg/mol


# --------------------------------------------------------------------- physics

def weymouth_constant(
    diameter_m: float,
    length_m: float,
    efficiency: float = 0.9,
    density: float = 0.0852,
    compressibility: float = 1.0,
    temperature_k: float = 288.0,
) -> float:
    """Pressure-drop constant phi of a pipe: flow^2 = phi * (ps^2 - pe^2).

    phi = eta * pi^2 * D^5 / (16 * rho^2 * Z * R_s * T * L * f), with the
    hydraulic friction factor f = 4 * (20.621 * D^(1/6))^(-2) and the
    specific gas constant R_s = R / M_H2.
    """
    if diameter_m <= 0 or length_m <= 0:
        raise ValueError("diameter and length must be positive")
    friction = 4.0 * (20.621 * diameter_m ** (1.0 / 6.0)) ** -2
    r_specific = GAS_CONSTANT / H2_MOLAR_KG
    return (
        efficiency * math.pi**2 * diameter_m**5
        / (16.0 * density**2 * compressibility * r_specific
           * temperature_k * length_m * friction)
    )


def linepack_constant(
    diameter_m: float,
    length_m: float,
    density: float = 0.0852,
    compressibility: float = 1.0,
    temperature_k: float = 288.0,
) -> float:
    """Linepack mass per unit pressure: psi = pi * D^2 * L / (4 rho Z R_s T)."""
    if diameter_m <= 0 or length_m <= 0:
        raise ValueError("diameter and length must be positive")
    r_specific = GAS_CONSTANT / H2_MOLAR_KG
    return (
        math.pi * diameter_m**2 * length_m
        / (4.0 * density * compressibility * r_specific * temperature_k)
    )


def bpr_secant_slopes(t0_minutes: float, capacity: float, x_max: float,
                      segments: int) -> tuple[np.ndarray, np.ndarray]:
    """Secant slopes of the BPR congestion-delay term over [0, x_max].

    The delay term is d(x) = 0.15 * t0 * x^5 / C^4 (vehicle-minutes per
    hour). Returns (breakpoints, slopes); slopes are nondecreasing because
    d is convex, which is what lets the incremental formulation skip
    ordering binaries under minimization.
    """
    if segments < 1:
        raise ValueError("need at least one segment")
    xs = np.linspace(0.0, x_max, segments + 1)
    vals = 0.15 * t0_minutes * xs**5 / capacity**4
    slopes = np.diff(vals) / np.diff(xs)
    return xs, slopes


def secant_slopes(fn, x_max: float, segments: int) -> tuple[np.ndarray, np.ndarray]:
    """Generic secant decomposition of a convex fn over [0, x_max]."""
    xs = np.linspace(0.0, x_max, segments + 1)
    vals = np.array([fn(x) for x in xs])
    slopes = np.diff(vals) / np.diff(xs)
    return xs, slopes


def compute_ptdf(n_buses: int, from_bus: np.ndarray, to_bus: np.ndarray,
                 reactance: np.ndarray, slack: int) -> np.ndarray:
    """Power transfer distribution factors of a connected DC network.

    Standard construction: line flows = diag(1/x) * A * theta with
    B = A' diag(1/x) A; the slack bus row/column is removed before the
    solve and its sensitivity is zero by construction.
    """
    n_lines = from_bus.shape[0]
    a = np.zeros((n_lines, n_buses))
    a[np.arange(n_lines), from_bus] = 1.0
    a[np.arange(n_lines), to_bus] = -1.0
    binv = np.diag(1.0 / reactance)
    bbus = a.T @ binv @ a
    keep = [b for b in range(n_buses) if b != slack]
    red = bbus[np.ix_(keep, keep)]
    rhs = (binv @ a)[:, keep]
    ptdf = np.zeros((n_lines, n_buses))
    ptdf[:, keep] = rhs @ np.linalg.inv(red)
    return ptdf


def hourly_station_demand(daily_kg: float, trip_profile: np.ndarray) -> np.ndarray:
    """Disaggregate a daily station total (kg) along the trip profile."""
    total = float(trip_profile.sum())
    if total <= 0:
        raise ValueError("trip profile must have positive mass")
    return daily_kg * trip_profile / total


# ------------------------------------------------------------------- dataclasses

@dataclass
class RoadLink:
    id: str
    a: str
    b: str
    t0_minutes: float
    capacity: float
    x_max: float


@dataclass
class RoadPath:
    id: str
    od: str
    link_ids: list[str]
    link_idx: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    candidate_idx: list[int] = field(default_factory=list)


@dataclass
class ODPair:
    id: str
    origin: str
    destination: str
    trips_hfcv: float
    trips_other: float
    path_ids: list[str]


@dataclass
class HydrogenNode:
    id: str
    kind: str                       # "candidate" | "source"
    road_node: str | None
    bus: str | None
    demand_levels: np.ndarray       # daily kg, strictly increasing (candidates)
    prob_base: np.ndarray
    prob_invested: np.ndarray
    receipt_cap_kg_h: float
    purchase_price: np.ndarray      # $(kg), hourly (sources; empty otherwise)
    hrs_cap_range: tuple[float, float]
    storage_cap_range: tuple[float, float]
    p2g_cap_range: tuple[float, float]


@dataclass
class Pipe:
    id: str
    a: str                          # upstream hydrogen node (predetermined direction)
    b: str
    flow_cap_kg_h: float
    phi: float                      # kg^2/h^2 per MPa^2 pressure-square drop
    psi_kg_per_mpa: float           # linepack kg per MPa of reference pressure
    linepack_cap_kg: float
    capital_cost: float


@dataclass
class PowerLine:
    id: str
    cap_mw: float
    ptdf: np.ndarray                # per-bus injection sensitivity


@dataclass
class PVPlant:
    bus: str
    avail_mw: np.ndarray            # hourly forecast
    curtail_cost: float


@dataclass
class PowerGrid:
    buses: list[str]
    lines: list[PowerLine]
    loads: np.ndarray               # (n_buses, T)
    pv: list[PVPlant]
    purchase_cap_mw: float
    price_per_mwh: np.ndarray       # hourly
    unserved_cost: float


@dataclass
class Economics:
    days_per_year: float
    beta: float
    hrs_capex_per_kg: float
    storage_capex_per_kg: float
    p2g_capex_per_mw: float
    budget: float
    unserved_h2_cost: float
    congestion_cost_per_min: float
    pv_curtail_cost: float
    eta_charge: float
    eta_discharge: float
    eta_p2g: float
    kg_per_mw: float
    annual_demand_kg: float


@dataclass
class Instance:
    name: str
    horizon: int
    road_nodes: list[str]
    links: list[RoadLink]
    ods: list[ODPair]
    paths: list[RoadPath]
    hourly_profile: np.ndarray      # (T,) shared OD trip scaling
    trip_profile: np.ndarray        # (T,) refuelling arrival profile
    delay_segments: int
    flow_segments: int
    h2_nodes: list[HydrogenNode]
    pipes: list[Pipe]
    pressure_sq_range: tuple[float, float]   # MPa^2
    power: PowerGrid
    econ: Economics

    # ---- derived access ---------------------------------------------------

    @property
    def candidates(self) -> list[HydrogenNode]:
        return [n for n in self.h2_nodes if n.kind == "candidate"]

    @property
    def sources(self) -> list[HydrogenNode]:
        return [n for n in self.h2_nodes if n.kind == "source"]

    @property
    def n_scenarios(self) -> int:
        out = 1
        for n in self.candidates:
            out *= len(n.demand_levels)
        return out

    def h2_index(self, node_id: str) -> int:
        for k, n in enumerate(self.h2_nodes):
            if n.id == node_id:
                return k
        raise KeyError(node_id)

    def total_hfcv_trips(self) -> np.ndarray:
        """Network HFCV trips per hour, Q_t."""
        base = sum(od.trips_hfcv for od in self.ods)
        return base * self.hourly_profile

    def kg_per_vehicle(self) -> np.ndarray:
        """Refuelling mass per captured vehicle, per hour (0 where no trips).

        gamma_t = (G_d / D) * f_t with G_d the nominal daily network demand,
        D = sum_t f_t * Q_t, so that a station capturing all of hour t's
        arrivals supplies exactly its share of G_d.
        """
        q = self.total_hfcv_trips()
        f = self.trip_profile
        d = float(np.dot(f, q))
        if d <= 0:
            raise ValueError("degenerate trip/demand profiles")
        g_daily = self.econ.annual_demand_kg / self.econ.days_per_year
        return g_daily / d * f

    def capture_requirement(self, daily_levels: np.ndarray) -> np.ndarray:
        """Vehicles/hour each candidate must capture for given daily demands.

        Hour-invariant because hourly demand and gamma share the same trip
        profile: u_{i,t} / gamma_t = daily_i * D / (sum_f * G_d).
        """
        f = self.trip_profile
        g_daily = self.econ.annual_demand_kg / self.econ.days_per_year
        d = float(np.dot(f, self.total_hfcv_trips()))
        return np.asarray(daily_levels, dtype=float) * d / (float(f.sum()) * g_daily)

    def uniform_scaling_ok(self) -> bool:
        """True if link hard caps can never bind, making the screening LP's
        feasibility monotone in the hourly scale (screen min-profile hour only)."""
        peak = (sum(od.trips_hfcv + od.trips_other for od in self.ods)
                * float(self.hourly_profile.max()))
        return all(l.x_max >= peak - 1e-9 for l in self.links)

    def support_diameter(self) -> float:
        """1-norm diameter of the scenario support (kg of daily totals)."""
        return float(sum(n.demand_levels.max() - n.demand_levels.min()
                         for n in self.candidates))


# ----------------------------------------------------------------------- loader

def instance_path(name: str) -> str:
    """Resolve a packaged instance name to its YAML path."""
    pkg = resources.files("ddu_planner") / "instances" / f"{name}.yaml"
    return str(pkg)


def _req(d: dict, key: str, ctx: str):
    if key not in d:
        raise ValueError(f"{ctx}: missing required key {key!r}")
    return d[key]


def _arr(x, t: int, ctx: str) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.shape != (t,):
        raise ValueError(f"{ctx}: expected {t} hourly values, got shape {a.shape}")
    return a


def load_instance(src: str) -> Instance:
    """Load and validate an instance from a YAML path or packaged name."""
    path = src if src.endswith((".yaml", ".yml")) else instance_path(src)
    with open(path) as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict):
        raise ValueError("instance file must contain a mapping")

    name = _req(doc, "name", "instance")
    t = int(doc.get("horizon_hours", 24))
    if t < 1:
        raise ValueError("horizon_hours must be >= 1")

    tr = _req(doc, "traffic", "instance")
    road_nodes = list(_req(tr, "nodes", "traffic"))
    links = [
        RoadLink(
            id=str(_req(l, "id", "link")),
            a=str(_req(l, "from", "link")),
            b=str(_req(l, "to", "link")),
            t0_minutes=float(_req(l, "t0_minutes", "link")),
            capacity=float(_req(l, "capacity", "link")),
            x_max=float(_req(l, "x_max", "link")),
        )
        for l in _req(tr, "links", "traffic")
    ]
    link_by_id = {l.id: k for k, l in enumerate(links)}
    if len(link_by_id) != len(links):
        raise ValueError("duplicate link ids")
    for l in links:
        if l.a not in road_nodes or l.b not in road_nodes:
            raise ValueError(f"link {l.id}: unknown endpoint")
        if min(l.t0_minutes, l.capacity, l.x_max) <= 0:
            raise ValueError(f"link {l.id}: t0/capacity/x_max must be positive")

    ods: list[ODPair] = []
    paths: list[RoadPath] = []
    for o in _req(tr, "od_pairs", "traffic"):
        oid = str(_req(o, "id", "od"))
        pids = []
        for p in _req(o, "paths", f"od {oid}"):
            pid = str(_req(p, "id", "path"))
            lids = [str(x) for x in _req(p, "links", f"path {pid}")]
            paths.append(RoadPath(id=pid, od=oid, link_ids=lids))
            pids.append(pid)
        ods.append(ODPair(
            id=oid,
            origin=str(_req(o, "origin", "od")),
            destination=str(_req(o, "destination", "od")),
            trips_hfcv=float(_req(o, "trips_hfcv", "od")),
            trips_other=float(_req(o, "trips_other", "od")),
            path_ids=pids,
        ))
    if len({p.id for p in paths}) != len(paths):
        raise ValueError("duplicate path ids")
    od_by_id = {o.id: o for o in ods}
    for p in paths:
        o = od_by_id[p.od]
        chain = [link_by_id.get(lid) for lid in p.link_ids]
        if any(c is None for c in chain):
            raise ValueError(f"path {p.id}: unknown link")
        p.link_idx = np.array(chain, dtype=np.int64)
        node = o.origin
        for k in chain:
            if links[k].a != node:
                raise ValueError(f"path {p.id}: links do not chain from origin")
            node = links[k].b
        if node != o.destination:
            raise ValueError(f"path {p.id}: does not end at destination")

    hourly_profile = _arr(_req(tr, "hourly_profile", "traffic"), t, "hourly_profile")
    if hourly_profile.min() <= 0:
        raise ValueError("hourly_profile entries must be positive")
    delay_segments = int(tr.get("delay_segments", 20))
    if delay_segments < 1:
        raise ValueError("delay_segments must be >= 1")

    hy = _req(doc, "hydrogen", "instance")
    trip_profile = _arr(_req(hy, "trip_profile", "hydrogen"), t, "trip_profile")
    if trip_profile.min() < 0 or trip_profile.max() <= 0:
        raise ValueError("trip_profile must be nonnegative with positive mass")
    nodes: list[HydrogenNode] = []
    for nd in _req(hy, "nodes", "hydrogen"):
        nid = str(_req(nd, "id", "h2 node"))
        kind = str(_req(nd, "kind", f"h2 node {nid}"))
        if kind not in ("candidate", "source"):
            raise ValueError(f"h2 node {nid}: bad kind {kind!r}")
        if kind == "candidate":
            levels = np.asarray(_req(nd, "demand_levels", nid), dtype=float)
            p0 = np.asarray(_req(nd, "prob_base", nid), dtype=float)
            p1 = np.asarray(_req(nd, "prob_invested", nid), dtype=float)
            if levels.ndim != 1 or levels.size < 2:
                raise ValueError(f"{nid}: need at least two demand levels")
            if np.any(np.diff(levels) <= 0):
                raise ValueError(f"{nid}: demand levels must be strictly increasing")
            if levels.min() < 0:
                raise ValueError(f"{nid}: demand levels must be nonnegative")
            for tag, p in (("prob_base", p0), ("prob_invested", p1)):
                if p.shape != levels.shape:
                    raise ValueError(f"{nid}: {tag} length mismatch")
                if p.min() < 0 or abs(p.sum() - 1.0) > 1e-9:
                    raise ValueError(f"{nid}: {tag} must be a distribution")
            # level-wise probability ratios divide by the base vector, so a
            # base entry below 1e-6 is rejected rather than silently inverted;
            # zero-probability levels must be removed from the support.
            if p0.min() < 1e-6:
                raise ValueError(f"{nid}: prob_base entries must be >= 1e-6")
            if p1[0] > p0[0] + 1e-12 or p1[-1] < p0[-1] - 1e-12:
                raise ValueError(
                    f"{nid}: investing must not raise the lowest level's "
                    "probability nor lower the highest level's probability")
            node = HydrogenNode(
                id=nid, kind=kind,
                road_node=str(_req(nd, "road_node", nid)),
                bus=str(_req(nd, "bus", nid)),
                demand_levels=levels, prob_base=p0, prob_invested=p1,
                receipt_cap_kg_h=float(_req(nd, "receipt_cap_kg_h", nid)),
                purchase_price=np.empty(0),
                hrs_cap_range=tuple(float(v) for v in _req(nd, "hrs_cap_range", nid)),
                storage_cap_range=tuple(float(v) for v in _req(nd, "storage_cap_range", nid)),
                p2g_cap_range=tuple(float(v) for v in _req(nd, "p2g_cap_range", nid)),
            )
            if node.road_node not in road_nodes:
                raise ValueError(f"{nid}: unknown road node")
            for rng_name in ("hrs_cap_range", "storage_cap_range", "p2g_cap_range"):
                lo, hi = getattr(node, rng_name)
                if not (0 <= lo <= hi):
                    raise ValueError(f"{nid}: bad {rng_name}")
        else:
            node = HydrogenNode(
                id=nid, kind=kind, road_node=None,
                bus=str(nd["bus"]) if "bus" in nd else None,
                demand_levels=np.empty(0), prob_base=np.empty(0),
                prob_invested=np.empty(0),
                receipt_cap_kg_h=float(_req(nd, "purchase_cap_kg_h", nid)),
                purchase_price=_arr(_req(nd, "price_per_kg", nid), t, f"{nid} price"),
                hrs_cap_range=(0.0, 0.0), storage_cap_range=(0.0, 0.0),
                p2g_cap_range=(0.0, 0.0),
            )
        nodes.append(node)
    if len({n.id for n in nodes}) != len(nodes):
        raise ValueError("duplicate hydrogen node ids")
    if not any(n.kind == "candidate" for n in nodes):
        raise ValueError("need at least one candidate node")
    if not any(n.kind == "source" for n in nodes):
        raise ValueError("need at least one source node")

    h2_ids = {n.id for n in nodes}
    pipes: list[Pipe] = []
    for pd in hy.get("pipes", []):
        pid = str(_req(pd, "id", "pipe"))
        if "phi" in pd:
            phi = float(pd["phi"])
            psi = float(_req(pd, "psi_kg_per_mpa", pid))
        else:
            dia = float(_req(pd, "diameter_m", pid))
            length = float(_req(pd, "length_m", pid))
            phi = weymouth_constant(dia, length) * 1e12  # (kg/h per Pa) -> per MPa^2
            psi = linepack_constant(dia, length) * 1e6
        pipes.append(Pipe(
            id=pid,
            a=str(_req(pd, "from", pid)),
            b=str(_req(pd, "to", pid)),
            flow_cap_kg_h=float(_req(pd, "flow_cap_kg_h", pid)),
            phi=phi,
            psi_kg_per_mpa=psi,
            linepack_cap_kg=float(_req(pd, "linepack_cap_kg", pid)),
            capital_cost=float(_req(pd, "capital_cost", pid)),
        ))
    if len({p.id for p in pipes}) != len(pipes):
        raise ValueError("duplicate pipe ids")
    adj: dict[str, list[str]] = {}
    for p in pipes:
        if p.a not in h2_ids or p.b not in h2_ids:
            raise ValueError(f"pipe {p.id}: unknown endpoint")
        if p.a == p.b:
            raise ValueError(f"pipe {p.id}: self loop")
        adj.setdefault(p.a, []).append(p.b)
        adj.setdefault(p.b, []).append(p.a)
    # the candidate pipe set must be a forest: |edges| < |touched nodes| per component
    seen: set[str] = set()
    for start in sorted(adj):
        if start in seen:
            continue
        comp_nodes, comp_edges = 0, 0
        stack = [start]
        comp = set()
        while stack:
            u = stack.pop()
            if u in comp:
                continue
            comp.add(u)
            comp_nodes += 1
            comp_edges += len(adj.get(u, []))
            stack.extend(adj.get(u, []))
        seen |= comp
        if comp_edges // 2 >= comp_nodes:
            raise ValueError("candidate pipeline set contains a cycle")

    plo, phi_mpa = (float(v) for v in _req(hy, "pressure_range_mpa", "hydrogen"))
    if not (0 < plo < phi_mpa):
        raise ValueError("bad pressure range")

    pw = _req(doc, "power", "instance")
    buses = list(_req(pw, "buses", "power"))
    bus_idx = {b: k for k, b in enumerate(buses)}
    raw_lines = _req(pw, "lines", "power")
    lines: list[PowerLine] = []
    if raw_lines and all("reactance" in l for l in raw_lines):
        fb = np.array([bus_idx[str(l["from"])] for l in raw_lines], dtype=np.int64)
        tb = np.array([bus_idx[str(l["to"])] for l in raw_lines], dtype=np.int64)
        x = np.array([float(l["reactance"]) for l in raw_lines])
        slack = bus_idx[str(pw.get("slack_bus", buses[0]))]
        ptdf = compute_ptdf(len(buses), fb, tb, x, slack)
        for k, l in enumerate(raw_lines):
            lines.append(PowerLine(str(l["id"]), float(l["cap_mw"]), ptdf[k]))
    else:
        for l in raw_lines:
            vec = np.zeros(len(buses))
            for b, v in _req(l, "ptdf", "line").items():
                vec[bus_idx[str(b)]] = float(v)
            lines.append(PowerLine(str(l["id"]), float(l["cap_mw"]), vec))
    loads = np.zeros((len(buses), t))
    for b, series in _req(pw, "loads", "power").items():
        loads[bus_idx[str(b)]] = _arr(series, t, f"load {b}")
    pv = [
        PVPlant(str(_req(p, "bus", "pv")),
                _arr(_req(p, "avail_mw", "pv"), t, "pv"),
                float(_req(p, "curtail_cost", "pv")))
        for p in pw.get("pv", [])
    ]
    for p in pv:
        if p.bus not in bus_idx:
            raise ValueError(f"pv at unknown bus {p.bus}")
    power = PowerGrid(
        buses=buses, lines=lines, loads=loads, pv=pv,
        purchase_cap_mw=float(_req(pw, "purchase_cap_mw", "power")),
        price_per_mwh=_arr(_req(pw, "price_per_mwh", "power"), t, "power price"),
        unserved_cost=float(_req(pw, "unserved_cost", "power")),
    )
    for n in nodes:
        if n.bus is not None and n.bus not in bus_idx:
            raise ValueError(f"h2 node {n.id}: unknown bus {n.bus}")

    ec = _req(doc, "economics", "instance")
    econ = Economics(
        days_per_year=float(ec.get("days_per_year", 365.0)),
        beta=float(ec.get("beta", 0.5)),
        hrs_capex_per_kg=float(_req(ec, "hrs_capex_per_kg", "economics")),
        storage_capex_per_kg=float(_req(ec, "storage_capex_per_kg", "economics")),
        p2g_capex_per_mw=float(_req(ec, "p2g_capex_per_mw", "economics")),
        budget=float(ec.get("budget", math.inf)),
        unserved_h2_cost=float(_req(ec, "unserved_h2_cost", "economics")),
        congestion_cost_per_min=float(_req(ec, "congestion_cost_per_min", "economics")),
        pv_curtail_cost=float(ec.get("pv_curtail_cost", 0.0)),
        eta_charge=float(ec.get("eta_charge", 0.8)),
        eta_discharge=float(ec.get("eta_discharge", 0.8)),
        eta_p2g=float(_req(ec, "eta_p2g", "economics")),
        kg_per_mw=float(_req(ec, "kg_per_mw", "economics")),
        annual_demand_kg=float(_req(ec, "annual_demand_kg", "economics")),
    )
    if not (0.0 <= econ.beta <= 1.0):
        raise ValueError("beta must lie in [0, 1]")

    inst = Instance(
        name=str(name), horizon=t, road_nodes=road_nodes, links=links,
        ods=ods, paths=paths, hourly_profile=hourly_profile,
        trip_profile=trip_profile, delay_segments=delay_segments,
        flow_segments=int(hy.get("flow_segments", 20)),
        h2_nodes=nodes, pipes=pipes,
        pressure_sq_range=(plo**2, phi_mpa**2),
        power=power, econ=econ,
    )

    # resolve candidate stations onto paths (which stations a path passes)
    cand_road = {n.road_node: k for k, n in enumerate(inst.h2_nodes)
                 if n.kind == "candidate"}
    for p in inst.paths:
        o = od_by_id[p.od]
        visited = [o.origin] + [links[k].b for k in p.link_idx]
        p.candidate_idx = sorted({cand_road[v] for v in visited if v in cand_road})

    return inst
