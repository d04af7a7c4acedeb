"""Finite scenario support: enumeration, decision-dependent probabilities,
probability-shaping rows, feasibility screening and box bundling.

The uncertain object is the vector of daily station demands. Each candidate
node draws one of its demand levels independently; investing at a node swaps
that node's marginal from its base vector to its invested vector. Scenarios
are enumerated lexicographically (last node's level varies fastest), and a
scenario's probability under a build pattern ``w`` is the product of the
selected marginals.

``build_shaping`` emits the linear rows that let a MILP carry those
decision-dependent probabilities: one chain of partial-product variables per
scenario, advanced node by node, where an invested node multiplies the chain
by its level's probability ratio and an uninvested node passes it through.
Both moves are upper bounds; the per-stage normalization row pins every
chain to its exact value whenever ``w`` is binary (the caps sum to one, so
no chain can fall below its cap without pushing another above its own).

``screen_feasible`` solves one small traffic LP per scenario to decide
whether its capture floors are road-feasible at all. Infeasible scenarios
keep their probability mass but are treated as inert by the robust layer
(pinned zero outcome). ``bundle_scenarios`` covers the infeasible set with
axis-aligned boxes (greedy, most-stars-first); a box's mass under any
product measure is again a product, which is what keeps the bundled
formulation exact.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .dispatch import build_traffic
from .milp import MilpModel, solve_lp
from .network import Instance

__all__ = [
    "ScenarioSupport",
    "Bundle",
    "ShapingBlock",
    "singleton_bundles",
    "shaped_distribution",
    "unit_mass",
    "build_shaping",
    "screen_feasible",
    "bundle_scenarios",
]

DISTANCE_MATRIX_LIMIT = 1024


class ScenarioSupport:
    """Product support of the candidate nodes' daily demand levels."""

    def __init__(self, inst: Instance) -> None:
        cands = inst.candidates
        self.node_ids: tuple[str, ...] = tuple(c.id for c in cands)
        self.levels: list[np.ndarray] = [c.demand_levels for c in cands]
        self.p0: list[np.ndarray] = [c.prob_base for c in cands]
        self.p1: list[np.ndarray] = [c.prob_invested for c in cands]
        self.shape: tuple[int, ...] = tuple(len(v) for v in self.levels)
        self.n_nodes = len(cands)
        self.n_scenarios = int(np.prod(self.shape)) if self.n_nodes else 1
        self.tuples = np.array(list(np.ndindex(*self.shape)), dtype=np.int64)
        self.daily = np.column_stack([
            self.levels[i][self.tuples[:, i]] for i in range(self.n_nodes)
        ]) if self.n_nodes else np.zeros((1, 0))

    def probability(self, w) -> np.ndarray:
        """Scenario probabilities under build pattern ``w`` (may be
        fractional; fractional entries mix the two marginals linearly)."""
        w = np.asarray(w, dtype=float)
        out = np.ones(self.n_scenarios)
        for i in range(self.n_nodes):
            mix = (1.0 - w[i]) * self.p0[i] + w[i] * self.p1[i]
            out *= mix[self.tuples[:, i]]
        return out

    def base_probability(self) -> np.ndarray:
        return self.probability(np.zeros(self.n_nodes))

    def invested_probability(self) -> np.ndarray:
        return self.probability(np.ones(self.n_nodes))

    def distance(self, n: int, j: int) -> float:
        """1-norm distance between two scenarios' daily demand vectors."""
        return float(np.abs(self.daily[n] - self.daily[j]).sum())

    def distance_matrix(self) -> np.ndarray:
        if self.n_scenarios > DISTANCE_MATRIX_LIMIT:
            raise ValueError(
                f"distance matrix over {self.n_scenarios} scenarios "
                f"(limit {DISTANCE_MATRIX_LIMIT}); use per-pair distances")
        diff = self.daily[:, None, :] - self.daily[None, :, :]
        return np.abs(diff).sum(axis=2)


# -------------------------------------------------------------------- bundles

@dataclass(frozen=True)
class Bundle:
    """An axis-aligned box of scenarios sharing one outcome.

    ``sets`` holds the selected level indices per node (the full level set
    at starred nodes). Feasible scenarios are always singleton bundles.
    """

    sets: tuple[tuple[int, ...], ...]
    members: tuple[int, ...]      # lex scenario indices, sorted
    feasible: bool

    @property
    def n_members(self) -> int:
        return len(self.members)


def singleton_bundles(support: ScenarioSupport,
                      feasible: np.ndarray | None = None) -> list[Bundle]:
    """One bundle per scenario (the unbundled unit set)."""
    if feasible is None:
        feasible = np.ones(support.n_scenarios, dtype=bool)
    out = []
    for n in range(support.n_scenarios):
        sets = tuple((int(k),) for k in support.tuples[n])
        out.append(Bundle(sets, (n,), bool(feasible[n])))
    return out


def _box_members(support: ScenarioSupport, sets) -> list[int]:
    """Lex indices of every scenario inside a box."""
    strides = np.ones(support.n_nodes, dtype=np.int64)
    for i in range(support.n_nodes - 2, -1, -1):
        strides[i] = strides[i + 1] * support.shape[i + 1]
    out = []
    for combo in itertools.product(*sets):
        out.append(int(np.dot(strides, np.asarray(combo, dtype=np.int64))))
    return sorted(out)


def bundle_scenarios(support: ScenarioSupport,
                     feasible: np.ndarray) -> list[Bundle]:
    """Partition the support into feasible singletons and infeasible boxes.

    Greedy cover of the infeasible set by boxes: candidate boxes are
    scanned by descending star count (starred nodes span their whole level
    set), ties broken lexicographically by star positions and then by the
    fixed levels; a box is accepted iff all its members are infeasible and
    still uncovered. Remaining infeasible scenarios become singletons.
    The result is a verified partition, ordered by smallest member index.
    """
    n = support.n_scenarios
    feasible = np.asarray(feasible, dtype=bool)
    if feasible.shape != (n,):
        raise ValueError("feasible mask has wrong shape")
    uncovered = {int(i) for i in np.nonzero(~feasible)[0]}
    bundles: list[Bundle] = []
    nb = support.n_nodes

    for stars in range(nb, 0, -1):
        if not uncovered:
            break
        for star_pos in itertools.combinations(range(nb), stars):
            fixed_pos = [i for i in range(nb) if i not in star_pos]
            for fixed in itertools.product(
                    *(range(support.shape[i]) for i in fixed_pos)):
                sets: list[tuple[int, ...]] = [()] * nb
                for i, pos in enumerate(fixed_pos):
                    sets[pos] = (int(fixed[i]),)
                for pos in star_pos:
                    sets[pos] = tuple(range(support.shape[pos]))
                members = _box_members(support, sets)
                if all(m in uncovered for m in members):
                    bundles.append(Bundle(tuple(sets), tuple(members), False))
                    uncovered.difference_update(members)
            if not uncovered:
                break

    for m in sorted(uncovered):
        sets = tuple((int(k),) for k in support.tuples[m])
        bundles.append(Bundle(sets, (m,), False))
    for m in np.nonzero(feasible)[0]:
        sets = tuple((int(k),) for k in support.tuples[m])
        bundles.append(Bundle(sets, (int(m),), True))

    bundles.sort(key=lambda b: b.members[0])
    covered = [m for b in bundles for m in b.members]
    if sorted(covered) != list(range(n)):
        raise AssertionError("bundle set is not a partition of the support")
    return bundles


def unit_mass(support: ScenarioSupport, bundles: list[Bundle],
              w) -> np.ndarray:
    """Probability mass of each bundle under build pattern ``w``; exact for
    boxes because product measures factorize over axis-aligned sets."""
    w = np.asarray(w, dtype=float)
    out = np.empty(len(bundles))
    for u, b in enumerate(bundles):
        mass = 1.0
        for i in range(support.n_nodes):
            sel = list(b.sets[i])
            mass *= ((1.0 - w[i]) * support.p0[i][sel].sum()
                     + w[i] * support.p1[i][sel].sum())
        out[u] = mass
    return out


# -------------------------------------------------------------------- shaping

@dataclass
class ShapingBlock:
    """Partial-product chains wired into a model."""

    bundles: list[Bundle]
    sigma0: np.ndarray        # (n_units,) chain constants before any node
    ratios: np.ndarray        # (n_nodes, n_units) invested/base set ratios
    pi_cols: np.ndarray       # (n_nodes, n_units) chain variable columns

    @property
    def final_cols(self) -> np.ndarray:
        """Columns carrying the realized probabilities."""
        return self.pi_cols[-1]


def shaped_distribution(support: ScenarioSupport, bundles: list[Bundle],
                        w) -> np.ndarray:
    """Value the shaping chains' caps recursively (the tightest feasible
    point of the rows emitted by :func:`build_shaping`).

    For binary ``w`` this equals :func:`unit_mass`; the equality is what
    the shaping-exactness tests assert.
    """
    w = np.asarray(w, dtype=float)
    sigma0, ratios = _chain_constants(support, bundles)
    pi = sigma0.copy()
    for b in range(support.n_nodes):
        pi = np.minimum(ratios[b] * pi + 1.0 - w[b], pi + w[b])
        pi = np.clip(pi, 0.0, 1.0)
    return pi


def _chain_constants(support: ScenarioSupport, bundles: list[Bundle]
                     ) -> tuple[np.ndarray, np.ndarray]:
    n_units = len(bundles)
    sigma0 = np.ones(n_units)
    ratios = np.ones((support.n_nodes, n_units))
    for u, bun in enumerate(bundles):
        for i in range(support.n_nodes):
            sel = list(bun.sets[i])
            base = float(support.p0[i][sel].sum())
            inv = float(support.p1[i][sel].sum())
            sigma0[u] *= base
            ratios[i, u] = inv / base
    return sigma0, ratios


def build_shaping(model: MilpModel, support: ScenarioSupport,
                  w_cols: np.ndarray, bundles: list[Bundle] | None = None,
                  label: str = "") -> ShapingBlock:
    """Emit the probability-shaping rows for the given build-flag columns.

    Per node ``b`` and unit ``s``: a ratio cap (chain advances by the
    invested/base probability ratio when ``w_b = 1``), a passthrough cap
    (chain unchanged when ``w_b = 0``), and one normalization row pinning
    the stage's probabilities to a distribution. Stage-0 values are
    constants (the base-measure masses) folded into the stage-1 rows.
    """
    if bundles is None:
        bundles = singleton_bundles(support)
    sigma0, ratios = _chain_constants(support, bundles)
    n_units = len(bundles)
    nb = support.n_nodes
    pi_cols = np.empty((nb, n_units), dtype=np.int64)
    for b in range(nb):
        for u in range(n_units):
            mem = bundles[u].members[0]
            pi_cols[b, u] = model.add_variable(
                f"{label}shape:pi[b{b + 1},u{mem}]", 0.0, 1.0,
                tag="shape:pi")
    for b in range(nb):
        wcol = int(w_cols[b])
        for u in range(n_units):
            mem = bundles[u].members[0]
            if b == 0:
                # stage-0 chain value is a constant: fold it into the rhs
                model.add_constraint(
                    [pi_cols[0, u], wcol], [1.0, 1.0], "<=",
                    1.0 + ratios[0, u] * sigma0[u],
                    name=f"{label}shape:ratio[b1,u{mem}]", tag="shape:ratio")
                model.add_constraint(
                    [pi_cols[0, u], wcol], [1.0, -1.0], "<=", sigma0[u],
                    name=f"{label}shape:pass[b1,u{mem}]", tag="shape:pass")
            else:
                model.add_constraint(
                    [pi_cols[b, u], pi_cols[b - 1, u], wcol],
                    [1.0, -ratios[b, u], 1.0], "<=", 1.0,
                    name=f"{label}shape:ratio[b{b + 1},u{mem}]",
                    tag="shape:ratio")
                model.add_constraint(
                    [pi_cols[b, u], pi_cols[b - 1, u], wcol],
                    [1.0, -1.0, -1.0], "<=", 0.0,
                    name=f"{label}shape:pass[b{b + 1},u{mem}]",
                    tag="shape:pass")
        model.add_constraint(
            pi_cols[b], np.ones(n_units), "=", 1.0,
            name=f"{label}shape:norm[b{b + 1}]", tag="shape:norm")
    return ShapingBlock(bundles, sigma0, ratios, pi_cols)


# ------------------------------------------------------------------ screening

def screen_feasible(inst: Instance, engine: str = "highs") -> np.ndarray:
    """Decide, per scenario, whether its capture floors are road-feasible.

    One feasibility LP per scenario over the traffic block alone. When a
    uniform profile scaling can never hit a link's hard cap, feasibility
    is monotone in the hourly scale and only the lowest-profile hour needs
    checking; otherwise every hour is screened (hours are independent).
    Feasibility is also monotone in the level tuple (higher levels mean
    higher floors), so dominance against already-classified tuples prunes
    most solves.
    """
    support = ScenarioSupport(inst)
    if inst.uniform_scaling_ok():
        hours = [int(np.argmin(inst.hourly_profile))]
    else:
        hours = list(range(inst.horizon))

    model = MilpModel(f"{inst.name}-screen")
    tv = build_traffic(model, inst, req=None, hours=hours)
    arrays = model.build_arrays()
    base_lb = arrays.lb.copy()
    cap_cols = tv.capture[:, hours]  # (n_cand, len(hours))

    known_feas: list[np.ndarray] = []
    known_inf: list[np.ndarray] = []
    out = np.zeros(support.n_scenarios, dtype=bool)

    for n in range(support.n_scenarios):
        tup = support.tuples[n]
        if known_feas and bool(
                np.all(tup <= np.asarray(known_feas), axis=1).any()):
            out[n] = True
            continue
        if known_inf and bool(
                np.all(tup >= np.asarray(known_inf), axis=1).any()):
            out[n] = False
            continue
        req = inst.capture_requirement(support.daily[n])
        lb = base_lb.copy()
        for k in range(cap_cols.shape[0]):
            lb[cap_cols[k]] = req[k]
        res = solve_lp(model, engine=engine, lb_override=lb)
        ok = res.status == "optimal"
        out[n] = ok
        (known_feas if ok else known_inf).append(tup.copy())
    return out
