"""Coordinated day-ahead scheduling by cutting-plane decomposition.

The scalarized co-optimization splits into a scheduling master over the
batched computing model and a network subproblem pricing any fixed facility
draw.  The master is solved by branch and price: each node's LP relaxation is
solved by column generation against the scheme engine, integer batch sizes
are recovered by branching on fractional batch variables, and the network
side enters through value-underestimating cuts built from the subproblem's
sensitivity duals.

Objective convention: with weight ``w`` the master minimizes
``w * supply_cost / cost_ref + (1 - w) * active_core_hours / core_ref``.
Both reference magnitudes are measured once at the start (pure core-count
optimum and its network cost) and floored at 1, so ``w`` stays meaningful
across the dollar and core-hour units.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from .branchflow import (
    NetworkState,
    OpfModel,
    build_opf,
    elastic_penalty_rate,
    extract_coupling_duals,
    solve_opf,
)
from .conic import ConicProgram, ProgramBuilder, SolveReport, solve_conic
from .idcpower import (
    BatchedIndex,
    CapacityError,
    IdcSchedule,
    add_batched_block,
    check_fleet_capacity,
    demand_matrix,
)
from .scenario import Scenario, ScenarioError, validate_scenario
from .schemes import (
    PricingDuals,
    Scheme,
    SchemeSpaceError,
    enumerate_feasible,
    price_schemes,
    prune_dominated,
    seed_schemes,
)

DEFAULT_EPS = 1e-3
DEFAULT_INNER_TOL = 1e-4
DEFAULT_MAX_OUTER = 100
DEFAULT_NODE_LIMIT = 500
INTEGRALITY_TOL = 1e-6


class MasterInfeasibleError(ValueError):
    """The scheduling master has no solution; carries a capacity diagnosis."""


@dataclass(frozen=True)
class BendersCut:
    """Linear underestimator of the network cost as a function of IDC power.

    Values and slopes are stored in raw dollars; the master scales them by
    the active weight and cost reference when the cut row is written.  When
    ``interval_values`` is present the cut splits into one row per interval
    (the network decouples in time), which is the multi-cut mode.
    """

    value: float
    slope: np.ndarray  # (T, num_idcs), $/kW
    anchor: np.ndarray  # (T, num_idcs), kW
    iteration: int
    interval_values: np.ndarray | None = None  # (T,) raw dollars per interval


@dataclass
class MasterState:
    """Mutable cross-iteration state of the scheduling master."""

    scenario: Scenario
    columns: list[list[Scheme]]
    cuts: list[BendersCut] = field(default_factory=list)
    cost_ref: float = 1.0
    core_ref: float = 1.0
    pricing_enabled: bool = True
    multi_cut: bool = False
    server_floor: np.ndarray | None = None  # (T,) valid lower bounds on batches
    column_pos: list[dict[Scheme, int]] = field(default_factory=list)
    solver_tol: float = 1e-8
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        if not self.column_pos:
            self.column_pos = [
                {a: c for c, a in enumerate(pool)} for pool in self.columns
            ]

    def add_column(self, n: int, scheme: Scheme) -> None:
        if scheme in self.column_pos[n]:
            return
        self.column_pos[n][scheme] = len(self.columns[n])
        self.columns[n].append(scheme)
        self._cache.clear()

    def invalidate(self) -> None:
        self._cache.clear()


@dataclass(frozen=True)
class BnpResult:
    """Outcome of one branch-and-price master solve."""

    schedule: IdcSchedule
    power: np.ndarray  # (T, num_idcs) kW
    cut_estimate: float  # value of the cut surrogate at the solution
    objective: float  # master objective of the returned integer solution
    bound: float  # proven lower bound on the master optimum
    nodes: int
    columns_added: int
    status: str  # "optimal" | "node_limit"


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    lower_bound: float
    upper_bound: float
    gap: float
    columns_added: int
    nodes_explored: int

    def format_line(self) -> str:
        return (
            f"iteration={self.iteration} lower={self.lower_bound:.8f} "
            f"upper={self.upper_bound:.8f} gap={self.gap:.8f} "
            f"columns_added={self.columns_added} nodes={self.nodes_explored}"
        )


@dataclass(frozen=True)
class ScheduleSolution:
    """Incumbent co-optimized plan with bounds, metrics, and diagnostics."""

    weight: float
    status: str  # "converged" | "iteration_limit"
    scalarized_objective: float
    lower_bound: float
    supply_cost: float  # raw dollars over the horizon
    active_core_hours: float  # raw core-hours kept powered
    utilization: float  # mean over intervals of busy share per active server
    schedule: IdcSchedule
    idc_power: np.ndarray  # (T, num_idcs) kW
    network: NetworkState  # incumbent subproblem solve
    cost_ref: float
    core_ref: float
    iterations: tuple[IterationRecord, ...]
    columns_per_idc: tuple[int, ...]
    warnings: tuple[str, ...]

    def log_lines(self) -> tuple[str, ...]:
        return tuple(rec.format_line() for rec in self.iterations)


def _batch_weights(state: MasterState, weight: float) -> list[float]:
    s = state.scenario
    return [
        (1.0 - weight) * idc.server.cpu_cores / state.core_ref for idc in s.idcs
    ]


def _build_master(state: MasterState, weight: float) -> tuple[ConicProgram, BatchedIndex]:
    """Master LP/MILP for the current pools, cuts, and weight (cached)."""
    key = (weight, len(state.cuts), tuple(len(p) for p in state.columns))
    hit = state._cache.get(key)
    if hit is not None:
        return hit
    s = state.scenario
    builder = ProgramBuilder()
    index = add_batched_block(builder, s, state.columns, batch_cost=_batch_weights(state, weight))
    horizon = s.horizon
    if state.server_floor is not None:
        for t in range(horizon):
            rhs = float(state.server_floor[t])
            if rhs <= 0.0:
                continue
            coeffs = {
                int(index.batch[n][c, t]): 1.0
                for n in range(len(s.idcs))
                for c in range(len(state.columns[n]))
            }
            if coeffs:
                builder.add_ge(f"servers_floor[{t}]", coeffs, rhs)
    scale = weight / state.cost_ref
    if state.multi_cut:
        q_ids = [
            builder.add_var(f"cut_value[{t}]", lower=0.0, objective=1.0)
            for t in range(horizon)
        ]
    else:
        q_ids = [builder.add_var("cut_value", lower=0.0, objective=1.0)]
    for k, cut in enumerate(state.cuts):
        if scale == 0.0:
            break
        if state.multi_cut and cut.interval_values is not None:
            for t in range(horizon):
                coeffs = {q_ids[t]: 1.0}
                rhs = scale * float(cut.interval_values[t])
                for n in range(len(s.idcs)):
                    lam = scale * float(cut.slope[t, n])
                    coeffs[int(index.idc_power[t, n])] = -lam
                    rhs -= lam * float(cut.anchor[t, n])
                builder.add_ge(f"cut[{k},{t}]", coeffs, rhs)
        else:
            coeffs = {q_ids[0]: 1.0}
            rhs = scale * cut.value
            for t in range(horizon):
                for n in range(len(s.idcs)):
                    lam = scale * float(cut.slope[t, n])
                    if lam != 0.0:
                        coeffs[int(index.idc_power[t, n])] = -lam
                        rhs -= lam * float(cut.anchor[t, n])
            builder.add_ge(f"cut[{k}]", coeffs, rhs)
    program = builder.build()
    state._cache[key] = (program, index)
    return program, index


def _apply_overrides(
    state: MasterState,
    program: ConicProgram,
    overrides: dict[tuple[int, Scheme, int], tuple[float, float]],
) -> ConicProgram:
    if not overrides:
        return program
    named = {}
    for (n, scheme, t), bounds in overrides.items():
        c = state.column_pos[n][scheme]
        named[f"batch[{n},{c},{t}]"] = bounds
    return program.with_bounds(named)


def _extract_duals(
    state: MasterState, weight: float, program: ConicProgram, report: SolveReport
) -> tuple[PricingDuals, ...]:
    s = state.scenario
    horizon = s.horizon
    n_classes = len(s.workloads)
    weights = _batch_weights(state, weight)
    floor_dual = np.zeros(horizon)
    for t in range(horizon):
        row = program.ub_index.get(f"servers_floor[{t}]")
        if row is not None:
            floor_dual[t] = report.duals_ub[row]
    out = []
    for n, idc in enumerate(s.idcs):
        power_cost = np.array(
            [
                report.duals_eq[program.eq_index[f"pidc_def[{n},{t}]"]]
                for t in range(horizon)
            ]
        )
        service = np.zeros((n_classes, horizon))
        for l in range(n_classes):
            for t in range(horizon):
                row = program.eq_index.get(f"balance[{l},{t}]")
                if row is None:
                    raise MasterInfeasibleError(
                        f"missing dual for declared balance row ({l},{t})"
                    )
                service[l, t] = report.duals_eq[row]
        out.append(
            PricingDuals(
                power_cost=power_cost,
                service_value=service,
                batch_cost=weights[n] - floor_dual,
                cooling_overhead=idc.k_cooling,
            )
        )
    return tuple(out)


def _diagnose_infeasible(state: MasterState) -> str:
    s = state.scenario
    demand = demand_matrix(s)
    total = float(demand.sum(axis=0).max()) if demand.size else 0.0
    pools = ", ".join(str(len(p)) for p in state.columns)
    return (
        "scheduling master is infeasible: peak total demand "
        f"{total} cores/h against column pools of sizes [{pools}]; "
        "demand exceeds what the current scheme pools can serve"
    )


def solve_master_lp(
    state: MasterState, weight: float
) -> tuple[SolveReport, tuple[PricingDuals, ...]]:
    """Solve the master's LP relaxation and extract pricing duals."""
    program, _ = _build_master(state, weight)
    report = solve_conic(program, tol=state.solver_tol)
    if report.status == "infeasible":
        raise MasterInfeasibleError(_diagnose_infeasible(state))
    if report.status != "optimal":
        raise RuntimeError(f"master LP ended with status {report.status}")
    return report, _extract_duals(state, weight, program, report)


def _column_generation(
    state: MasterState,
    weight: float,
    overrides: dict,
    allow_enumeration_fallback: bool = False,
    max_rounds: int = 200,
    price: bool = True,
    pricing_tol: float = 1e-6,
) -> tuple[SolveReport | None, ConicProgram | None, BatchedIndex | None, int]:
    """Solve one node LP, pricing new columns until none helps.

    With ``price`` False the LP is solved once over the current pool and no
    columns are added; the result is then only valid for the restricted
    master, so callers must not use its value as a bound on the full one.
    ``pricing_tol`` is the reduced-cost threshold below which a scheme is
    considered worth adding; dual noise from the interior-point solver sits
    just past any fixed tiny threshold, so callers pass their convergence
    tolerance to keep noise-level schemes out of the pool.
    """
    s = state.scenario
    added_total = 0
    for _ in range(max_rounds):
        program, index = _build_master(state, weight)
        bounded = _apply_overrides(state, program, overrides)
        report = solve_conic(bounded, tol=state.solver_tol)
        if report.status == "infeasible":
            if allow_enumeration_fallback and state.pricing_enabled:
                allow_enumeration_fallback = False
                grew = False
                try:
                    for n, idc in enumerate(s.idcs):
                        for a in enumerate_feasible(idc.server, s.workloads):
                            if a not in state.column_pos[n]:
                                state.add_column(n, a)
                                grew = True
                                added_total += 1
                except SchemeSpaceError:
                    grew = False
                if grew:
                    continue
            return None, None, None, added_total
        if report.status != "optimal":
            raise RuntimeError(f"master LP ended with status {report.status}")
        if not state.pricing_enabled or not price:
            return report, bounded, index, added_total
        duals = _extract_duals(state, weight, program, report)
        grew = False
        for n, idc in enumerate(s.idcs):
            priced = price_schemes(
                idc.server,
                s.workloads,
                duals[n],
                existing=state.columns[n],
                tol=pricing_tol,
                limit=1,
            )
            for a, _rc in priced:
                state.add_column(n, a)
                added_total += 1
                grew = True
        if not grew:
            return report, bounded, index, added_total
    raise RuntimeError("column generation failed to settle within round limit")


def _pack_solution(
    state: MasterState, program: ConicProgram, index: BatchedIndex, x: np.ndarray
) -> tuple[IdcSchedule, np.ndarray, float, float]:
    """Schedule, facility power, cut-surrogate value, and master objective."""
    s = state.scenario
    counts, busy, flows = [], [], []
    for n in range(len(s.idcs)):
        counts.append(np.round(x[index.batch[n]]))
        busy.append(np.array(x[index.busy[n]]))
        flows.append(np.array(x[index.flow[n]]))
    schedule = IdcSchedule(
        schemes=tuple(tuple(pool) for pool in state.columns),
        counts=tuple(counts),
        busy=tuple(busy),
        flows=tuple(flows),
    )
    power = np.array(x[index.idc_power])
    q_total = 0.0
    for name, j in program.var_index.items():
        if name.startswith("cut_value"):
            q_total += float(x[j])
    objective = float(program.objective @ x) + program.objective_offset
    return schedule, power, q_total, objective


def _restricted_milp(
    program: ConicProgram, gap: float
) -> tuple[np.ndarray, float, float] | None:
    """Integer solve of the master over its current columns only.

    Returns the incumbent, its objective, and the solver's own dual bound
    (a certified lower bound for the restricted integer program).
    """
    constraints = []
    if program.a_eq.shape[0]:
        constraints.append(LinearConstraint(program.a_eq, program.b_eq, program.b_eq))
    if program.a_ub.shape[0]:
        lo = np.where(program.ub_orient > 0, -np.inf, program.b_ub)
        hi = np.where(program.ub_orient > 0, program.b_ub, np.inf)
        constraints.append(LinearConstraint(program.a_ub, lo, hi))
    res = milp(
        c=program.objective,
        constraints=constraints,
        integrality=program.integer_mask.astype(int),
        bounds=Bounds(program.lower, program.upper),
        options={"mip_rel_gap": gap, "node_limit": 20000, "presolve": True},
    )
    if res.x is None:
        return None
    value = float(res.fun) + program.objective_offset
    dual = getattr(res, "mip_dual_bound", None)
    dual_bound = value if dual is None else float(dual) + program.objective_offset
    return np.array(res.x), value, min(value, dual_bound)


SMALL_FRONTIER_CAP = 12


def _pool_is_complete(state: MasterState) -> bool:
    """True when every facility's pool covers its dominance frontier.

    Any batch built from a dominated scheme can be rebuilt server-for-server
    on a dominating scheme at identical cost, so a pool containing the whole
    frontier makes the restricted master equivalent to the full one.  In that
    case the integer solver's dual bound is a certified bound and branching
    with further pricing cannot improve on it.
    """
    s = state.scenario
    try:
        for n, idc in enumerate(s.idcs):
            pool = set(state.columns[n])
            for scheme in prune_dominated(enumerate_feasible(idc.server, s.workloads)):
                if scheme not in pool:
                    return False
    except SchemeSpaceError:
        return False
    return True


def _complete_small_frontiers(state: MasterState) -> int:
    """Add every frontier scheme when the frontier is small enough to list.

    With only a handful of undominated schemes per facility, carrying the
    whole frontier is cheaper than discovering it column by column inside the
    tree, and it makes the restricted master provably equivalent to the full
    one.  Large frontiers are left to pricing so pools stay parsimonious.
    Returns the number of columns added.
    """
    s = state.scenario
    try:
        frontiers = [
            prune_dominated(enumerate_feasible(idc.server, s.workloads))
            for idc in s.idcs
        ]
    except SchemeSpaceError:
        return 0
    if any(len(front) > SMALL_FRONTIER_CAP for front in frontiers):
        return 0
    grew = 0
    for n, front in enumerate(frontiers):
        for scheme in front:
            if scheme not in state.column_pos[n]:
                state.add_column(n, scheme)
                grew += 1
    return grew


def _fractional_candidates(
    state: MasterState, index: BatchedIndex, x: np.ndarray
) -> list[tuple[float, int, Scheme, int, float]]:
    out = []
    s = state.scenario
    for n in range(len(s.idcs)):
        ids = index.batch[n]
        for c, scheme in enumerate(state.columns[n]):
            for t in range(s.horizon):
                val = x[ids[c, t]]
                frac = val - math.floor(val)
                score = min(frac, 1.0 - frac)
                if score > INTEGRALITY_TOL:
                    out.append((score, n, scheme, t, val))
    out.sort(key=lambda item: (-item[0], item[1], item[2], item[3]))
    return out


def branch_and_price(
    state: MasterState,
    weight: float,
    tol: float = DEFAULT_INNER_TOL,
    node_limit: int = DEFAULT_NODE_LIMIT,
) -> BnpResult:
    """Integer master solve: root column generation plus best-bound branching.

    Pricing runs at the root until no scheme has negative reduced cost; the
    tree below then branches over the restricted pool without further
    pricing, which keeps pools parsimonious.  The returned ``bound`` is the
    priced root LP value (or the integer solver's dual bound when the pool
    provably covers the whole dominance frontier), so it is always a valid
    bound on the unrestricted master.
    """
    report, program, index, added = _column_generation(
        state, weight, {}, allow_enumeration_fallback=True, pricing_tol=tol
    )
    if report is None:
        raise MasterInfeasibleError(_diagnose_infeasible(state))
    root_bound = report.objective
    nodes = 1

    def scale(v: float) -> float:
        return tol * max(1.0, abs(v))

    complete = _pool_is_complete(state)
    if not complete:
        filled = _complete_small_frontiers(state)
        if filled:
            report, program, index, grown = _column_generation(
                state, weight, {}, pricing_tol=tol
            )
            if report is None:
                raise MasterInfeasibleError(_diagnose_infeasible(state))
            added += filled + grown
            root_bound = report.objective
            complete = True
    incumbent_value = math.inf
    incumbent_pack = None
    milp_out = _restricted_milp(program, gap=tol / 4 if complete else tol)
    if milp_out is not None:
        x_int, value, milp_bound = milp_out
        incumbent_value = value
        incumbent_pack = _pack_solution(state, program, index, x_int)
        if complete:
            schedule, power, q_total, objective = incumbent_pack
            bound = max(root_bound, milp_bound)
            return BnpResult(
                schedule=schedule,
                power=power,
                cut_estimate=q_total,
                objective=incumbent_value,
                bound=min(bound, incumbent_value),
                nodes=nodes,
                columns_added=added,
                status=(
                    "optimal"
                    if incumbent_value - bound <= scale(incumbent_value)
                    else "node_limit"
                ),
            )

    heap: list[tuple[float, int, dict]] = []
    counter = 0
    frac = _fractional_candidates(state, index, report.x)
    if frac and incumbent_value - root_bound > scale(incumbent_value):
        heapq.heappush(heap, (root_bound, counter, {}))
        counter += 1
    elif not frac and report.objective < incumbent_value:
        incumbent_value = report.objective
        incumbent_pack = _pack_solution(state, program, index, report.x)

    while heap and nodes < node_limit:
        bound, _, overrides = heapq.heappop(heap)
        if incumbent_value - bound <= scale(incumbent_value):
            heapq.heappush(heap, (bound, -1, overrides))
            break
        node_report, node_program, node_index, node_added = _column_generation(
            state, weight, overrides, price=False
        )
        nodes += 1
        added += node_added
        if node_report is None:
            continue
        value = node_report.objective
        if incumbent_value - value <= scale(incumbent_value):
            continue
        frac = _fractional_candidates(state, node_index, node_report.x)
        if not frac:
            incumbent_value = value
            incumbent_pack = _pack_solution(
                state, node_program, node_index, node_report.x
            )
            continue
        _score, n, scheme, t, val = frac[0]
        lo, hi = overrides.get(
            (n, scheme, t), (0.0, float(state.scenario.idcs[n].server_count))
        )
        down = dict(overrides)
        down[(n, scheme, t)] = (lo, float(math.floor(val)))
        up = dict(overrides)
        up[(n, scheme, t)] = (float(math.ceil(val)), hi)
        for child in (up, down):
            key = child[(n, scheme, t)]
            if key[0] <= key[1]:
                heapq.heappush(heap, (value, counter, child))
                counter += 1

    if incumbent_pack is None:
        raise RuntimeError("branch and price found no integer-feasible master solution")
    # Nodes below the root solve restricted LPs without pricing, so their
    # values bound only the restricted master; the priced root LP is the one
    # certified bound on the full master.
    bound = min(incumbent_value, root_bound)
    status = (
        "optimal"
        if incumbent_value - bound <= scale(incumbent_value)
        else "node_limit"
    )
    schedule, power, q_total, objective = incumbent_pack
    return BnpResult(
        schedule=schedule,
        power=power,
        cut_estimate=q_total,
        objective=incumbent_value,
        bound=bound,
        nodes=nodes,
        columns_added=added,
        status=status,
    )


def compute_server_floor(s: Scenario) -> np.ndarray | None:
    """Per-interval lower bounds on the total batch count, or None.

    For each interval, a small covering LP over the dominance frontier of
    every facility's scheme space gives the minimal fractional server count
    able to serve that interval's demand.  The total batch count is a sum of
    integers, so the ceiling of that LP value is a valid inequality for the
    integer master; adding it up front removes the placement-degenerate gap
    that weakens branching on individual batch variables.
    """
    try:
        frontiers = [
            prune_dominated(enumerate_feasible(idc.server, s.workloads))
            for idc in s.idcs
        ]
    except SchemeSpaceError:
        return None
    if not s.idcs or not s.workloads:
        return np.zeros(s.horizon)
    demand = demand_matrix(s)
    floors = np.zeros(s.horizon)
    for t in range(s.horizon):
        if demand[:, t].sum() <= 0.0:
            continue
        builder = ProgramBuilder()
        count_ids = []
        flow_ids: dict[int, list[tuple[int, tuple[float, ...]]]] = {}
        for n, idc in enumerate(s.idcs):
            flow_ids[n] = []
            for k, scheme in enumerate(frontiers[n]):
                sid = builder.add_var(f"count[{n},{k}]", lower=0.0, objective=1.0)
                caps = tuple(
                    a * w.cores_per_vm * w.redundancy
                    for a, w in zip(scheme, s.workloads)
                )
                fid0 = []
                for l in range(len(s.workloads)):
                    fid = builder.add_var(f"serve[{n},{k},{l}]", lower=0.0)
                    builder.add_le(
                        f"cap[{n},{k},{l}]", {fid: 1.0, sid: -caps[l]}, 0.0
                    )
                    fid0.append(fid)
                budget = {fid: 1.0 for fid in fid0}
                budget[sid] = -idc.server.u_max * idc.server.cpu_cores
                builder.add_le(f"budget[{n},{k}]", budget, 0.0)
                count_ids.append((n, sid))
                flow_ids[n].append((sid, fid0))
            builder.add_le(
                f"fleet[{n}]",
                {sid: 1.0 for sid, _ in flow_ids[n]},
                float(idc.server_count),
            )
        for l in range(len(s.workloads)):
            coeffs = {}
            for n in range(len(s.idcs)):
                for _sid, fids in flow_ids[n]:
                    coeffs[fids[l]] = 1.0
            builder.add_ge(f"demand[{l}]", coeffs, float(demand[l, t]))
        report = solve_conic(builder.build(), tol=1e-9)
        if report.status == "infeasible":
            raise CapacityError(
                f"interval {t}: demand cannot be served by any scheme assignment"
            )
        if report.status != "optimal":
            return None
        floors[t] = math.ceil(report.objective - 1e-6)
    return floors


def _cost_by_interval(model: OpfModel, state_obj, x: np.ndarray) -> np.ndarray:
    """Raw supply cost per interval, including any elastic penalty."""
    s = model.scenario
    costs = np.zeros(s.horizon)
    for t in range(s.horizon):
        c = s.root.purchase_price * float(state_obj.root_p_kw[t])
        for g, gen in enumerate(s.generators):
            c += gen.unit_cost * float(state_obj.gen_p_kw[t, g])
        costs[t] = c
    if model.elastic and model.index.slack is not None:
        rate = elastic_penalty_rate(s) * model.s_base_kva
        per_t = model.index.slack.reshape(s.horizon, -1)
        for t in range(s.horizon):
            costs[t] += rate * float(x[per_t[t]].sum())
    return costs


def _mean_utilization(schedule: IdcSchedule, horizon: int) -> float:
    if horizon == 0:
        return 0.0
    shares = []
    for t in range(horizon):
        total_busy = sum(float(b[:, t].sum()) for b in schedule.busy)
        total_count = sum(float(c[:, t].sum()) for c in schedule.counts)
        shares.append(total_busy / total_count if total_count > 0 else 0.0)
    return float(np.mean(shares))


def _core_hours(s: Scenario, schedule: IdcSchedule) -> float:
    return schedule.active_core_hours(s)


def solve_coordinated(
    s: Scenario,
    weight: float = 0.5,
    eps: float = DEFAULT_EPS,
    inner_tol: float = DEFAULT_INNER_TOL,
    max_outer: int = DEFAULT_MAX_OUTER,
    node_limit: int = DEFAULT_NODE_LIMIT,
    multi_cut: bool = False,
    solver_tol: float = 1e-8,
    time_limit: float | None = None,
) -> ScheduleSolution:
    """Run the full decomposition loop and return the incumbent plan.

    ``time_limit`` caps the wall-clock seconds spent on outer iterations:
    once an incumbent exists and the limit has passed, the loop stops with
    status ``"time_limit"`` instead of starting another iteration.  Because
    the cut is based on elapsed time, limited runs trade the bit-for-bit
    reproducibility of unlimited ones for a bounded runtime.
    """
    if not 0.0 <= weight <= 1.0:
        raise ValueError("weight must lie in [0, 1]")
    if time_limit is not None and time_limit <= 0:
        raise ValueError("time_limit must be positive when given")
    problems = validate_scenario(s)
    if problems:
        raise ScenarioError(problems)
    check_fleet_capacity(s)
    inner = min(inner_tol, eps / 10.0) if eps < 10 * inner_tol else inner_tol

    swing = any(idc.server.p_su or idc.server.p_sd for idc in s.idcs)
    if swing:
        pools = [list(enumerate_feasible(idc.server, s.workloads)) for idc in s.idcs]
    else:
        pools = [list(seed_schemes(idc.server, s.workloads)) for idc in s.idcs]
    state = MasterState(
        scenario=s,
        columns=pools,
        pricing_enabled=not swing,
        multi_cut=multi_cut,
        server_floor=compute_server_floor(s),
        solver_tol=solver_tol,
    )

    warnings: list[str] = []
    stage0 = branch_and_price(state, weight=0.0, tol=inner, node_limit=node_limit)
    state.core_ref = max(1.0, _core_hours(s, stage0.schedule))

    elastic = False
    model = build_opf(s, np.zeros((s.horizon, len(s.idcs))))
    sub_tol = solver_tol

    current_schedule = stage0.schedule
    current_power = stage0.power
    lower = -math.inf
    upper = math.inf
    incumbent = None
    records: list[IterationRecord] = []
    status = "iteration_limit"

    deadline = None if time_limit is None else time.monotonic() + float(time_limit)
    iteration = 0
    while iteration < max_outer:
        if (
            deadline is not None
            and incumbent is not None
            and time.monotonic() >= deadline
        ):
            status = "time_limit"
            break
        iteration += 1
        sub_report, sub_state = solve_opf(
            model.with_fixed_power(current_power), tol=sub_tol
        )
        if sub_report.status == "infeasible" and not elastic:
            warnings.append(
                "network subproblem infeasible at the scheduled draw; "
                "restarting with elastic load-shedding slacks"
            )
            elastic = True
            model = build_opf(s, np.zeros((s.horizon, len(s.idcs))), elastic=True)
            state.cuts.clear()
            state.invalidate()
            lower = -math.inf
            sub_report, sub_state = solve_opf(
                model.with_fixed_power(current_power), tol=sub_tol
            )
        if sub_report.status != "optimal":
            raise RuntimeError(
                f"network subproblem ended with status {sub_report.status}"
            )
        cost_raw = sub_report.objective
        slopes = extract_coupling_duals(model, sub_report)
        if iteration == 1:
            state.cost_ref = max(1.0, cost_raw)
        interval_values = (
            _cost_by_interval(model, sub_state, sub_report.x) if multi_cut else None
        )
        state.cuts.append(
            BendersCut(
                value=cost_raw,
                slope=slopes,
                anchor=np.array(current_power),
                iteration=iteration,
                interval_values=interval_values,
            )
        )
        state.invalidate()

        cores = _core_hours(s, current_schedule)
        candidate = (
            weight * cost_raw / state.cost_ref
            + (1.0 - weight) * cores / state.core_ref
        )
        if candidate < upper:
            upper = candidate
            incumbent = (
                current_schedule,
                np.array(current_power),
                cost_raw,
                cores,
                sub_state,
            )

        bnp = branch_and_price(state, weight, tol=inner, node_limit=node_limit)
        lower = max(lower, bnp.bound)
        current_schedule = bnp.schedule
        current_power = bnp.power

        converged = upper - lower < eps
        if (
            converged
            and incumbent is not None
            and not np.allclose(current_power, incumbent[1], atol=1e-9)
        ):
            # The loop is about to stop, so the final master proposal would
            # otherwise never be priced by the network subproblem.  One more
            # solve keeps the better plan whenever the proposal wins.
            trial_report, trial_state = solve_opf(
                model.with_fixed_power(current_power), tol=sub_tol
            )
            if trial_report.status == "optimal":
                trial_cost = trial_report.objective
                trial_cores = _core_hours(s, current_schedule)
                trial_value = (
                    weight * trial_cost / state.cost_ref
                    + (1.0 - weight) * trial_cores / state.core_ref
                )
                if trial_value < upper:
                    upper = trial_value
                    incumbent = (
                        current_schedule,
                        np.array(current_power),
                        trial_cost,
                        trial_cores,
                        trial_state,
                    )

        records.append(
            IterationRecord(
                iteration=iteration,
                lower_bound=lower,
                upper_bound=upper,
                gap=upper - lower,
                columns_added=bnp.columns_added,
                nodes_explored=bnp.nodes,
            )
        )
        if converged:
            status = "converged"
            break

    assert incumbent is not None
    schedule, power, cost_raw, cores, net_state = incumbent
    return ScheduleSolution(
        weight=weight,
        status=status,
        scalarized_objective=upper,
        lower_bound=lower,
        supply_cost=cost_raw,
        active_core_hours=cores,
        utilization=_mean_utilization(schedule, s.horizon),
        schedule=schedule,
        idc_power=power,
        network=net_state,
        cost_ref=state.cost_ref,
        core_ref=state.core_ref,
        iterations=tuple(records),
        columns_per_idc=tuple(len(p) for p in state.columns),
        warnings=tuple(warnings),
    )


__all__ = [
    "BendersCut",
    "MasterState",
    "BnpResult",
    "IterationRecord",
    "ScheduleSolution",
    "MasterInfeasibleError",
    "solve_master_lp",
    "branch_and_price",
    "solve_coordinated",
    "compute_server_floor",
]
