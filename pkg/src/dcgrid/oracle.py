"""Exhaustive reference solver certifying the pipeline on tiny instances.

Very small fleets admit brute force: with zero start and stop surcharges the
scheduling intervals decouple, so the global optimum is the sum of per
interval optima, and each interval has finitely many integer operating
states.  This module walks all of them and prices each state through a
self-contained single-interval network program.  Nothing here reuses the
production constraint builders; the serving, power, and grid equations are
rebuilt from the scenario record directly on the cone-program kernel, which
is what makes agreement with the production solvers meaningful evidence.

Two searches are provided.  The per-server search enumerates, for every
server, either "off" or "on with a feasible VM mix".  The batched search
enumerates integer batch counts over caller-supplied deployment schemes.
Both compute the exact size of their search space first and refuse oversized
instances outright rather than sampling a subset.

Identical servers inside one facility are interchangeable: permuting their
states changes no constraint and no cost term, so the searches walk one
representative per multiset of per-server states.  Every achievable cost and
feasibility pattern is still covered.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .conic import ConicProgram, ProgramBuilder, solve_conic
from .scenario import IdcSpec, Scenario, ScenarioError, WorkloadClass, validate_scenario

__all__ = [
    "ORACLE_ASSIGNMENT_CAP",
    "EnumerationCapError",
    "NoFeasibleAssignmentError",
    "OracleResult",
    "count_initial_assignments",
    "count_batched_assignments",
    "brute_force_initial",
    "brute_force_reconstructed",
]

ORACLE_ASSIGNMENT_CAP = 1_000_000

_S_BASE_KVA = 10000.0
_WATTS_PER_KW = 1000.0


class EnumerationCapError(ValueError):
    """The integer search space is too large; the reference refuses to run."""


class NoFeasibleAssignmentError(ValueError):
    """No integer operating state admits a workable network operation."""


@dataclass(frozen=True)
class OracleResult:
    """Global optimum found by exhaustive search.

    ``objective`` is the scalarized value ``weight * supply_cost / cost_ref
    + (1 - weight) * active_core_hours / core_ref``, matching the convention
    of the production solver so the two are directly comparable.
    ``assignments[t][n]`` describes facility n's optimal state in interval t:
    for the per-server search, a sorted tuple with one entry per server
    (``None`` when off, the VM-count mix when on); for the batched search, a
    tuple of ``(scheme, batch_size)`` pairs with positive sizes.
    ``candidates`` is the declared size of the integer search space and
    ``evaluations`` the number of continuous programs actually solved after
    capacity screening and bound pruning.
    """

    objective: float
    supply_cost: float
    active_core_hours: float
    interval_costs: tuple[float, ...]
    assignments: tuple[tuple[tuple, ...], ...]
    candidates: int
    evaluations: int


@dataclass(frozen=True)
class _FacilityState:
    """One facility's integer operating state, reduced to what pricing needs."""

    label: tuple
    core_count: float
    idle_kw: float
    slot_caps: tuple[tuple[float, ...], ...]
    slot_budgets: tuple[float, ...]
    class_caps: np.ndarray
    serve_total: float


@dataclass(frozen=True)
class _IntervalTemplate:
    """Reusable single-interval program plus the names of its swap points."""

    program: ConicProgram
    serve_names: tuple[tuple[tuple[str, ...], ...], ...]
    busy_names: tuple[tuple[str, ...], ...]
    draw_names: tuple[str, ...]
    served_names: tuple[str, ...]
    pbal_names: tuple[str, ...]
    qbal_names: tuple[str, ...]
    gen_p_names: tuple[str, ...]


def _gross(idc: IdcSpec) -> float:
    """kW of facility draw per watt of IT power, cooling included."""
    return (1.0 + idc.k_cooling) / _WATTS_PER_KW


def _serve_rate(idc: IdcSpec) -> float:
    """kW of facility draw per core-hour served in one interval."""
    return _gross(idc) * idc.server.k_it / idc.server.cpu_cores


def _vm_mixes(idc: IdcSpec, workloads: Sequence[WorkloadClass]) -> list[tuple[int, ...]]:
    """Every VM-count vector that fits one server, the all-zero mix included."""
    out: list[tuple[int, ...]] = []

    def walk(idx: int, remaining: int, prefix: list[int]) -> None:
        if idx == len(workloads):
            out.append(tuple(prefix))
            return
        w = workloads[idx]
        top = min(w.availability_cap, remaining // w.cores_per_vm)
        for count in range(top + 1):
            prefix.append(count)
            walk(idx + 1, remaining - count * w.cores_per_vm, prefix)
            prefix.pop()

    walk(0, idc.server.cpu_cores, [])
    return out


def count_initial_assignments(s: Scenario) -> int:
    """Exact size of the per-server search space.

    Each server is off or runs one feasible VM mix; facilities multiply and
    so do intervals, because zero start and stop surcharges decouple them.
    """
    total = s.horizon
    for idc in s.idcs:
        per_server = 1 + len(_vm_mixes(idc, s.workloads))
        total *= per_server**idc.server_count
    return total


def count_batched_assignments(
    s: Scenario, pools: Sequence[Sequence[tuple[int, ...]]]
) -> int:
    """Exact size of the batched search space for the given scheme pools."""
    if len(pools) != len(s.idcs):
        raise ValueError("one scheme pool per facility is required")
    total = s.horizon
    for idc, pool in zip(s.idcs, pools):
        total *= math.comb(len(pool) + idc.server_count, idc.server_count)
    return total


def _check_inputs(s: Scenario, weight: float) -> None:
    if not 0.0 <= weight <= 1.0:
        raise ValueError("weight must lie in [0, 1]")
    problems = validate_scenario(s)
    if problems:
        raise ScenarioError(problems)
    for n, idc in enumerate(s.idcs):
        if idc.server.p_su or idc.server.p_sd:
            raise ValueError(
                f"facility {n} has start or stop surcharges; they couple the "
                "intervals, and the exhaustive reference requires them to be zero"
            )


def _refuse_if_oversized(count: int, cap: int) -> None:
    if count > cap:
        raise EnumerationCapError(
            f"the search space holds {count} integer assignments, above the "
            f"cap of {cap}; refusing to run rather than sampling a subset"
        )


def _per_server_states(s: Scenario) -> list[list[_FacilityState]]:
    """All per-facility operating states of the per-server search."""
    n_classes = len(s.workloads)
    states: list[list[_FacilityState]] = []
    for idc in s.idcs:
        spec = idc.server
        mixes = _vm_mixes(idc, s.workloads)
        mix_caps = [
            tuple(
                r * w.cores_per_vm * w.redundancy
                for r, w in zip(mix, s.workloads)
            )
            for mix in mixes
        ]
        budget = spec.u_max * spec.cpu_cores
        choices: list[tuple[int, ...] | None] = [None] + mixes
        facility: list[_FacilityState] = []
        for combo in itertools.combinations_with_replacement(
            range(len(choices)), idc.server_count
        ):
            slot_caps: list[tuple[float, ...]] = []
            slot_budgets: list[float] = []
            on_count = 0
            for i in combo:
                if i == 0:
                    slot_caps.append((0.0,) * n_classes)
                    slot_budgets.append(0.0)
                else:
                    slot_caps.append(mix_caps[i - 1])
                    slot_budgets.append(budget)
                    on_count += 1
            class_caps = np.array(
                [
                    sum(min(caps[l], b) for caps, b in zip(slot_caps, slot_budgets))
                    for l in range(n_classes)
                ]
            )
            serve_total = sum(
                min(b, sum(caps)) for caps, b in zip(slot_caps, slot_budgets)
            )
            label = tuple(
                sorted(
                    (choices[i] for i in combo),
                    key=lambda e: ((e is not None,) + (e or ())),
                )
            )
            facility.append(
                _FacilityState(
                    label=label,
                    core_count=float(spec.cpu_cores * on_count),
                    idle_kw=_gross(idc) * spec.p_base * on_count,
                    slot_caps=tuple(slot_caps),
                    slot_budgets=tuple(slot_budgets),
                    class_caps=class_caps,
                    serve_total=float(serve_total),
                )
            )
        states.append(facility)
    return states


def _batch_vectors(num_schemes: int, server_count: int) -> list[tuple[int, ...]]:
    """All batch-count vectors whose total stays within the fleet size."""
    out: list[tuple[int, ...]] = []

    def walk(idx: int, remaining: int, prefix: list[int]) -> None:
        if idx == num_schemes:
            out.append(tuple(prefix))
            return
        for count in range(remaining + 1):
            prefix.append(count)
            walk(idx + 1, remaining - count, prefix)
            prefix.pop()

    walk(0, server_count, [])
    return out


def _batched_states(
    s: Scenario, pools: Sequence[Sequence[tuple[int, ...]]]
) -> list[list[_FacilityState]]:
    """All per-facility operating states of the batched search."""
    n_classes = len(s.workloads)
    states: list[list[_FacilityState]] = []
    for n, (idc, pool) in enumerate(zip(s.idcs, pools)):
        spec = idc.server
        scheme_caps = []
        for scheme in pool:
            if len(scheme) != n_classes:
                raise ValueError(
                    f"facility {n}: scheme {scheme} does not match the "
                    f"{n_classes} workload classes"
                )
            if any(r < 0 or r != int(r) for r in scheme):
                raise ValueError(f"facility {n}: scheme {scheme} has bad counts")
            if any(r > w.availability_cap for r, w in zip(scheme, s.workloads)):
                raise ValueError(
                    f"facility {n}: scheme {scheme} breaks an availability cap"
                )
            used = sum(r * w.cores_per_vm for r, w in zip(scheme, s.workloads))
            if used > spec.cpu_cores:
                raise ValueError(
                    f"facility {n}: scheme {scheme} does not fit one server"
                )
            scheme_caps.append(
                tuple(
                    r * w.cores_per_vm * w.redundancy
                    for r, w in zip(scheme, s.workloads)
                )
            )
        budget = spec.u_max * spec.cpu_cores
        facility: list[_FacilityState] = []
        for counts in _batch_vectors(len(pool), idc.server_count):
            total = sum(counts)
            slot_caps = [
                tuple(m * c for c in caps) for m, caps in zip(counts, scheme_caps)
            ]
            slot_budgets = [budget * m for m in counts]
            class_caps = np.array(
                [
                    sum(min(caps[l], b) for caps, b in zip(slot_caps, slot_budgets))
                    for l in range(n_classes)
                ]
            )
            serve_total = sum(
                min(b, sum(caps)) for caps, b in zip(slot_caps, slot_budgets)
            )
            label = tuple(
                (tuple(scheme), m) for scheme, m in zip(pool, counts) if m
            )
            facility.append(
                _FacilityState(
                    label=label,
                    core_count=float(spec.cpu_cores * total),
                    idle_kw=_gross(idc) * spec.p_base * total,
                    slot_caps=tuple(slot_caps),
                    slot_budgets=tuple(slot_budgets),
                    class_caps=class_caps,
                    serve_total=float(serve_total),
                )
            )
        states.append(facility)
    return states


def _build_template(s: Scenario, slots: Sequence[int]) -> _IntervalTemplate:
    """One-interval program: serving slots, facility draws, radial grid.

    Slot serving caps arrive later as variable bounds, slot busy budgets and
    facility idle draws as named row updates, so one build covers every
    operating state and every interval of the horizon.
    """
    n_classes = len(s.workloads)
    builder = ProgramBuilder()

    serve_ids: list[list[list[int]]] = []
    serve_names: list[tuple[tuple[str, ...], ...]] = []
    busy_names: list[tuple[str, ...]] = []
    draw_ids: list[int] = []
    draw_names: list[str] = []
    for n, idc in enumerate(s.idcs):
        per_slot_ids: list[list[int]] = []
        per_slot_names: list[tuple[str, ...]] = []
        for k in range(slots[n]):
            row_ids: list[int] = []
            row_names: list[str] = []
            for l in range(n_classes):
                name = f"serve[{n},{k},{l}]"
                row_ids.append(builder.add_var(name, lower=0.0, upper=0.0))
                row_names.append(name)
            per_slot_ids.append(row_ids)
            per_slot_names.append(tuple(row_names))
        serve_ids.append(per_slot_ids)
        serve_names.append(tuple(per_slot_names))
        busy_names.append(
            tuple(f"busy[{n},{k}]" for k in range(slots[n]))
        )
        name = f"draw[{n}]"
        draw_ids.append(builder.add_var(name, lower=-math.inf))
        draw_names.append(name)

    for n, idc in enumerate(s.idcs):
        rate = _serve_rate(idc)
        for k in range(slots[n]):
            builder.add_le(
                f"busy[{n},{k}]",
                {j: 1.0 for j in serve_ids[n][k]},
                0.0,
            )
        coeffs = {draw_ids[n]: 1.0}
        for k in range(slots[n]):
            for j in serve_ids[n][k]:
                coeffs[j] = -rate
        builder.add_eq(f"draw_def[{n}]", coeffs, float(idc.p_other))

    served_names = []
    for l in range(n_classes):
        name = f"served[{l}]"
        coeffs = {
            serve_ids[n][k][l]: 1.0
            for n in range(len(s.idcs))
            for k in range(slots[n])
        }
        builder.add_eq(name, coeffs, float(s.workloads[l].demand_profile[0]))
        served_names.append(name)

    buses = s.buses
    branches = s.branches
    bus_pos = {bus.id: k for k, bus in enumerate(buses)}
    volt = []
    for k, bus in enumerate(buses):
        lo, hi = (1.0, 1.0) if k == 0 else (bus.v_min, bus.v_max)
        volt.append(builder.add_var(f"volt[{bus.id}]", lower=lo, upper=hi))
    p_flow, q_flow, current = [], [], []
    for e, br in enumerate(branches):
        p_flow.append(builder.add_var(f"pline[{e}]", lower=-math.inf))
        q_flow.append(builder.add_var(f"qline[{e}]", lower=-math.inf))
        current.append(builder.add_var(f"amp[{e}]", lower=0.0, upper=br.l_max))
    root_p = builder.add_var(
        "import_p",
        lower=0.0,
        upper=s.root.p_max / _S_BASE_KVA,
        objective=s.root.purchase_price * _S_BASE_KVA,
    )
    root_q = builder.add_var(
        "import_q",
        lower=-s.root.q_max / _S_BASE_KVA,
        upper=s.root.q_max / _S_BASE_KVA,
    )
    gen_p, gen_q, gen_p_names = [], [], []
    for g, gen in enumerate(s.generators):
        name = f"gen_p[{g}]"
        gen_p.append(
            builder.add_var(
                name,
                lower=gen.p_min[0] / _S_BASE_KVA,
                upper=gen.p_max[0] / _S_BASE_KVA,
                objective=gen.unit_cost * _S_BASE_KVA,
            )
        )
        gen_p_names.append(name)
        gen_q.append(
            builder.add_var(
                f"gen_q[{g}]",
                lower=gen.q_min / _S_BASE_KVA,
                upper=gen.q_max / _S_BASE_KVA,
            )
        )

    into: dict[int, list[int]] = {k: [] for k in range(len(buses))}
    outof: dict[int, list[int]] = {k: [] for k in range(len(buses))}
    for e, br in enumerate(branches):
        outof[bus_pos[br.from_bus]].append(e)
        into[bus_pos[br.to_bus]].append(e)

    pbal_names, qbal_names = [], []
    for k, bus in enumerate(buses):
        p_coeffs: dict[int, float] = {}
        q_coeffs: dict[int, float] = {}
        for e in into[k]:
            br = branches[e]
            p_coeffs[p_flow[e]] = 1.0
            p_coeffs[current[e]] = p_coeffs.get(current[e], 0.0) - br.r
            q_coeffs[q_flow[e]] = 1.0
            q_coeffs[current[e]] = q_coeffs.get(current[e], 0.0) - br.x
        for e in outof[k]:
            p_coeffs[p_flow[e]] = p_coeffs.get(p_flow[e], 0.0) - 1.0
            q_coeffs[q_flow[e]] = q_coeffs.get(q_flow[e], 0.0) - 1.0
        if k == 0:
            p_coeffs[root_p] = 1.0
            q_coeffs[root_q] = 1.0
        if bus.generator is not None:
            p_coeffs[gen_p[bus.generator]] = 1.0
            q_coeffs[gen_q[bus.generator]] = 1.0
        if bus.idc is not None:
            idc = s.idcs[bus.idc]
            ratio = math.tan(math.acos(idc.power_factor))
            p_coeffs[draw_ids[bus.idc]] = -1.0 / _S_BASE_KVA
            q_coeffs[draw_ids[bus.idc]] = -ratio / _S_BASE_KVA
        pname, qname = f"flow_p[{bus.id}]", f"flow_q[{bus.id}]"
        builder.add_eq(pname, p_coeffs, bus.load_p_profile[0] / _S_BASE_KVA)
        builder.add_eq(qname, q_coeffs, bus.load_q_profile[0] / _S_BASE_KVA)
        pbal_names.append(pname)
        qbal_names.append(qname)

    for e, br in enumerate(branches):
        head = bus_pos[br.from_bus]
        tail = bus_pos[br.to_bus]
        builder.add_eq(
            f"drop[{e}]",
            {
                volt[tail]: 1.0,
                volt[head]: -1.0,
                p_flow[e]: 2.0 * br.r,
                q_flow[e]: 2.0 * br.x,
                current[e]: -(br.r**2 + br.x**2),
            },
            0.0,
        )
        builder.add_soc(
            [
                ({current[e]: 1.0, volt[head]: 1.0}, 0.0),
                ({p_flow[e]: 2.0}, 0.0),
                ({q_flow[e]: 2.0}, 0.0),
                ({current[e]: 1.0, volt[head]: -1.0}, 0.0),
            ]
        )

    return _IntervalTemplate(
        program=builder.build(),
        serve_names=tuple(serve_names),
        busy_names=tuple(busy_names),
        draw_names=tuple(draw_names),
        served_names=tuple(served_names),
        pbal_names=tuple(pbal_names),
        qbal_names=tuple(qbal_names),
        gen_p_names=tuple(gen_p_names),
    )


def _interval_program(
    template: _IntervalTemplate, s: Scenario, t: int
) -> ConicProgram:
    """The template with interval t's demands, loads and generator limits."""
    eq_updates: dict[str, float] = {}
    for l, w in enumerate(s.workloads):
        eq_updates[template.served_names[l]] = float(w.demand_profile[t])
    for k, bus in enumerate(s.buses):
        eq_updates[template.pbal_names[k]] = bus.load_p_profile[t] / _S_BASE_KVA
        eq_updates[template.qbal_names[k]] = bus.load_q_profile[t] / _S_BASE_KVA
    program = template.program.with_eq_rhs(eq_updates)
    if template.gen_p_names:
        bounds = {
            name: (gen.p_min[t] / _S_BASE_KVA, gen.p_max[t] / _S_BASE_KVA)
            for name, gen in zip(template.gen_p_names, s.generators)
        }
        program = program.with_bounds(bounds)
    return program


def _price_floor(s: Scenario) -> float:
    """A unit energy price no supply source can undercut."""
    prices = [s.root.purchase_price] + [g.unit_cost for g in s.generators]
    return min(prices)


def _search(
    s: Scenario,
    states: list[list[_FacilityState]],
    weight: float,
    cost_ref: float,
    core_ref: float,
    tol: float,
    candidates: int,
) -> OracleResult:
    """Interval-by-interval exhaustive minimization over facility states.

    States are visited in ascending order of a valid objective lower bound
    (idle draw, serving floor and a fleet-wide price floor), so the walk can
    stop as soon as the bound reaches the incumbent; everything skipped is
    provably no better.  Aggregate capacity screening drops states that
    cannot cover demand before any program is solved.
    """
    demand = np.array([w.demand_profile for w in s.workloads], dtype=float)
    template = _build_template(s, [len(f[0].slot_caps) for f in states])
    floor = _price_floor(s)
    p_other_total = sum(idc.p_other for idc in s.idcs)
    serve_rate_floor = min((_serve_rate(idc) for idc in s.idcs), default=0.0)

    evaluations = 0
    supply_cost = 0.0
    core_hours = 0.0
    interval_costs: list[float] = []
    assignments: list[tuple[tuple, ...]] = []

    for t in range(s.horizon):
        program_t = _interval_program(template, s, t)
        lam = demand[:, t] if demand.size else np.zeros(0)
        lam_total = float(lam.sum())
        base_load = sum(bus.load_p_profile[t] for bus in s.buses)

        ranked: list[tuple[float, tuple[int, ...]]] = []
        for combo in itertools.product(*(range(len(f)) for f in states)):
            chosen = [states[n][i] for n, i in enumerate(combo)]
            caps = sum(st.class_caps for st in chosen)
            if np.any(caps < lam - 1e-9):
                continue
            if sum(st.serve_total for st in chosen) < lam_total - 1e-9:
                continue
            cores = sum(st.core_count for st in chosen)
            idle = sum(st.idle_kw for st in chosen)
            bound = (1.0 - weight) * cores / core_ref + weight * floor * (
                base_load + p_other_total + idle + serve_rate_floor * lam_total
            ) / cost_ref
            ranked.append((bound, combo))
        ranked.sort()

        best_value = math.inf
        best_cost = 0.0
        best_cores = 0.0
        best_combo: tuple[int, ...] | None = None
        for bound, combo in ranked:
            if bound >= best_value:
                break
            chosen = [states[n][i] for n, i in enumerate(combo)]
            eq_updates: dict[str, float] = {}
            ub_updates: dict[str, float] = {}
            bound_updates: dict[str, tuple[float, float]] = {}
            for n, st in enumerate(chosen):
                eq_updates[f"draw_def[{n}]"] = s.idcs[n].p_other + st.idle_kw
                for k, b in enumerate(st.slot_budgets):
                    if b:
                        ub_updates[template.busy_names[n][k]] = b
                    for l, cap in enumerate(st.slot_caps[k]):
                        if cap:
                            bound_updates[template.serve_names[n][k][l]] = (0.0, cap)
            program = program_t.with_eq_rhs(eq_updates).with_ub_rhs(ub_updates)
            if bound_updates:
                program = program.with_bounds(bound_updates)
            report = solve_conic(program, tol=tol)
            evaluations += 1
            if report.status == "infeasible":
                continue
            if report.status != "optimal":
                raise RuntimeError(
                    f"reference solve ended with status {report.status}"
                )
            cores = sum(st.core_count for st in chosen)
            value = (
                weight * report.objective / cost_ref
                + (1.0 - weight) * cores / core_ref
            )
            if value < best_value:
                best_value = value
                best_cost = report.objective
                best_cores = cores
                best_combo = combo

        if best_combo is None:
            raise NoFeasibleAssignmentError(
                f"interval {t}: no integer assignment admits a feasible "
                "network operation under the demand and grid limits"
            )
        supply_cost += best_cost
        core_hours += best_cores
        interval_costs.append(best_cost)
        assignments.append(
            tuple(states[n][i].label for n, i in enumerate(best_combo))
        )

    objective = (
        weight * supply_cost / cost_ref + (1.0 - weight) * core_hours / core_ref
    )
    return OracleResult(
        objective=objective,
        supply_cost=supply_cost,
        active_core_hours=core_hours,
        interval_costs=tuple(interval_costs),
        assignments=tuple(assignments),
        candidates=candidates,
        evaluations=evaluations,
    )


def brute_force_initial(
    s: Scenario,
    weight: float,
    *,
    cost_ref: float = 1.0,
    core_ref: float = 1.0,
    cap: int = ORACLE_ASSIGNMENT_CAP,
    tol: float = 1e-8,
) -> OracleResult:
    """Global optimum of the per-server model by exhaustive enumeration.

    Pass the production run's ``cost_ref`` and ``core_ref`` to make the
    returned objective directly comparable with its scalarized value.
    """
    _check_inputs(s, weight)
    count = count_initial_assignments(s)
    _refuse_if_oversized(count, cap)
    return _search(s, _per_server_states(s), weight, cost_ref, core_ref, tol, count)


def brute_force_reconstructed(
    s: Scenario,
    pools: Sequence[Sequence[tuple[int, ...]]],
    weight: float,
    *,
    cost_ref: float = 1.0,
    core_ref: float = 1.0,
    cap: int = ORACLE_ASSIGNMENT_CAP,
    tol: float = 1e-8,
) -> OracleResult:
    """Global optimum of the batched model over the supplied scheme pools.

    ``pools[n]`` lists facility n's deployment schemes as plain VM-count
    tuples.  With the full feasible scheme set this optimum must match the
    per-server search; with a subset it is an upper bound on it.
    """
    _check_inputs(s, weight)
    count = count_batched_assignments(s, pools)
    _refuse_if_oversized(count, cap)
    return _search(
        s, _batched_states(s, pools), weight, cost_ref, core_ref, tol, count
    )
