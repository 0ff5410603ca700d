"""Data-center power modeling: server power, demand constraints, power handles.

Two interchangeable constraint blocks tie computing demand to electric power:

* the per-server block declares one on/off state per server plus per-server
  VM counts, utilization, and flows — faithful but combinatorially heavy;
* the batched block groups identical servers running the same deployment
  scheme into integer batches, replacing each utilization-times-count product
  with an aggregate busy-level variable, which keeps every constraint linear.

Both expose the same named power handle per facility and interval, so the
network model and the decomposition loop do not care which form they sit on.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import acos, tan
from typing import Sequence

import numpy as np

from .conic import ConicProgram, ProgramBuilder
from .scenario import Scenario, ServerSpec
from .schemes import Scheme, scheme_capacity, scheme_is_feasible

WATTS_PER_KW = 1000.0


class CapacityError(ValueError):
    """Demand provably exceeds what the declared fleet can serve."""


def server_power(spec: ServerSpec, on: bool, u: float) -> float:
    """Steady-state watts drawn by one server at utilization u.

    Start/stop surcharges are accounted by the caller from the change
    indicators; this is the base-plus-proportional part only.
    """
    if not on:
        if u != 0.0:
            raise ValueError("utilization must be 0 when the server is off")
        return 0.0
    if u < 0.0 or u > spec.u_max + 1e-12:
        raise ValueError(f"utilization {u} outside [0, {spec.u_max}]")
    return spec.p_base + spec.k_it * u


def reactive_from_active(p_kw: np.ndarray, power_factor: float) -> np.ndarray:
    """Reactive power (kvar) implied by active power at a fixed power factor."""
    return p_kw * tan(acos(power_factor))


@dataclass(frozen=True)
class IdcSchedule:
    """A concrete batched operating plan for every facility.

    schemes: per facility, the deployment schemes in play.
    counts: per facility, (num_schemes, T) integer batch sizes.
    busy: per facility, (num_schemes, T) aggregate busy level (sum of the
        batch's per-server utilizations).
    flows: per facility, (num_schemes, num_workloads, T) served demand in
        cores per hour.
    """

    schemes: tuple[tuple[Scheme, ...], ...]
    counts: tuple[np.ndarray, ...]
    busy: tuple[np.ndarray, ...]
    flows: tuple[np.ndarray, ...]

    def active_core_hours(self, s: Scenario) -> float:
        """Total cores kept powered over the horizon (the footprint metric)."""
        total = 0.0
        for idc, counts in zip(s.idcs, self.counts):
            total += float(counts.sum()) * idc.server.cpu_cores
        return total

    def served_totals(self) -> np.ndarray:
        """(num_workloads, T) demand served summed over facilities/schemes."""
        return sum(f.sum(axis=0) for f in self.flows)


@dataclass(frozen=True)
class PowerSeries:
    """Per-facility active/reactive draw, kW and kvar, shape (T, num_idcs)."""

    p_kw: np.ndarray
    q_kvar: np.ndarray

    @property
    def total_p_kw(self) -> np.ndarray:
        return self.p_kw.sum(axis=1)


def idc_power_from_schedule(s: Scenario, sched: IdcSchedule) -> PowerSeries:
    """Evaluate each facility's electric draw from a batched operating plan."""
    horizon = s.horizon
    p = np.zeros((horizon, len(s.idcs)))
    for i, idc in enumerate(s.idcs):
        spec = idc.server
        it_watts = spec.p_base * sched.counts[i].sum(axis=0)
        it_watts = it_watts + spec.k_it * sched.busy[i].sum(axis=0)
        if spec.p_su or spec.p_sd:
            deltas = np.diff(sched.counts[i], axis=1, prepend=0.0)
            it_watts = it_watts + spec.p_su * np.clip(deltas, 0.0, None).sum(axis=0)
            it_watts = it_watts + spec.p_sd * np.clip(-deltas, 0.0, None).sum(axis=0)
        p[:, i] = (1.0 + idc.k_cooling) * it_watts / WATTS_PER_KW + idc.p_other
    q = np.column_stack(
        [reactive_from_active(p[:, i], idc.power_factor) for i, idc in enumerate(s.idcs)]
    )
    return PowerSeries(p_kw=p, q_kvar=q)


def demand_matrix(s: Scenario) -> np.ndarray:
    """(num_workloads, T) demand in cores per hour."""
    return np.array([w.demand_profile for w in s.workloads], dtype=float)


def check_fleet_capacity(s: Scenario) -> None:
    """Raise when demand provably exceeds the whole fleet's serving ability.

    Necessary conditions only: total demand against the fleet-wide busy
    budget, and each workload against its availability-capped capacity.
    """
    demand = demand_matrix(s)
    busy_budget = sum(
        idc.server_count * idc.server.u_max * idc.server.cpu_cores for idc in s.idcs
    )
    for t in range(s.horizon):
        total = float(demand[:, t].sum())
        if total > busy_budget + 1e-9:
            raise CapacityError(
                f"interval {t}: total demand {total} exceeds fleet busy budget {busy_budget}"
            )
    for l, w in enumerate(s.workloads):
        per_class = sum(
            idc.server_count
            * min(
                w.availability_cap * w.cores_per_vm * w.redundancy,
                idc.server.u_max * idc.server.cpu_cores,
            )
            for idc in s.idcs
        )
        worst = float(demand[l].max()) if s.horizon else 0.0
        if worst > per_class + 1e-9:
            raise CapacityError(
                f"workload {l}: peak demand {worst} exceeds capped capacity {per_class}"
            )


def check_column_capacity(
    s: Scenario, columns: Sequence[Sequence[Scheme]]
) -> None:
    """Raise when the given scheme pools cannot possibly cover demand."""
    demand = demand_matrix(s)
    if not s.horizon or demand.size == 0:
        return
    total_cap = 0.0
    per_class_cap = np.zeros(len(s.workloads))
    for idc, pool in zip(s.idcs, columns):
        spec = idc.server
        budget = spec.u_max * spec.cpu_cores
        best_total = 0.0
        best = np.zeros(len(s.workloads))
        for a in pool:
            caps = scheme_capacity(a, s.workloads)
            best_total = max(best_total, min(budget, sum(caps)))
            for l, c in enumerate(caps):
                best[l] = max(best[l], min(c, budget))
        total_cap += idc.server_count * best_total
        per_class_cap += idc.server_count * best
    for t in range(s.horizon):
        if float(demand[:, t].sum()) > total_cap + 1e-9:
            raise CapacityError(
                f"interval {t}: demand {float(demand[:, t].sum())} exceeds "
                f"the scheme pools' serving capacity {total_cap}"
            )
    for l in range(len(s.workloads)):
        if float(demand[l].max()) > per_class_cap[l] + 1e-9:
            raise CapacityError(
                f"workload {l}: peak demand {float(demand[l].max())} exceeds "
                f"the scheme pools' capacity {float(per_class_cap[l])}"
            )


@dataclass(frozen=True)
class PerServerIndex:
    """Variable ids for the per-server block; arrays indexed as documented."""

    on: tuple[np.ndarray, ...]  # per idc: (servers, T)
    vm: tuple[np.ndarray, ...]  # per idc: (servers, L, T)
    util: tuple[np.ndarray, ...]  # per idc: (servers, T)
    flow: tuple[np.ndarray, ...]  # per idc: (servers, L, T)
    start: tuple[np.ndarray, ...] | None
    stop: tuple[np.ndarray, ...] | None
    idc_power: np.ndarray  # (T, num_idcs)


@dataclass(frozen=True)
class BatchedIndex:
    """Variable ids for the batched block."""

    batch: tuple[np.ndarray, ...]  # per idc: (num_cols, T)
    busy: tuple[np.ndarray, ...]  # per idc: (num_cols, T)
    flow: tuple[np.ndarray, ...]  # per idc: (num_cols, L, T)
    start: tuple[np.ndarray, ...] | None
    stop: tuple[np.ndarray, ...] | None
    idc_power: np.ndarray  # (T, num_idcs)


@dataclass(frozen=True)
class IscBlock:
    """A finished computing-to-power constraint block with power handles."""

    program: ConicProgram
    scenario: Scenario
    index: PerServerIndex | BatchedIndex
    columns: tuple[tuple[Scheme, ...], ...] | None = None


def add_per_server_block(builder: ProgramBuilder, s: Scenario) -> PerServerIndex:
    """Declare the faithful per-server constraints on an open builder."""
    horizon = s.horizon
    demand = demand_matrix(s)
    n_classes = len(s.workloads)
    on_all, vm_all, util_all, flow_all = [], [], [], []
    start_all, stop_all = [], []
    any_swing = any(idc.server.p_su or idc.server.p_sd for idc in s.idcs)
    pidc = np.zeros((horizon, len(s.idcs)), dtype=int)

    for n, idc in enumerate(s.idcs):
        spec = idc.server
        servers = idc.server_count
        on = np.zeros((servers, horizon), dtype=int)
        vm = np.zeros((servers, n_classes, horizon), dtype=int)
        util = np.zeros((servers, horizon), dtype=int)
        flow = np.zeros((servers, n_classes, horizon), dtype=int)
        swing = bool(spec.p_su or spec.p_sd)
        mon = np.zeros((servers, horizon), dtype=int) if swing else None
        moff = np.zeros((servers, horizon), dtype=int) if swing else None
        for sv in range(servers):
            for t in range(horizon):
                on[sv, t] = builder.add_var(
                    f"son[{n},{sv},{t}]", lower=0.0, upper=1.0, integer=True
                )
                util[sv, t] = builder.add_var(
                    f"util[{n},{sv},{t}]", lower=0.0, upper=spec.u_max
                )
                for l, w in enumerate(s.workloads):
                    vm[sv, l, t] = builder.add_var(
                        f"vm[{n},{sv},{l},{t}]",
                        lower=0.0,
                        upper=float(w.availability_cap),
                        integer=True,
                    )
                    flow[sv, l, t] = builder.add_var(
                        f"flow[{n},{sv},{l},{t}]", lower=0.0
                    )
                if swing:
                    mon[sv, t] = builder.add_var(
                        f"mon[{n},{sv},{t}]", lower=0.0, upper=1.0, integer=True
                    )
                    moff[sv, t] = builder.add_var(
                        f"moff[{n},{sv},{t}]", lower=0.0, upper=1.0, integer=True
                    )
        for sv in range(servers):
            for t in range(horizon):
                builder.add_le(
                    f"cores[{n},{sv},{t}]",
                    {
                        int(vm[sv, l, t]): float(s.workloads[l].cores_per_vm)
                        for l in range(n_classes)
                    },
                    float(spec.cpu_cores),
                )
                glink = {int(vm[sv, l, t]): 1.0 for l in range(n_classes)}
                glink[int(on[sv, t])] = -float(s.big_g)
                builder.add_le(f"glink[{n},{sv},{t}]", glink, 0.0)
                builder.add_le(
                    f"ucap[{n},{sv},{t}]",
                    {int(util[sv, t]): 1.0, int(on[sv, t]): -spec.u_max},
                    0.0,
                )
                udef = {int(util[sv, t]): 1.0}
                for l in range(n_classes):
                    udef[int(flow[sv, l, t])] = -1.0 / spec.cpu_cores
                builder.add_eq(f"udef[{n},{sv},{t}]", udef, 0.0)
                for l, w in enumerate(s.workloads):
                    builder.add_le(
                        f"fcap[{n},{sv},{l},{t}]",
                        {
                            int(flow[sv, l, t]): 1.0,
                            int(vm[sv, l, t]): -w.cores_per_vm * w.redundancy,
                        },
                        0.0,
                    )
                if swing:
                    coeffs = {
                        int(mon[sv, t]): 1.0,
                        int(moff[sv, t]): -1.0,
                        int(on[sv, t]): -1.0,
                    }
                    if t > 0:
                        coeffs[int(on[sv, t - 1])] = 1.0
                    builder.add_eq(f"swing[{n},{sv},{t}]", coeffs, 0.0)
        on_all.append(on)
        vm_all.append(vm)
        util_all.append(util)
        flow_all.append(flow)
        start_all.append(mon)
        stop_all.append(moff)

    for n, idc in enumerate(s.idcs):
        spec = idc.server
        gross = (1.0 + idc.k_cooling) / WATTS_PER_KW
        for t in range(horizon):
            pidc[t, n] = builder.add_var(f"pidc[{n},{t}]", lower=-np.inf)
            coeffs = {int(pidc[t, n]): 1.0}
            for sv in range(idc.server_count):
                coeffs[int(on_all[n][sv, t])] = -gross * spec.p_base
                coeffs[int(util_all[n][sv, t])] = -gross * spec.k_it
                if start_all[n] is not None:
                    coeffs[int(start_all[n][sv, t])] = -gross * spec.p_su
                    coeffs[int(stop_all[n][sv, t])] = -gross * spec.p_sd
            builder.add_eq(f"pidc_def[{n},{t}]", coeffs, float(idc.p_other))

    for l in range(n_classes):
        for t in range(horizon):
            coeffs = {}
            for n, idc in enumerate(s.idcs):
                for sv in range(idc.server_count):
                    coeffs[int(flow_all[n][sv, l, t])] = 1.0
            builder.add_eq(f"balance[{l},{t}]", coeffs, float(demand[l, t]))

    return PerServerIndex(
        on=tuple(on_all),
        vm=tuple(vm_all),
        util=tuple(util_all),
        flow=tuple(flow_all),
        start=tuple(start_all) if any_swing else None,
        stop=tuple(stop_all) if any_swing else None,
        idc_power=pidc,
    )


def build_initial_block(s: Scenario) -> IscBlock:
    """The faithful per-server constraint block as a standalone program."""
    check_fleet_capacity(s)
    builder = ProgramBuilder()
    index = add_per_server_block(builder, s)
    return IscBlock(program=builder.build(), scenario=s, index=index)


def add_batched_block(
    builder: ProgramBuilder,
    s: Scenario,
    columns: Sequence[Sequence[Scheme]],
    batch_cost: Sequence[float] | None = None,
) -> BatchedIndex:
    """Declare the scheme-batched constraints on an open builder.

    ``columns[n]`` is facility n's scheme pool.  ``batch_cost[n]``, when
    given, is the objective charge per batch unit per interval (used by the
    scheduling master for the active-core objective term).
    """
    if len(columns) != len(s.idcs):
        raise ValueError("one scheme pool per facility is required")
    for n, (idc, pool) in enumerate(zip(s.idcs, columns)):
        for a in pool:
            if not scheme_is_feasible(a, idc.server, s.workloads):
                raise ValueError(
                    f"scheme {a} violates server capacity at facility {n}"
                )
    check_column_capacity(s, columns)

    horizon = s.horizon
    demand = demand_matrix(s)
    n_classes = len(s.workloads)
    batch_all, busy_all, flow_all, start_all, stop_all = [], [], [], [], []
    any_swing = any(idc.server.p_su or idc.server.p_sd for idc in s.idcs)
    pidc = np.zeros((horizon, len(s.idcs)), dtype=int)

    for n, (idc, pool) in enumerate(zip(s.idcs, columns)):
        spec = idc.server
        cost = float(batch_cost[n]) if batch_cost is not None else 0.0
        ncols = len(pool)
        batch = np.zeros((ncols, horizon), dtype=int)
        busy = np.zeros((ncols, horizon), dtype=int)
        flow = np.zeros((ncols, n_classes, horizon), dtype=int)
        swing = bool(spec.p_su or spec.p_sd)
        mup = np.zeros((ncols, horizon), dtype=int) if swing else None
        mdn = np.zeros((ncols, horizon), dtype=int) if swing else None
        for c, a in enumerate(pool):
            caps = scheme_capacity(a, s.workloads)
            for t in range(horizon):
                batch[c, t] = builder.add_var(
                    f"batch[{n},{c},{t}]",
                    lower=0.0,
                    upper=float(idc.server_count),
                    objective=cost,
                    integer=True,
                )
                busy[c, t] = builder.add_var(
                    f"busy[{n},{c},{t}]",
                    lower=0.0,
                    upper=spec.u_max * idc.server_count,
                )
                if swing:
                    mup[c, t] = builder.add_var(
                        f"mup[{n},{c},{t}]",
                        lower=0.0,
                        upper=float(idc.server_count),
                        integer=True,
                    )
                    mdn[c, t] = builder.add_var(
                        f"mdn[{n},{c},{t}]",
                        lower=0.0,
                        upper=float(idc.server_count),
                        integer=True,
                    )
                for l in range(n_classes):
                    flow[c, l, t] = builder.add_var(f"bflow[{n},{c},{l},{t}]", lower=0.0)
            for t in range(horizon):
                builder.add_le(
                    f"wcap[{n},{c},{t}]",
                    {int(busy[c, t]): 1.0, int(batch[c, t]): -spec.u_max},
                    0.0,
                )
                wdef = {int(busy[c, t]): 1.0}
                for l in range(n_classes):
                    wdef[int(flow[c, l, t])] = -1.0 / spec.cpu_cores
                builder.add_eq(f"wdef[{n},{c},{t}]", wdef, 0.0)
                for l in range(n_classes):
                    builder.add_le(
                        f"cap[{n},{c},{l},{t}]",
                        {int(flow[c, l, t]): 1.0, int(batch[c, t]): -caps[l]},
                        0.0,
                    )
                if swing:
                    coeffs = {
                        int(mup[c, t]): 1.0,
                        int(mdn[c, t]): -1.0,
                        int(batch[c, t]): -1.0,
                    }
                    if t > 0:
                        coeffs[int(batch[c, t - 1])] = 1.0
                    builder.add_eq(f"swing[{n},{c},{t}]", coeffs, 0.0)
        for t in range(horizon):
            builder.add_le(
                f"fleet[{n},{t}]",
                {int(batch[c, t]): 1.0 for c in range(ncols)},
                float(idc.server_count),
            )
        batch_all.append(batch)
        busy_all.append(busy)
        flow_all.append(flow)
        start_all.append(mup)
        stop_all.append(mdn)

    for n, (idc, pool) in enumerate(zip(s.idcs, columns)):
        spec = idc.server
        gross = (1.0 + idc.k_cooling) / WATTS_PER_KW
        for t in range(horizon):
            pidc[t, n] = builder.add_var(f"pidc[{n},{t}]", lower=-np.inf)
            coeffs = {int(pidc[t, n]): 1.0}
            for c in range(len(pool)):
                coeffs[int(batch_all[n][c, t])] = -gross * spec.p_base
                coeffs[int(busy_all[n][c, t])] = -gross * spec.k_it
                if start_all[n] is not None:
                    coeffs[int(start_all[n][c, t])] = -gross * spec.p_su
                    coeffs[int(stop_all[n][c, t])] = -gross * spec.p_sd
            builder.add_eq(f"pidc_def[{n},{t}]", coeffs, float(idc.p_other))

    for l in range(n_classes):
        for t in range(horizon):
            coeffs = {}
            for n in range(len(s.idcs)):
                for c in range(len(columns[n])):
                    coeffs[int(flow_all[n][c, l, t])] = 1.0
            builder.add_eq(f"balance[{l},{t}]", coeffs, float(demand[l, t]))

    return BatchedIndex(
        batch=tuple(batch_all),
        busy=tuple(busy_all),
        flow=tuple(flow_all),
        start=tuple(start_all) if any_swing else None,
        stop=tuple(stop_all) if any_swing else None,
        idc_power=pidc,
    )


def build_reconstructed_block(
    s: Scenario, columns: Sequence[Sequence[Scheme]]
) -> IscBlock:
    """The scheme-batched constraint block as a standalone program."""
    builder = ProgramBuilder()
    index = add_batched_block(builder, s, columns)
    return IscBlock(
        program=builder.build(),
        scenario=s,
        index=index,
        columns=tuple(tuple(pool) for pool in columns),
    )


def schedule_to_batched_vector(block: IscBlock, sched: IdcSchedule) -> np.ndarray:
    """Primal vector for a batched program from a concrete operating plan."""
    index = block.index
    if not isinstance(index, BatchedIndex):
        raise TypeError("expected a batched block")
    x = np.zeros(block.program.num_vars)
    for n in range(len(block.scenario.idcs)):
        x[index.batch[n]] = sched.counts[n]
        x[index.busy[n]] = sched.busy[n]
        x[index.flow[n]] = sched.flows[n]
        if index.start is not None and index.start[n] is not None:
            deltas = np.diff(sched.counts[n], axis=1, prepend=0.0)
            x[index.start[n]] = np.clip(deltas, 0.0, None)
            x[index.stop[n]] = np.clip(-deltas, 0.0, None)
    power = idc_power_from_schedule(block.scenario, sched)
    x[index.idc_power] = power.p_kw
    return x


def expand_schedule_to_servers(block: IscBlock, sched: IdcSchedule) -> np.ndarray:
    """Primal vector for a per-server program from a batched operating plan.

    Each batch of size k becomes k identical servers sharing the batch's
    flows equally.  Only defined for servers with no start/stop surcharge:
    with surcharges the server identity across intervals would matter.
    """
    index = block.index
    if not isinstance(index, PerServerIndex):
        raise TypeError("expected a per-server block")
    s = block.scenario
    if any(idc.server.p_su or idc.server.p_sd for idc in s.idcs):
        raise ValueError("expansion requires zero start/stop surcharges")
    x = np.zeros(block.program.num_vars)
    for n, idc in enumerate(s.idcs):
        for t in range(s.horizon):
            shelf = 0
            for c, a in enumerate(sched.schemes[n]):
                k = int(round(float(sched.counts[n][c, t])))
                if k == 0:
                    continue
                share = sched.flows[n][c, :, t] / k
                u = float(sched.busy[n][c, t]) / k
                for _ in range(k):
                    x[index.on[n][shelf, t]] = 1.0
                    x[index.util[n][shelf, t]] = u
                    for l in range(len(s.workloads)):
                        x[index.vm[n][shelf, l, t]] = float(a[l])
                        x[index.flow[n][shelf, l, t]] = share[l]
                    shelf += 1
    power = idc_power_from_schedule(s, sched)
    x[index.idc_power] = power.p_kw
    return x


__all__ = [
    "CapacityError",
    "IdcSchedule",
    "PowerSeries",
    "IscBlock",
    "PerServerIndex",
    "BatchedIndex",
    "server_power",
    "reactive_from_active",
    "idc_power_from_schedule",
    "demand_matrix",
    "check_fleet_capacity",
    "check_column_capacity",
    "add_per_server_block",
    "build_initial_block",
    "add_batched_block",
    "build_reconstructed_block",
    "schedule_to_batched_vector",
    "expand_schedule_to_servers",
]
