"""Second-order-cone branch-flow optimal power flow on the radial network.

Per interval, the model carries squared voltages ``v``, directed branch flows
``P, Q``, squared currents ``l``, generator outputs and the root import, tied
together by nodal balance, the voltage-drop recursion and the rotated-cone
relaxation ``||(2P, 2Q, l - v)|| <= l + v`` of ``P^2 + Q^2 = l v``.  Intervals
share no constraints and are assembled as one block program so a single solve
yields every interval's primal values and duals.

Flows are modeled in per-unit on ``s_base_kva`` (the bundled cases use a
10 MVA, 12.66 kV base) and reported in kW/kvar.  Data-center power enters in
kW, either fixed through named equalities (one per center and interval, whose
duals are the marginal supply costs) or as externally supplied variable
handles for monolithic co-optimization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .conic import ConicProgram, ProgramBuilder, SolveReport, solve_conic
from .scenario import Scenario

__all__ = [
    "NetworkIndex",
    "NetworkState",
    "OpfModel",
    "add_network_block",
    "build_opf",
    "solve_opf",
    "check_exactness",
    "extract_coupling_duals",
    "elastic_penalty_rate",
]

DEFAULT_S_BASE_KVA = 10000.0


@dataclass(frozen=True)
class NetworkIndex:
    """Variable positions of one assembled network block."""

    v: np.ndarray
    p_flow: np.ndarray
    q_flow: np.ndarray
    current: np.ndarray
    gen_p: np.ndarray
    gen_q: np.ndarray
    root_p: np.ndarray
    root_q: np.ndarray
    idc_p: np.ndarray | None
    slack: np.ndarray | None


@dataclass(frozen=True)
class OpfModel:
    """A built OPF program plus everything needed to read it back."""

    program: ConicProgram
    index: NetworkIndex
    scenario: Scenario
    s_base_kva: float
    elastic: bool

    def with_fixed_power(self, idc_power_kw: np.ndarray) -> "OpfModel":
        """Same program with new fixed data-center power (kW, shape T x idcs)."""
        updates = {}
        for t in range(self.scenario.horizon):
            for i in range(len(self.scenario.idcs)):
                updates[f"pfix[{i},{t}]"] = float(idc_power_kw[t, i])
        return replace(self, program=self.program.with_eq_rhs(updates))


@dataclass(frozen=True)
class NetworkState:
    """Solved network quantities per interval, in reporting units."""

    bus_ids: tuple[int, ...]
    branch_ends: tuple[tuple[int, int], ...]
    v: np.ndarray
    p_flow_kw: np.ndarray
    q_flow_kvar: np.ndarray
    current: np.ndarray
    gen_p_kw: np.ndarray
    gen_q_kvar: np.ndarray
    root_p_kw: np.ndarray
    root_q_kvar: np.ndarray
    s_base_kva: float


def elastic_penalty_rate(s: Scenario) -> float:
    """Slack price: 100x the costliest energy source in the scenario."""
    costs = [s.root.purchase_price] + [g.unit_cost for g in s.generators]
    return 100.0 * max(costs)


def reactive_ratio(power_factor: float) -> float:
    """tan(arccos(pf)): kvar drawn per kW at a given power factor."""
    return math.tan(math.acos(power_factor))


def add_network_block(
    builder: ProgramBuilder,
    s: Scenario,
    idc_power,
    s_base_kva: float = DEFAULT_S_BASE_KVA,
    root_voltage: float = 1.0,
    elastic: bool = False,
) -> NetworkIndex:
    """Append the full network model for every interval to ``builder``.

    ``idc_power`` is either ``None`` (no data-center load), a float array of
    fixed kW values shaped (T, idcs) which get pinned by named ``pfix[i,t]``
    equalities, or an integer array of existing builder variable indices (kW)
    to couple against.
    """
    horizon = s.horizon
    buses = s.buses
    branches = s.branches
    nb, ne = len(buses), len(branches)
    bus_pos = {bus.id: k for k, bus in enumerate(buses)}
    for br in branches:
        if br.r < 0 or br.x < 0:
            raise ValueError(f"negative impedance on branch {br.from_bus}-{br.to_bus}")

    fixed_values = None
    handles = None
    if idc_power is not None:
        arr = np.asarray(idc_power)
        if arr.shape != (horizon, len(s.idcs)):
            raise ValueError("idc_power must be shaped (horizon, idcs)")
        if np.issubdtype(arr.dtype, np.integer):
            handles = arr
        else:
            fixed_values = arr.astype(float)

    v = np.zeros((horizon, nb), dtype=np.int64)
    p_flow = np.zeros((horizon, ne), dtype=np.int64)
    q_flow = np.zeros((horizon, ne), dtype=np.int64)
    current = np.zeros((horizon, ne), dtype=np.int64)
    gen_p = np.zeros((horizon, len(s.generators)), dtype=np.int64)
    gen_q = np.zeros((horizon, len(s.generators)), dtype=np.int64)
    root_p = np.zeros(horizon, dtype=np.int64)
    root_q = np.zeros(horizon, dtype=np.int64)
    idc_p = np.zeros((horizon, len(s.idcs)), dtype=np.int64) if len(s.idcs) else None
    slack_cols: list[int] = []

    penalty = elastic_penalty_rate(s) * s_base_kva if elastic else 0.0
    price = s.root.purchase_price * s_base_kva

    for t in range(horizon):
        for k, bus in enumerate(buses):
            if k == 0:
                lo = hi = root_voltage
            else:
                lo, hi = bus.v_min, bus.v_max
            v[t, k] = builder.add_var(f"v[{bus.id},{t}]", lower=lo, upper=hi)
        for e, br in enumerate(branches):
            p_flow[t, e] = builder.add_var(f"pf[{e},{t}]", lower=-math.inf)
            q_flow[t, e] = builder.add_var(f"qf[{e},{t}]", lower=-math.inf)
            current[t, e] = builder.add_var(f"cur[{e},{t}]", lower=0.0, upper=br.l_max)
        root_p[t] = builder.add_var(
            f"rootp[{t}]", lower=0.0, upper=s.root.p_max / s_base_kva, objective=price
        )
        root_q[t] = builder.add_var(
            f"rootq[{t}]",
            lower=-s.root.q_max / s_base_kva,
            upper=s.root.q_max / s_base_kva,
        )
        for g, gen in enumerate(s.generators):
            gen_p[t, g] = builder.add_var(
                f"genp[{g},{t}]",
                lower=gen.p_min[t] / s_base_kva,
                upper=gen.p_max[t] / s_base_kva,
                objective=gen.unit_cost * s_base_kva,
            )
            gen_q[t, g] = builder.add_var(
                f"genq[{g},{t}]",
                lower=gen.q_min / s_base_kva,
                upper=gen.q_max / s_base_kva,
            )
        if idc_p is not None:
            for i, idc in enumerate(s.idcs):
                if handles is not None:
                    idc_p[t, i] = int(handles[t, i])
                elif fixed_values is not None:
                    # Free variable pinned by a named equality: keeps the
                    # sensitivity dual unique even when the value is zero.
                    idc_p[t, i] = builder.add_var(f"pidc[{i},{t}]", lower=-math.inf)
                    builder.add_eq(
                        f"pfix[{i},{t}]", {idc_p[t, i]: 1.0}, float(fixed_values[t, i])
                    )
                else:
                    idc_p[t, i] = builder.add_var(f"pidc[{i},{t}]", lower=0.0)

    for t in range(horizon):
        into: dict[int, list[int]] = {k: [] for k in range(nb)}
        outof: dict[int, list[int]] = {k: [] for k in range(nb)}
        for e, br in enumerate(branches):
            outof[bus_pos[br.from_bus]].append(e)
            into[bus_pos[br.to_bus]].append(e)

        for k, bus in enumerate(buses):
            p_coeffs: dict[int, float] = {}
            q_coeffs: dict[int, float] = {}
            for e in into[k]:
                br = branches[e]
                p_coeffs[p_flow[t, e]] = 1.0
                p_coeffs[current[t, e]] = -br.r
                q_coeffs[q_flow[t, e]] = 1.0
                q_coeffs[current[t, e]] = q_coeffs.get(current[t, e], 0.0) - br.x
            for e in outof[k]:
                p_coeffs[p_flow[t, e]] = p_coeffs.get(p_flow[t, e], 0.0) - 1.0
                q_coeffs[q_flow[t, e]] = q_coeffs.get(q_flow[t, e], 0.0) - 1.0
            if k == 0:
                p_coeffs[root_p[t]] = 1.0
                q_coeffs[root_q[t]] = 1.0
            if bus.generator is not None:
                p_coeffs[gen_p[t, bus.generator]] = 1.0
                q_coeffs[gen_q[t, bus.generator]] = 1.0
            if bus.idc is not None and idc_p is not None:
                idc = s.idcs[bus.idc]
                p_coeffs[idc_p[t, bus.idc]] = -1.0 / s_base_kva
                q_coeffs[idc_p[t, bus.idc]] = -reactive_ratio(idc.power_factor) / s_base_kva
            if elastic:
                for coeffs, tag in ((p_coeffs, "p"), (q_coeffs, "q")):
                    up = builder.add_var(
                        f"slack_{tag}_up[{bus.id},{t}]", lower=0.0, objective=penalty
                    )
                    dn = builder.add_var(
                        f"slack_{tag}_dn[{bus.id},{t}]", lower=0.0, objective=penalty
                    )
                    coeffs[up] = 1.0
                    coeffs[dn] = -1.0
                    slack_cols.extend((up, dn))
            builder.add_eq(f"pbal[{bus.id},{t}]", p_coeffs, bus.load_p_profile[t] / s_base_kva)
            builder.add_eq(f"qbal[{bus.id},{t}]", q_coeffs, bus.load_q_profile[t] / s_base_kva)

        for e, br in enumerate(branches):
            head = bus_pos[br.from_bus]
            tail = bus_pos[br.to_bus]
            builder.add_eq(
                f"vdrop[{e},{t}]",
                {
                    v[t, tail]: 1.0,
                    v[t, head]: -1.0,
                    p_flow[t, e]: 2.0 * br.r,
                    q_flow[t, e]: 2.0 * br.x,
                    current[t, e]: -(br.r**2 + br.x**2),
                },
                0.0,
            )
            builder.add_soc(
                [
                    ({current[t, e]: 1.0, v[t, head]: 1.0}, 0.0),
                    ({p_flow[t, e]: 2.0}, 0.0),
                    ({q_flow[t, e]: 2.0}, 0.0),
                    ({current[t, e]: 1.0, v[t, head]: -1.0}, 0.0),
                ]
            )

    return NetworkIndex(
        v=v,
        p_flow=p_flow,
        q_flow=q_flow,
        current=current,
        gen_p=gen_p,
        gen_q=gen_q,
        root_p=root_p,
        root_q=root_q,
        idc_p=idc_p,
        slack=np.array(slack_cols, dtype=np.int64) if slack_cols else None,
    )


def build_opf(
    s: Scenario,
    idc_power=None,
    s_base_kva: float = DEFAULT_S_BASE_KVA,
    root_voltage: float = 1.0,
    elastic: bool = False,
) -> OpfModel:
    """Build the standalone OPF with data-center power fixed (or absent)."""
    builder = ProgramBuilder()
    index = add_network_block(
        builder,
        s,
        idc_power,
        s_base_kva=s_base_kva,
        root_voltage=root_voltage,
        elastic=elastic,
    )
    return OpfModel(
        program=builder.build(),
        index=index,
        scenario=s,
        s_base_kva=s_base_kva,
        elastic=elastic,
    )


def extract_state(model: OpfModel, x: np.ndarray) -> NetworkState:
    """Read a primal vector back into labeled per-interval network arrays."""
    idx = model.index
    base = model.s_base_kva
    return NetworkState(
        bus_ids=tuple(bus.id for bus in model.scenario.buses),
        branch_ends=tuple((br.from_bus, br.to_bus) for br in model.scenario.branches),
        v=x[idx.v].copy(),
        p_flow_kw=x[idx.p_flow] * base,
        q_flow_kvar=x[idx.q_flow] * base,
        current=x[idx.current].copy(),
        gen_p_kw=x[idx.gen_p] * base if idx.gen_p.size else x[idx.gen_p].copy(),
        gen_q_kvar=x[idx.gen_q] * base if idx.gen_q.size else x[idx.gen_q].copy(),
        root_p_kw=x[idx.root_p] * base,
        root_q_kvar=x[idx.root_q] * base,
        s_base_kva=base,
    )


def solve_opf(model: OpfModel, tol: float = 1e-8) -> tuple[SolveReport, NetworkState | None]:
    """Solve a built OPF; returns the kernel report and the extracted state."""
    report = solve_conic(model.program, tol=tol)
    if report.status != "optimal":
        return report, None
    return report, extract_state(model, report.x)


def check_exactness(state: NetworkState) -> float:
    """Worst relative rotated-cone residual |P^2 + Q^2 - l v| / max(1, l v)."""
    worst = 0.0
    bus_pos = {b: k for k, b in enumerate(state.bus_ids)}
    for t in range(state.v.shape[0]):
        for e, (head, _) in enumerate(state.branch_ends):
            p = state.p_flow_kw[t, e] / state.s_base_kva
            q = state.q_flow_kvar[t, e] / state.s_base_kva
            lv = state.current[t, e] * state.v[t, bus_pos[head]]
            resid = abs(p * p + q * q - lv) / max(1.0, lv)
            worst = max(worst, resid)
    return worst


def conservation_residual(model: OpfModel, state: NetworkState, x: np.ndarray) -> float:
    """Relative per-interval mismatch of generation vs load, losses and centers."""
    s = model.scenario
    worst = 0.0
    for t in range(s.horizon):
        load = sum(bus.load_p_profile[t] for bus in s.buses)
        gen = float(state.gen_p_kw[t].sum()) if state.gen_p_kw.size else 0.0
        supply = gen + float(state.root_p_kw[t])
        losses = (
            sum(br.r * state.current[t, e] for e, br in enumerate(s.branches))
            * state.s_base_kva
        )
        idc = 0.0
        if model.index.idc_p is not None:
            idc = float(x[model.index.idc_p[t]].sum())
        mismatch = abs(supply - load - losses - idc)
        worst = max(worst, mismatch / max(1.0, abs(supply)))
    return worst


def extract_coupling_duals(model: OpfModel, report: SolveReport) -> np.ndarray:
    """Marginal supply cost ($/kWh per kW) of each center's fixed power.

    Entry (t, i) is the dual of equality ``pfix[i,t]``: the derivative of the
    optimal supply cost with respect to that center's fixed demand.
    """
    s = model.scenario
    if report.duals_eq is None or not len(report.duals_eq):
        raise ValueError("kernel report carries no duals")
    out = np.zeros((s.horizon, len(s.idcs)))
    for t in range(s.horizon):
        for i in range(len(s.idcs)):
            out[t, i] = report.dual_eq(model.program, f"pfix[{i},{t}]")
    return out
