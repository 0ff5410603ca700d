"""Evaluation metrics for solved plans: utilization, energy, supply cost.

One summarizer turns a scenario plus a solved plan into the quantities used
to compare operating policies: average CPU utilization, per-facility and
total electric energy, the distribution operator's supply cost, and a system
energy total that closes against bus loads, facility draws and line losses.
A fixed-width table renderer lines up several summaries side by side.

Utilization deliberately uses the demand curve as its numerator rather than
the served flows: workload balance forces the two to coincide on any
consistent plan, and demand is observable without trusting the solver.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .decomposition import ScheduleSolution
from .scenario import Scenario

__all__ = [
    "InconsistencyError",
    "SummaryRecord",
    "summarize",
    "energy_closure_residual",
    "format_comparison",
]


class InconsistencyError(ValueError):
    """The plan contradicts the scenario (demand with nothing serving it)."""


@dataclass(frozen=True)
class SummaryRecord:
    """Headline quantities of one solved plan.

    ``utilization_pct`` is the interval mean of total demand over total
    powered cores, in percent; it is ``None`` when no interval has powered
    cores (nothing ran, nothing was asked).  Energies are kWh over the
    horizon; ``total_energy_kwh`` sums bus loads, facility draws and line
    losses.  ``gap`` is the final optimality gap the solver reported.
    """

    weight: float
    status: str
    utilization_pct: float | None
    idc_energy_kwh: tuple[float, ...]
    idc_energy_total_kwh: float
    dso_cost: float
    load_energy_kwh: float
    loss_energy_kwh: float
    total_energy_kwh: float
    gap: float | None
    iterations: int

    def as_dict(self) -> dict:
        return {
            "weight": self.weight,
            "status": self.status,
            "utilization_pct": self.utilization_pct,
            "idc_energy_kwh": list(self.idc_energy_kwh),
            "idc_energy_total_kwh": self.idc_energy_total_kwh,
            "dso_cost": self.dso_cost,
            "load_energy_kwh": self.load_energy_kwh,
            "loss_energy_kwh": self.loss_energy_kwh,
            "total_energy_kwh": self.total_energy_kwh,
            "gap": self.gap,
            "iterations": self.iterations,
        }

    @staticmethod
    def from_dict(data: dict) -> "SummaryRecord":
        return SummaryRecord(
            weight=float(data["weight"]),
            status=str(data["status"]),
            utilization_pct=(
                None
                if data["utilization_pct"] is None
                else float(data["utilization_pct"])
            ),
            idc_energy_kwh=tuple(float(e) for e in data["idc_energy_kwh"]),
            idc_energy_total_kwh=float(data["idc_energy_total_kwh"]),
            dso_cost=float(data["dso_cost"]),
            load_energy_kwh=float(data["load_energy_kwh"]),
            loss_energy_kwh=float(data["loss_energy_kwh"]),
            total_energy_kwh=float(data["total_energy_kwh"]),
            gap=None if data["gap"] is None else float(data["gap"]),
            iterations=int(data["iterations"]),
        )


def _powered_cores(s: Scenario, sol: ScheduleSolution, t: int) -> float:
    total = 0.0
    for idc, counts in zip(s.idcs, sol.schedule.counts):
        total += idc.server.cpu_cores * float(counts[:, t].sum())
    return total


def _loss_kw(s: Scenario, sol: ScheduleSolution, t: int) -> float:
    net = sol.network
    return float(
        sum(br.r * net.current[t, e] for e, br in enumerate(s.branches))
        * net.s_base_kva
    )


def summarize(s: Scenario, sol: ScheduleSolution) -> SummaryRecord:
    """Aggregate one solved plan into its headline quantities.

    Raises InconsistencyError when some interval carries demand but powers
    no cores; such a plan cannot have served what was asked.
    """
    demand = np.array([w.demand_profile for w in s.workloads], dtype=float)
    shares: list[float] = []
    for t in range(s.horizon):
        asked = float(demand[:, t].sum()) if demand.size else 0.0
        cores = _powered_cores(s, sol, t)
        if cores <= 0.0:
            if asked > 0.0:
                raise InconsistencyError(
                    f"interval {t}: demand of {asked} cores/h with no powered cores"
                )
            continue
        shares.append(asked / cores)
    utilization = 100.0 * float(np.mean(shares)) if shares else None

    idc_energy = tuple(
        float(sol.idc_power[:, n].sum()) for n in range(len(s.idcs))
    )
    load_energy = float(
        sum(sum(bus.load_p_profile[t] for bus in s.buses) for t in range(s.horizon))
    )
    loss_energy = float(sum(_loss_kw(s, sol, t) for t in range(s.horizon)))
    total_energy = load_energy + sum(idc_energy) + loss_energy

    return SummaryRecord(
        weight=sol.weight,
        status=sol.status,
        utilization_pct=utilization,
        idc_energy_kwh=idc_energy,
        idc_energy_total_kwh=float(sum(idc_energy)),
        dso_cost=sol.supply_cost,
        load_energy_kwh=load_energy,
        loss_energy_kwh=loss_energy,
        total_energy_kwh=total_energy,
        gap=sol.iterations[-1].gap if sol.iterations else None,
        iterations=len(sol.iterations),
    )


def energy_closure_residual(s: Scenario, sol: ScheduleSolution) -> float:
    """Worst relative mismatch of supplied energy against loads plus losses.

    Per interval, root import plus generation must equal bus loads, facility
    draws and resistive line losses; anything beyond solver tolerance means
    the plan and the network state disagree.
    """
    net = sol.network
    worst = 0.0
    for t in range(s.horizon):
        supplied = float(net.root_p_kw[t])
        if net.gen_p_kw.size:
            supplied += float(net.gen_p_kw[t].sum())
        consumed = (
            sum(bus.load_p_profile[t] for bus in s.buses)
            + float(sol.idc_power[t].sum())
            + _loss_kw(s, sol, t)
        )
        worst = max(worst, abs(supplied - consumed) / max(1.0, abs(supplied)))
    return worst


def format_comparison(rows: Sequence[tuple[str, SummaryRecord]]) -> str:
    """Fixed-width table lining up several summaries for side-by-side reads."""
    header = (
        f"{'case':<16}{'util_pct':>10}{'dso_cost':>12}"
        f"{'idc_kwh':>12}{'total_kwh':>12}{'iters':>7}"
    )
    lines = [header, "-" * len(header)]
    for label, rec in rows:
        util = f"{rec.utilization_pct:.2f}" if rec.utilization_pct is not None else "n/a"
        lines.append(
            f"{label:<16}{util:>10}{rec.dso_cost:>12.2f}"
            f"{rec.idc_energy_total_kwh:>12.1f}{rec.total_energy_kwh:>12.1f}"
            f"{rec.iterations:>7d}"
        )
    return "\n".join(lines)
