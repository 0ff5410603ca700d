"""Service deployment schemes: enumeration, dominance pruning, and pricing.

A scheme is a tuple of per-workload VM counts that fits on one server.  The
batched scheduling model has one integer batch-size variable per scheme, so
the set of schemes in play determines the model.  Small cases enumerate the
whole feasible set; large cases generate schemes on demand by pricing them
against the scheduling master's dual values.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .scenario import ServerSpec, WorkloadClass

Scheme = tuple[int, ...]

DEFAULT_ENUMERATION_CAP = 200_000


class SchemeSpaceError(ValueError):
    """Raised when the feasible scheme set is too large to enumerate."""


def scheme_core_usage(scheme: Scheme, workloads: Sequence[WorkloadClass]) -> int:
    """Cores consumed on one server by a scheme."""
    return sum(a * w.cores_per_vm for a, w in zip(scheme, workloads))


def scheme_capacity(scheme: Scheme, workloads: Sequence[WorkloadClass]) -> tuple[float, ...]:
    """Per-workload servable demand (cores/h) of one server running a scheme."""
    return tuple(a * w.cores_per_vm * w.redundancy for a, w in zip(scheme, workloads))


def scheme_is_feasible(
    scheme: Scheme, server: ServerSpec, workloads: Sequence[WorkloadClass]
) -> bool:
    """True when a scheme fits one server and honors availability caps."""
    if len(scheme) != len(workloads):
        return False
    if any(a < 0 or a != int(a) for a in scheme):
        return False
    if all(a == 0 for a in scheme):
        return False
    if any(a > w.availability_cap for a, w in zip(scheme, workloads)):
        return False
    return scheme_core_usage(scheme, workloads) <= server.cpu_cores


def enumerate_feasible(
    server: ServerSpec,
    workloads: Sequence[WorkloadClass],
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> tuple[Scheme, ...]:
    """All nonzero schemes fitting one server, in lexicographic order.

    Raises SchemeSpaceError when the count exceeds ``cap``; callers should
    then rely on pricing-driven generation instead of full enumeration.
    """
    if not workloads:
        raise ValueError("workloads must be nonempty")
    phis = [w.cores_per_vm for w in workloads]
    caps = [w.availability_cap for w in workloads]
    out: list[Scheme] = []

    def walk(idx: int, remaining: int, prefix: list[int]) -> None:
        if idx == len(workloads):
            if any(prefix):
                out.append(tuple(prefix))
                if len(out) > cap:
                    raise SchemeSpaceError(
                        f"more than {cap} feasible schemes; "
                        "enumeration disabled, use pricing-driven generation"
                    )
            return
        top = min(caps[idx], remaining // phis[idx])
        for count in range(top + 1):
            prefix.append(count)
            walk(idx + 1, remaining - count * phis[idx], prefix)
            prefix.pop()

    walk(0, server.cpu_cores, [])
    return tuple(out)


def prune_dominated(schemes: Iterable[Scheme]) -> tuple[Scheme, ...]:
    """Keep only schemes not componentwise dominated by another in the set."""
    pool = sorted(set(schemes))
    kept = []
    for a in pool:
        dominated = any(
            b != a and all(bi >= ai for bi, ai in zip(b, a)) for b in pool
        )
        if not dominated:
            kept.append(a)
    return tuple(kept)


@dataclass(frozen=True)
class PricingDuals:
    """Dual values a single facility's pricing problem works against.

    power_cost: length-T marginal cost of one kW drawn by this facility.
    service_value: (num_workloads, T) value of serving one core-hour of each
        workload, from the demand-balance rows.
    batch_cost: cost of keeping one scheme batch active for one interval (the
        active-core objective weight times the core count, net of any duals on
        rows counting batches); scalar or length-T array.
    cooling_overhead: the facility's cooling multiplier minus one.
    """

    power_cost: np.ndarray
    service_value: np.ndarray
    batch_cost: float | np.ndarray
    cooling_overhead: float


def _interval_costs(
    scheme: Scheme,
    server: ServerSpec,
    workloads: Sequence[WorkloadClass],
    duals: PricingDuals,
) -> np.ndarray:
    """c_t for one scheme: fixed cost plus the best flow assignment's cost."""
    horizon = duals.power_cost.shape[0]
    gross = 1.0 + duals.cooling_overhead
    batch_cost = np.broadcast_to(
        np.asarray(duals.batch_cost, dtype=float), (horizon,)
    )
    base = batch_cost + duals.power_cost * gross * server.p_base / 1000.0
    caps = scheme_capacity(scheme, workloads)
    budget = server.u_max * server.cpu_cores
    coef = (
        duals.power_cost[None, :] * gross * server.k_it / (1000.0 * server.cpu_cores)
        - duals.service_value
    )
    costs = np.array(base, dtype=float, copy=True)
    for t in range(horizon):
        remaining = budget
        gain = 0.0
        for l in sorted(range(len(workloads)), key=lambda i: coef[i, t]):
            if coef[l, t] >= 0.0 or remaining <= 0.0:
                break
            take = min(caps[l], remaining)
            gain += coef[l, t] * take
            remaining -= take
        costs[t] += gain
    return costs


def scheme_reduced_cost(
    scheme: Scheme,
    server: ServerSpec,
    workloads: Sequence[WorkloadClass],
    duals: PricingDuals,
) -> float:
    """Reduced cost of a scheme: only intervals where running it helps count."""
    costs = _interval_costs(scheme, server, workloads, duals)
    return float(np.minimum(costs, 0.0).sum())


def _maximal_completion(
    prefix: list[int],
    idx: int,
    remaining: int,
    phis: Sequence[int],
    caps: Sequence[int],
) -> Scheme:
    """Componentwise upper bound on any completion of a prefix."""
    tail = [min(caps[i], remaining // phis[i]) for i in range(idx, len(phis))]
    return tuple(prefix) + tuple(tail)


def price_schemes(
    server: ServerSpec,
    workloads: Sequence[WorkloadClass],
    duals: PricingDuals,
    existing: Iterable[Scheme] = (),
    tol: float = 1e-6,
    limit: int | None = None,
) -> list[tuple[Scheme, float]]:
    """Schemes with reduced cost below -tol, best first.

    Interval cost is nonincreasing when any VM count grows, so the minimum
    reduced cost is attained on the maximal-scheme frontier; the search walks
    VM-count vectors depth first, visits only undominated completions, and
    prunes with the optimistic bound given by each prefix's componentwise
    maximal completion.  No full scheme set is materialized.
    """
    if duals.power_cost.shape[0] != duals.service_value.shape[1]:
        raise ValueError("dual horizons disagree")
    if duals.service_value.shape[0] != len(workloads):
        raise ValueError("missing dual rows for declared workloads")
    known = set(existing)
    phis = [w.cores_per_vm for w in workloads]
    caps = [w.availability_cap for w in workloads]
    found: dict[Scheme, float] = {}

    def walk(idx: int, remaining: int, prefix: list[int]) -> None:
        bound_scheme = _maximal_completion(prefix, idx, remaining, phis, caps)
        if not any(bound_scheme):
            return
        bound = scheme_reduced_cost(bound_scheme, server, workloads, duals)
        if bound >= -tol:
            return
        if idx == len(workloads):
            leftover = remaining
            maximal = all(
                prefix[i] == caps[i] or phis[i] > leftover
                for i in range(len(workloads))
            )
            if maximal:
                found[tuple(prefix)] = bound
            return
        top = min(caps[idx], remaining // phis[idx])
        for count in range(top, -1, -1):
            prefix.append(count)
            walk(idx + 1, remaining - count * phis[idx], prefix)
            prefix.pop()

    walk(0, server.cpu_cores, [])
    results = [(a, rc) for a, rc in found.items() if a not in known]
    results.sort(key=lambda item: (item[1], tuple(-c for c in item[0])))
    if limit is not None:
        results = results[:limit]
    return results


def greedy_fill_scheme(
    server: ServerSpec,
    workloads: Sequence[WorkloadClass],
    priority: int,
) -> Scheme | None:
    """A maximal scheme that favors one workload, then fills in declared order.

    Used to seed the scheme pool with one column per workload so the first
    master solve has a fighting chance of covering demand.
    """
    order = [priority] + [i for i in range(len(workloads)) if i != priority]
    counts = [0] * len(workloads)
    remaining = server.cpu_cores
    for i in order:
        take = min(workloads[i].availability_cap, remaining // workloads[i].cores_per_vm)
        counts[i] = take
        remaining -= take * workloads[i].cores_per_vm
    if not any(counts):
        return None
    return tuple(counts)


def seed_schemes(
    server: ServerSpec, workloads: Sequence[WorkloadClass]
) -> tuple[Scheme, ...]:
    """Deterministic starter pool: one greedy-fill scheme per workload."""
    seen = []
    for i in range(len(workloads)):
        scheme = greedy_fill_scheme(server, workloads, i)
        if scheme is not None and scheme not in seen:
            seen.append(scheme)
    return tuple(seen)


def format_schemes_csv(
    schemes: Sequence[Scheme], workloads: Sequence[WorkloadClass]
) -> str:
    """CSV text for a scheme list: one row per scheme, counts then core usage."""
    header = ",".join(f"vm_count_{i + 1}" for i in range(len(workloads)))
    lines = [header + ",core_usage"]
    for a in schemes:
        lines.append(
            ",".join(str(c) for c in a) + f",{scheme_core_usage(a, workloads)}"
        )
    return "\n".join(lines) + "\n"


def max_served_flow(
    scheme: Scheme, server: ServerSpec, workloads: Sequence[WorkloadClass]
) -> float:
    """Largest total flow one server running a scheme can absorb (cores/h)."""
    total_cap = sum(scheme_capacity(scheme, workloads))
    return min(total_cap, server.u_max * server.cpu_cores)


__all__ = [
    "Scheme",
    "SchemeSpaceError",
    "PricingDuals",
    "enumerate_feasible",
    "prune_dominated",
    "price_schemes",
    "scheme_reduced_cost",
    "scheme_core_usage",
    "scheme_capacity",
    "scheme_is_feasible",
    "seed_schemes",
    "greedy_fill_scheme",
    "format_schemes_csv",
    "max_served_flow",
]
