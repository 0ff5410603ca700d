"""Objective-tradeoff sweep, efficient-frontier hull, and bargaining pick.

The coordinated solver optimizes one weighted blend of supply cost and active
core count at a time.  Sweeping the weight traces the attainable tradeoffs;
the undominated sweep outcomes, convexified, approximate the efficient
frontier; the bargaining rule then picks one operating point by maximizing
the product of both players' gains relative to their worst efficient values.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass

from .decomposition import DEFAULT_EPS, ScheduleSolution, solve_coordinated
from .scenario import Scenario

DEFAULT_WEIGHTS = tuple(i / 10.0 for i in range(11))
_INTERIOR_TOL = 1e-9


@dataclass(frozen=True)
class ParetoPoint:
    """One sweep outcome: both objective values plus the plan behind them.

    z2: supply cost in dollars.  z4: active core-hours over the horizon.
    z3: negative average utilization (derived, carried for reporting).
    """

    weight: float
    z2: float
    z4: float
    z3: float
    solution: ScheduleSolution | None = None

    def coordinates(self) -> tuple[float, float]:
        return (self.z2, self.z4)


@dataclass(frozen=True)
class SweepFailure:
    """A weight whose solve did not produce a point, with the reason."""

    weight: float
    reason: str


@dataclass(frozen=True)
class BargainingSetup:
    """Ordered hull of efficient points plus the disagreement values."""

    z2_max: float
    z4_max: float
    frontier: tuple[ParetoPoint, ...]


@dataclass(frozen=True)
class NashSelection:
    """The bargaining outcome.

    selected: the swept solution returned to the caller (for an interior
    segment maximizer this is the nearer hull vertex).  z2/z4: the exact
    maximizer coordinates on the piecewise-linear frontier.  product: the
    gain product at those exact coordinates.
    """

    selected: ParetoPoint
    z2: float
    z4: float
    product: float


def _point_from_solution(weight: float, sol: ScheduleSolution) -> ParetoPoint:
    return ParetoPoint(
        weight=weight,
        z2=float(sol.supply_cost),
        z4=float(sol.active_core_hours),
        z3=-float(sol.utilization),
        solution=sol,
    )


def _solve_one(args: tuple[Scenario, float, float]) -> ParetoPoint:
    s, weight, eps = args
    return _point_from_solution(weight, solve_coordinated(s, weight=weight, eps=eps))


def _run_weights(
    s: Scenario,
    weights: list[float],
    eps: float,
    jobs: int,
    points: list[ParetoPoint],
    failures: list[SweepFailure],
) -> None:
    if jobs > 1 and len(weights) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_solve_one, (s, w, eps)) for w in weights]
            for w, fut in zip(weights, futures):
                try:
                    points.append(fut.result())
                except Exception as exc:
                    failures.append(SweepFailure(weight=w, reason=str(exc)))
        return
    for w in weights:
        try:
            points.append(_solve_one((s, w, eps)))
        except Exception as exc:
            failures.append(SweepFailure(weight=w, reason=str(exc)))


def _dedup(points: list[ParetoPoint]) -> list[ParetoPoint]:
    seen: set[tuple[float, float]] = set()
    out = []
    for p in points:
        if p.coordinates() in seen:
            continue
        seen.add(p.coordinates())
        out.append(p)
    return out


def _bisection_weight(points: list[ParetoPoint]) -> float | None:
    """Midpoint of the adjacent weight pair whose outcomes differ the most."""
    distinct = _dedup(points)
    if len(distinct) < 2:
        return None
    ordered = sorted(points, key=lambda p: p.weight)
    span2 = max(p.z2 for p in ordered) - min(p.z2 for p in ordered)
    span4 = max(p.z4 for p in ordered) - min(p.z4 for p in ordered)
    best_gap, best_mid = 0.0, None
    for a, b in zip(ordered, ordered[1:]):
        gap = 0.0
        if span2 > 0:
            gap += abs(b.z2 - a.z2) / span2
        if span4 > 0:
            gap += abs(b.z4 - a.z4) / span4
        if gap > best_gap + 1e-12 and b.weight - a.weight > 1e-6:
            best_gap = gap
            best_mid = 0.5 * (a.weight + b.weight)
    return best_mid


def sweep_pareto(
    s: Scenario,
    weights: list[float] | tuple[float, ...] | None = None,
    eps: float = DEFAULT_EPS,
    jobs: int = 1,
    failures: list[SweepFailure] | None = None,
) -> list[ParetoPoint]:
    """One coordinated solve per weight; every outcome kept, duplicates merged.

    With ``weights`` omitted, runs the default grid of 11 uniform weights and
    one bisection refinement between the pair of adjacent weights whose
    outcomes differ the most.  Per-weight solve failures are appended to
    ``failures`` (when given) and the sweep continues.
    """
    if weights is None:
        grid = list(DEFAULT_WEIGHTS)
        refine = True
    else:
        grid = [float(w) for w in weights]
        refine = False
    if not grid:
        raise ValueError("weights must be nonempty")
    if any(not 0.0 <= w <= 1.0 for w in grid):
        raise ValueError("weights must lie in [0, 1]")
    if 0.0 not in grid or 1.0 not in grid:
        raise ValueError("weights must include both 0 and 1")

    fail_log: list[SweepFailure] = failures if failures is not None else []
    points: list[ParetoPoint] = []
    _run_weights(s, grid, eps, jobs, points, fail_log)
    if refine and points:
        mid = _bisection_weight(points)
        if mid is not None:
            _run_weights(s, [mid], eps, jobs, points, fail_log)
    return _dedup(sorted(points, key=lambda p: p.weight))


def _undominated(points: list[ParetoPoint]) -> list[ParetoPoint]:
    out = []
    for p in points:
        dominated = False
        for q in points:
            if q is p:
                continue
            if (
                q.z2 <= p.z2
                and q.z4 <= p.z4
                and (q.z2 < p.z2 or q.z4 < p.z4)
            ):
                dominated = True
                break
        if not dominated:
            out.append(p)
    return out


def build_frontier(points: list[ParetoPoint]) -> BargainingSetup:
    """Pareto-filter, then keep the lower-left convex hull by increasing z2."""
    if not points:
        raise ValueError("build_frontier needs at least one point")
    efficient = sorted(_undominated(_dedup(list(points))), key=lambda p: p.coordinates())
    hull: list[ParetoPoint] = []
    for p in efficient:
        while len(hull) >= 2:
            (x1, y1) = hull[-2].coordinates()
            (x2, y2) = hull[-1].coordinates()
            (x3, y3) = p.coordinates()
            # Drop the middle point unless the chain turns strictly upward
            # (convex in z2); equality removes collinear interior vertices.
            cross = (x2 - x1) * (y3 - y1) - (y2 - y1) * (x3 - x1)
            if cross <= 1e-12 * max(1.0, abs(x3 - x1), abs(y3 - y1)):
                hull.pop()
            else:
                break
        hull.append(p)
    return BargainingSetup(
        z2_max=max(p.z2 for p in hull),
        z4_max=max(p.z4 for p in hull),
        frontier=tuple(hull),
    )


def nash_select(setup: BargainingSetup) -> NashSelection:
    """Maximize (z2_max − z2)(z4_max − z4) over the piecewise-linear frontier.

    Each segment's product is a concave quadratic in the segment parameter,
    so the per-segment maximizer is closed-form; the best over all segments
    and vertices wins.  An interior maximizer returns the nearer vertex as
    the concrete solution and the exact coordinates numerically.
    """
    if not setup.frontier:
        raise ValueError("nash_select needs a nonempty frontier")

    def product(z2: float, z4: float) -> float:
        return (setup.z2_max - z2) * (setup.z4_max - z4)

    best_point = setup.frontier[0]
    best = NashSelection(
        selected=best_point,
        z2=best_point.z2,
        z4=best_point.z4,
        product=product(best_point.z2, best_point.z4),
    )
    for vertex in setup.frontier[1:]:
        value = product(vertex.z2, vertex.z4)
        if value > best.product + 1e-15:
            best = NashSelection(
                selected=vertex, z2=vertex.z2, z4=vertex.z4, product=value
            )
    for first, second in zip(setup.frontier, setup.frontier[1:]):
        dx = second.z2 - first.z2
        dy = second.z4 - first.z4
        if dx * dy >= 0.0:
            continue  # not a strict tradeoff segment; vertices already cover it
        a = setup.z2_max - first.z2
        b = setup.z4_max - first.z4
        s_star = (a * dy + b * dx) / (2.0 * dx * dy)
        if not _INTERIOR_TOL < s_star < 1.0 - _INTERIOR_TOL:
            continue
        z2 = first.z2 + s_star * dx
        z4 = first.z4 + s_star * dy
        value = product(z2, z4)
        if value > best.product + 1e-15:
            nearer = first if s_star <= 0.5 else second
            best = NashSelection(selected=nearer, z2=z2, z4=z4, product=value)
    return best


__all__ = [
    "ParetoPoint",
    "SweepFailure",
    "BargainingSetup",
    "NashSelection",
    "DEFAULT_WEIGHTS",
    "sweep_pareto",
    "build_frontier",
    "nash_select",
]
