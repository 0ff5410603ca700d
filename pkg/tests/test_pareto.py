"""Pareto sweep, hull, and bargaining-selection tests."""

import json

import pytest

import dcgrid.pareto as pareto_mod
from dcgrid.pareto import (
    BargainingSetup,
    ParetoPoint,
    SweepFailure,
    build_frontier,
    nash_select,
    sweep_pareto,
)
from dcgrid.scenario import bundled_scenario_path, load_scenario, parse_scenario


def point(z2, z4, weight=0.0, z3=0.0):
    return ParetoPoint(weight=weight, z2=float(z2), z4=float(z4), z3=z3)


def zero_demand_scenario():
    doc = {
        "horizon": 1,
        "buses": [
            {"id": 1, "v_min": 1.0, "v_max": 1.0},
            {"id": 2, "v_min": 0.81, "v_max": 1.21, "idc": 0, "load_p": 50.0},
        ],
        "branches": [{"from": 1, "to": 2, "r": 0.01, "x": 0.01, "l_max": 25.0}],
        "root": {"purchase_price": 0.075},
        "idcs": [
            {
                "bus": 2,
                "server_count": 2,
                "k_cooling": 0.0,
                "power_factor": 1.0,
                "server": {"cpu_cores": 4, "p_base": 100.0, "k_it": 1000.0, "u_max": 1.0},
            }
        ],
        "workloads": [
            {"cores_per_vm": 4, "availability_cap": 1, "demand": 0.0, "redundancy": 1.0}
        ],
    }
    return parse_scenario(json.dumps(doc))


@pytest.fixture(scope="module")
def bundled():
    return load_scenario(bundled_scenario_path("case33_idc.json"))


@pytest.fixture(scope="module")
def bundled_sweep(bundled):
    return sweep_pareto(bundled)


def test_sweep_requires_both_endpoints(bundled):
    with pytest.raises(ValueError):
        sweep_pareto(bundled, weights=[0.0, 0.5])
    with pytest.raises(ValueError):
        sweep_pareto(bundled, weights=[0.0, 0.5, 1.2])


def test_sweep_contains_both_endpoint_solutions(bundled_sweep):
    by_weight = {p.weight: p for p in bundled_sweep}
    core_end = by_weight[0.0]
    cost_end = by_weight[1.0]
    assert cost_end.z2 <= core_end.z2
    assert core_end.z4 <= cost_end.z4
    assert -core_end.z3 >= -cost_end.z3


def test_sweep_records_every_outcome_with_positive_invariants(bundled_sweep, bundled):
    total_demand = sum(sum(w.demand_profile) for w in bundled.workloads)
    assert len(bundled_sweep) >= 3
    for p in bundled_sweep:
        assert p.z2 > 0.0
        assert p.z4 >= total_demand - 1e-9
        assert p.solution is not None


def test_zero_demand_sweep_collapses_to_one_point():
    s = zero_demand_scenario()
    points = sweep_pareto(s, weights=[0.0, 0.5, 1.0])
    assert len(points) == 1
    setup = build_frontier(points)
    assert len(setup.frontier) == 1
    picked = nash_select(setup)
    assert picked.product == 0.0
    assert picked.selected is setup.frontier[0]


def test_default_sweep_finds_at_least_three_frontier_points(bundled_sweep):
    setup = build_frontier(bundled_sweep)
    assert len(setup.frontier) >= 3


def test_sweep_failures_are_recorded_and_do_not_abort(bundled, monkeypatch):
    real = pareto_mod.solve_coordinated

    def flaky(s, weight=0.5, eps=pareto_mod.DEFAULT_EPS, **kwargs):
        if weight == 0.5:
            raise RuntimeError("synthetic mid-weight failure")
        return real(s, weight=weight, eps=eps, **kwargs)

    monkeypatch.setattr(pareto_mod, "solve_coordinated", flaky)
    failures: list[SweepFailure] = []
    points = sweep_pareto(bundled, weights=[0.0, 0.5, 1.0], failures=failures)
    assert len(failures) == 1
    assert failures[0].weight == 0.5
    assert "synthetic" in failures[0].reason
    assert {p.weight for p in points} == {0.0, 1.0}


def test_parallel_sweep_matches_sequential():
    s = zero_demand_scenario()
    seq = sweep_pareto(s, weights=[0.0, 0.5, 1.0])
    par = sweep_pareto(s, weights=[0.0, 0.5, 1.0], jobs=2)
    assert [(p.weight, p.z2, p.z4) for p in seq] == [
        (p.weight, p.z2, p.z4) for p in par
    ]


def test_frontier_drops_dominated_points():
    setup = build_frontier([point(1, 0), point(0, 1), point(1, 1)])
    assert [p.coordinates() for p in setup.frontier] == [(0.0, 1.0), (1.0, 0.0)]
    assert setup.z2_max == 1.0 and setup.z4_max == 1.0


def test_frontier_removes_collinear_interior_vertices():
    setup = build_frontier([point(0, 2), point(1, 1), point(2, 0)])
    assert [p.coordinates() for p in setup.frontier] == [(0.0, 2.0), (2.0, 0.0)]


def test_core_endpoint_is_confirmed_non_efficient_on_bundled(bundled_sweep):
    by_weight = {p.weight: p for p in bundled_sweep}
    core_end = by_weight[0.0]
    setup = build_frontier(bundled_sweep)
    cheaper_same_cores = [
        p
        for p in bundled_sweep
        if p.z4 == core_end.z4 and p.z2 < core_end.z2
    ]
    assert cheaper_same_cores, "expected a cheaper plan at the same core count"
    assert all(p.coordinates() != core_end.coordinates() for p in setup.frontier)


def test_hull_vertices_are_swept_points_and_support_the_cloud(bundled_sweep):
    setup = build_frontier(bundled_sweep)
    swept = {p.coordinates() for p in bundled_sweep}
    assert all(v.coordinates() in swept for v in setup.frontier)
    vertices = [v.coordinates() for v in setup.frontier]
    for p in bundled_sweep:
        below = False
        for (x1, y1), (x2, y2) in zip(vertices, vertices[1:]):
            if x1 - 1e-9 <= p.z2 <= x2 + 1e-9 and x2 > x1:
                frac = (p.z2 - x1) / (x2 - x1)
                hull_height = y1 + frac * (y2 - y1)
                below = p.z4 < hull_height - 1e-6 * max(1.0, abs(hull_height))
                break
        assert not below, f"swept point {p.coordinates()} lies under the hull"


def test_nash_closed_form_on_unit_antidiagonal():
    setup = build_frontier([point(0, 1), point(1, 0)])
    picked = nash_select(setup)
    assert picked.z2 == pytest.approx(0.5, abs=1e-12)
    assert picked.z4 == pytest.approx(0.5, abs=1e-12)
    assert picked.product == pytest.approx(0.25, abs=1e-12)
    assert picked.selected.coordinates() in {(0.0, 1.0), (1.0, 0.0)}


def test_nash_symmetric_frontier_selects_the_swap_fixed_point():
    setup = build_frontier([point(0, 1), point(0.3, 0.3), point(1, 0)])
    picked = nash_select(setup)
    assert (picked.z2, picked.z4) == (0.3, 0.3)
    assert picked.product == pytest.approx(0.49, abs=1e-12)


def test_nash_selection_is_undominated_among_swept(bundled_sweep):
    picked = nash_select(build_frontier(bundled_sweep))
    chosen = picked.selected
    for p in bundled_sweep:
        assert not (
            p.z2 <= chosen.z2
            and p.z4 <= chosen.z4
            and (p.z2 < chosen.z2 or p.z4 < chosen.z4)
        )


def test_nash_argmax_is_affine_invariant(bundled_sweep):
    base = nash_select(build_frontier(bundled_sweep))
    scaled_points = [
        ParetoPoint(weight=p.weight, z2=3.0 * p.z2 + 100.0, z4=p.z4, z3=p.z3)
        for p in bundled_sweep
    ]
    scaled = nash_select(build_frontier(scaled_points))
    assert scaled.selected.z2 == pytest.approx(3.0 * base.selected.z2 + 100.0)
    assert scaled.selected.z4 == pytest.approx(base.selected.z4)
    assert scaled.z2 == pytest.approx(3.0 * base.z2 + 100.0, rel=1e-9)
    assert scaled.z4 == pytest.approx(base.z4, rel=1e-9)


def test_nash_on_bundled_sits_strictly_between_endpoints(bundled_sweep):
    by_weight = {p.weight: p for p in bundled_sweep}
    picked = nash_select(build_frontier(bundled_sweep))
    chosen = picked.selected.solution
    assert chosen is not None
    core_end = by_weight[0.0].solution
    cost_end = by_weight[1.0].solution
    assert core_end.utilization > chosen.utilization > cost_end.utilization
    assert cost_end.supply_cost <= chosen.supply_cost <= core_end.supply_cost
