"""Exhaustive-reference tests: search behavior, refusal cap, cross-checks."""

import dataclasses
import json

import numpy as np
import pytest

from dcgrid.branchflow import build_opf, solve_opf
from dcgrid.decomposition import solve_coordinated
from dcgrid.oracle import (
    ORACLE_ASSIGNMENT_CAP,
    EnumerationCapError,
    brute_force_initial,
    brute_force_reconstructed,
    count_batched_assignments,
    count_initial_assignments,
)
from dcgrid.scenario import (
    bundled_scenario_path,
    load_scenario,
    parse_scenario,
    random_tiny_scenario,
)
from dcgrid.schemes import enumerate_feasible, prune_dominated


def tiny_scenario(demand=(2.0,), horizon=1, server_count=1, availability_cap=1):
    doc = {
        "horizon": horizon,
        "buses": [
            {"id": 1, "v_min": 1.0, "v_max": 1.0},
            {"id": 2, "v_min": 0.81, "v_max": 1.21, "idc": 0, "load_p": 50.0},
        ],
        "branches": [{"from": 1, "to": 2, "r": 0.01, "x": 0.01, "l_max": 25.0}],
        "root": {"purchase_price": 0.08},
        "idcs": [
            {
                "bus": 2,
                "server_count": server_count,
                "k_cooling": 0.1,
                "power_factor": 0.95,
                "server": {
                    "cpu_cores": 4,
                    "p_base": 100.0,
                    "k_it": 1000.0,
                    "u_max": 1.0,
                },
            }
        ],
        "workloads": [
            {
                "cores_per_vm": 4,
                "availability_cap": availability_cap,
                "demand": list(demand) if len(demand) > 1 else demand[0],
                "redundancy": 1.0,
            }
        ],
    }
    return parse_scenario(json.dumps(doc))


def active_servers(result, t=0, n=0):
    return sum(1 for entry in result.assignments[t][n] if entry is not None)


def test_low_demand_single_server_activates_exactly_one():
    s = tiny_scenario(demand=(2.0,), server_count=1)
    result = brute_force_initial(s, weight=0.5)
    assert active_servers(result) == 1
    assert result.assignments[0][0] == ((1,),)
    assert result.active_core_hours == 4.0


def test_zero_demand_turns_every_server_off():
    s = tiny_scenario(demand=(0.0,), server_count=2)
    result = brute_force_initial(s, weight=0.5)
    assert active_servers(result) == 0
    assert result.active_core_hours == 0.0
    # With every server off the objective is the cost of running the grid
    # alone, which the production network solver can price directly.
    report, _ = solve_opf(build_opf(s, np.zeros((1, 1))))
    assert result.supply_cost == pytest.approx(report.objective, rel=1e-8)
    assert result.objective == pytest.approx(0.5 * report.objective, rel=1e-8)


def test_oversized_instance_is_refused():
    s = load_scenario(bundled_scenario_path("case33_idc.json"))
    assert count_initial_assignments(s) > ORACLE_ASSIGNMENT_CAP
    with pytest.raises(EnumerationCapError, match="refusing"):
        brute_force_initial(s, weight=0.5)
    pools = [enumerate_feasible(idc.server, s.workloads) for idc in s.idcs]
    with pytest.raises(EnumerationCapError, match="refusing"):
        brute_force_reconstructed(s, pools, weight=0.5)


def test_assignment_count_formulas():
    # One 4-core server, one workload with a 4-core VM capped at one replica:
    # each server is off, on-and-idle, or on-with-one-VM.
    s = tiny_scenario(demand=(2.0, 2.0), horizon=2, server_count=2)
    assert count_initial_assignments(s) == 2 * 3**2
    # Batch counts over one scheme on two servers: batch size 0, 1 or 2.
    assert count_batched_assignments(s, [[(1,)]]) == 2 * 3
    assert count_batched_assignments(s, [[]]) == 2


def test_batched_search_matches_per_server_search():
    s = random_tiny_scenario(0)
    pools = [enumerate_feasible(idc.server, s.workloads) for idc in s.idcs]
    init = brute_force_initial(s, weight=0.5)
    recon = brute_force_reconstructed(s, pools, weight=0.5)
    rel = abs(init.objective - recon.objective) / max(1.0, abs(init.objective))
    assert rel <= 1e-6
    assert init.active_core_hours == recon.active_core_hours


def test_dominated_scheme_changes_nothing():
    s = random_tiny_scenario(3)
    full = [enumerate_feasible(idc.server, s.workloads) for idc in s.idcs]
    pruned = [prune_dominated(pool) for pool in full]
    assert any(len(a) < len(b) for a, b in zip(pruned, full))
    with_all = brute_force_reconstructed(s, full, weight=0.4)
    without = brute_force_reconstructed(s, pruned, weight=0.4)
    assert with_all.objective == pytest.approx(without.objective, rel=1e-8)


def test_single_scheme_pool_counts_servers():
    # Demand of 6 cores against 4-core batches forces exactly two batches.
    s = tiny_scenario(demand=(6.0,), server_count=3)
    result = brute_force_reconstructed(s, [[(1,)]], weight=0.5)
    assert result.assignments[0][0] == (((1,), 2),)
    assert result.active_core_hours == 8.0


def test_production_solver_never_beats_the_reference():
    for seed, weight in [(1, 0.3), (2, 0.5)]:
        s = random_tiny_scenario(seed)
        sol = solve_coordinated(s, weight, eps=1e-4)
        ref = brute_force_initial(
            s, weight, cost_ref=sol.cost_ref, core_ref=sol.core_ref
        )
        slack = 1e-6 * max(1.0, abs(ref.objective))
        assert sol.scalarized_objective >= ref.objective - slack
        rel = abs(sol.scalarized_objective - ref.objective) / max(
            1.0, abs(ref.objective)
        )
        assert rel <= 1e-3


def test_rejects_bad_weights_and_surcharged_servers():
    s = tiny_scenario()
    with pytest.raises(ValueError, match="weight"):
        brute_force_initial(s, weight=1.5)
    surcharged = dataclasses.replace(
        s,
        idcs=(
            dataclasses.replace(
                s.idcs[0],
                server=dataclasses.replace(s.idcs[0].server, p_su=10.0),
            ),
        ),
    )
    with pytest.raises(ValueError, match="surcharge"):
        brute_force_initial(surcharged, weight=0.5)


def test_objective_arithmetic_with_external_references():
    s = tiny_scenario(demand=(2.0, 3.0), horizon=2)
    result = brute_force_initial(s, weight=0.3, cost_ref=2.0, core_ref=3.0)
    assert len(result.interval_costs) == 2
    assert sum(result.interval_costs) == pytest.approx(result.supply_cost)
    expected = 0.3 * result.supply_cost / 2.0 + 0.7 * result.active_core_hours / 3.0
    assert result.objective == pytest.approx(expected, rel=1e-12)
    assert result.evaluations >= 1
    assert result.candidates == count_initial_assignments(s)
