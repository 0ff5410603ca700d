"""Scheme engine tests: enumeration counts, dominance, pricing exactness."""

import itertools

import numpy as np
import pytest

from dcgrid.scenario import ServerSpec, WorkloadClass
from dcgrid.schemes import (
    PricingDuals,
    SchemeSpaceError,
    enumerate_feasible,
    format_schemes_csv,
    greedy_fill_scheme,
    max_served_flow,
    price_schemes,
    prune_dominated,
    scheme_capacity,
    scheme_core_usage,
    scheme_is_feasible,
    scheme_reduced_cost,
    seed_schemes,
)


def make_server(cores=16, k_it=1150.0):
    return ServerSpec(cpu_cores=cores, p_base=50.0, k_it=k_it, p_su=0.0, p_sd=0.0, u_max=0.9)


def make_workloads(phis, caps, eta=0.9, horizon=2):
    return tuple(
        WorkloadClass(
            cores_per_vm=phi,
            availability_cap=cap,
            demand_profile=(0.0,) * horizon,
            redundancy=eta,
        )
        for phi, cap in zip(phis, caps)
    )


def oracle_count(cores, phis, caps):
    """Independent nested-loop count of nonzero feasible schemes."""
    total = 0
    for combo in itertools.product(*(range(c + 1) for c in caps)):
        if any(combo) and sum(a * p for a, p in zip(combo, phis)) <= cores:
            total += 1
    return total


TWO_CLASS = make_workloads((4, 3), (3, 4))
SIX_CLASS = make_workloads((8, 4, 4, 8, 4, 8), (3, 1, 3, 3, 3, 3))


def test_two_class_server_has_fourteen_schemes():
    schemes = enumerate_feasible(make_server(16), TWO_CLASS)
    assert len(schemes) == 14
    assert schemes == tuple(sorted(schemes))
    assert all(scheme_is_feasible(a, make_server(16), TWO_CLASS) for a in schemes)


def test_single_slot_single_class():
    workloads = make_workloads((8,), (1,))
    assert enumerate_feasible(make_server(8), workloads) == ((1,),)


def test_six_class_server_has_364_schemes():
    schemes = enumerate_feasible(make_server(32), SIX_CLASS)
    assert len(schemes) == 364


def test_enumeration_matches_nested_loop_oracle():
    rng = np.random.default_rng(11)
    for _ in range(25):
        n_classes = int(rng.integers(1, 7))
        cores = int(rng.integers(4, 33))
        phis = tuple(int(rng.integers(1, 9)) for _ in range(n_classes))
        caps = tuple(int(rng.integers(0, 5)) for _ in range(n_classes))
        workloads = make_workloads(phis, caps)
        got = enumerate_feasible(make_server(cores), workloads)
        assert len(got) == oracle_count(cores, phis, caps)
        assert len(set(got)) == len(got)


def test_enumeration_cap_suggests_pricing():
    with pytest.raises(SchemeSpaceError, match="pricing"):
        enumerate_feasible(make_server(16), TWO_CLASS, cap=5)


def test_prune_removes_componentwise_dominated():
    assert prune_dominated([(1, 1), (1, 4)]) == ((1, 4),)
    assert prune_dominated([(2, 1)]) == ((2, 1),)


def test_prune_of_full_two_class_set_is_the_frontier():
    schemes = enumerate_feasible(make_server(16), TWO_CLASS)
    kept = prune_dominated(schemes)
    assert set(kept) == {(3, 1), (2, 2), (1, 4)}
    for a in schemes:
        dominated = any(
            b != a and all(bi >= ai for bi, ai in zip(b, a)) for b in schemes
        )
        assert (a in kept) == (not dominated)


def test_dominating_scheme_never_loses_capacity():
    schemes = enumerate_feasible(make_server(16), TWO_CLASS)
    for a in schemes:
        for b in schemes:
            if all(bi >= ai for bi, ai in zip(b, a)):
                cap_a = scheme_capacity(a, TWO_CLASS)
                cap_b = scheme_capacity(b, TWO_CLASS)
                assert all(cb >= ca for cb, ca in zip(cap_b, cap_a))


def test_capacity_and_usage_arithmetic():
    assert scheme_core_usage((3, 1), TWO_CLASS) == 15
    assert scheme_capacity((3, 0), TWO_CLASS) == (10.8, 0.0)
    assert max_served_flow((1, 4), make_server(16), TWO_CLASS) == pytest.approx(14.4)


def zero_duals(horizon=2, n_classes=2, batch_cost=1.0):
    return PricingDuals(
        power_cost=np.zeros(horizon),
        service_value=np.zeros((n_classes, horizon)),
        batch_cost=batch_cost,
        cooling_overhead=0.15,
    )


def test_pricing_with_zero_incentive_returns_nothing():
    got = price_schemes(make_server(16), TWO_CLASS, zero_duals())
    assert got == []


def test_pricing_chases_a_single_valuable_workload():
    workloads = make_workloads((4,), (3,))
    duals = PricingDuals(
        power_cost=np.zeros(1),
        service_value=np.array([[50.0]]),
        batch_cost=0.0,
        cooling_overhead=0.15,
    )
    got = price_schemes(make_server(16), workloads, duals)
    assert got[0][0] == (3,)
    assert got[0][1] == pytest.approx(-50.0 * 10.8)


def random_duals(rng, horizon, n_classes):
    return PricingDuals(
        power_cost=rng.uniform(0.0, 0.3, size=horizon),
        service_value=rng.uniform(-0.05, 0.25, size=(n_classes, horizon)),
        batch_cost=float(rng.uniform(0.0, 0.5)),
        cooling_overhead=0.15,
    )


def test_pricing_minimum_matches_full_enumeration():
    rng = np.random.default_rng(23)
    server = make_server(16)
    for _ in range(20):
        duals = random_duals(rng, horizon=3, n_classes=2)
        workloads = make_workloads((4, 3), (3, 4), horizon=3)
        full = enumerate_feasible(server, workloads)
        best_enum = min(scheme_reduced_cost(a, server, workloads, duals) for a in full)
        priced = price_schemes(server, workloads, duals, tol=1e-9)
        if best_enum < -1e-9:
            assert priced, f"enumeration found {best_enum} but pricing found nothing"
            assert priced[0][1] == pytest.approx(best_enum, abs=1e-9)
        else:
            assert priced == []


def test_pricing_minimum_matches_enumeration_six_classes():
    rng = np.random.default_rng(29)
    server = make_server(32)
    workloads = make_workloads((8, 4, 4, 8, 4, 8), (3, 1, 3, 3, 3, 3), horizon=2)
    full = enumerate_feasible(server, workloads)
    for _ in range(8):
        duals = random_duals(rng, horizon=2, n_classes=6)
        best_enum = min(scheme_reduced_cost(a, server, workloads, duals) for a in full)
        priced = price_schemes(server, workloads, duals, tol=1e-9)
        best_priced = priced[0][1] if priced else 0.0
        assert best_priced == pytest.approx(min(best_enum, 0.0), abs=1e-9)


def test_pricing_is_deterministic_and_respects_existing():
    rng = np.random.default_rng(31)
    duals = random_duals(rng, horizon=4, n_classes=2)
    workloads = make_workloads((4, 3), (3, 4), horizon=4)
    first = price_schemes(make_server(16), workloads, duals)
    second = price_schemes(make_server(16), workloads, duals)
    assert first == second
    assert first
    head = first[0][0]
    rest = price_schemes(make_server(16), workloads, duals, existing=[head])
    assert all(a != head for a, _ in rest)


def test_seed_pool_covers_each_workload():
    assert seed_schemes(make_server(16), TWO_CLASS) == ((3, 1), (1, 4))
    assert greedy_fill_scheme(make_server(16), TWO_CLASS, 1) == (1, 4)
    lone = make_workloads((40,), (2,))
    assert greedy_fill_scheme(make_server(16), lone, 0) is None


def test_csv_rendering_is_stable():
    text = format_schemes_csv([(3, 1), (1, 4)], TWO_CLASS)
    assert text == (
        "vm_count_1,vm_count_2,core_usage\n3,1,15\n1,4,16\n"
    )
