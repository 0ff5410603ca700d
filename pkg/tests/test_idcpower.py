"""IDC power block tests: arithmetic, counting, equivalence of both forms."""

import dataclasses
import json
import math

import numpy as np
import pytest

from dcgrid.conic import evaluate_solution
from dcgrid.idcpower import (
    CapacityError,
    IdcSchedule,
    build_initial_block,
    build_reconstructed_block,
    check_fleet_capacity,
    expand_schedule_to_servers,
    idc_power_from_schedule,
    reactive_from_active,
    schedule_to_batched_vector,
    server_power,
)
from dcgrid.scenario import ServerSpec, parse_scenario, random_tiny_scenario
from dcgrid.schemes import enumerate_feasible, scheme_capacity


def idc_scenario(
    horizon=1,
    server_count=1,
    p_base=50.0,
    k_it=1150.0,
    demand=((0.0,),),
    phis=(4,),
    caps=(3,),
    n_idcs=1,
    p_other=0.0,
):
    doc = {
        "horizon": horizon,
        "buses": [{"id": 0, "v_min": 1.0, "v_max": 1.0, "idc": i} for i in [0]]
        + [
            {"id": b + 1, "v_min": 0.81, "v_max": 1.21, "idc": b + 1}
            for b in range(n_idcs - 1)
        ],
        "branches": [
            {"from": 0, "to": b + 1, "r": 0.01, "x": 0.01, "l_max": 25.0}
            for b in range(n_idcs - 1)
        ],
        "root": {"purchase_price": 0.075},
        "idcs": [
            {
                "bus": b,
                "server_count": server_count,
                "k_cooling": 0.15,
                "power_factor": 0.9,
                "p_other": p_other,
                "server": {
                    "cpu_cores": 16,
                    "p_base": p_base,
                    "k_it": k_it,
                    "u_max": 0.9,
                },
            }
            for b in range(n_idcs)
        ],
        "workloads": [
            {
                "cores_per_vm": phi,
                "availability_cap": cap,
                "demand": list(profile),
                "redundancy": 0.9,
            }
            for phi, cap, profile in zip(phis, caps, demand)
        ],
        "big_g": int(sum(caps)),
    }
    return parse_scenario(json.dumps(doc))


SPEC = ServerSpec(cpu_cores=16, p_base=50.0, k_it=1150.0, p_su=0.0, p_sd=0.0, u_max=0.9)


def test_server_power_points():
    assert server_power(SPEC, True, 0.0) == 50.0
    low_slope = dataclasses.replace(SPEC, k_it=1000.0)
    assert server_power(low_slope, True, 0.9) == 950.0
    assert server_power(SPEC, False, 0.0) == 0.0


def test_server_power_domain_errors():
    with pytest.raises(ValueError):
        server_power(SPEC, True, 0.95)
    with pytest.raises(ValueError):
        server_power(SPEC, False, 0.2)


def test_facility_power_arithmetic():
    s = idc_scenario(p_base=100.0, k_it=1000.0)
    sched = IdcSchedule(
        schemes=(((1,),),),
        counts=(np.array([[1000.0]]),),
        busy=(np.zeros((1, 1)),),
        flows=(np.zeros((1, 1, 1)),),
    )
    power = idc_power_from_schedule(s, sched)
    assert power.p_kw[0, 0] == pytest.approx(115.0)
    assert power.q_kvar[0, 0] == pytest.approx(55.69, abs=0.01)
    assert power.total_p_kw[0] == pytest.approx(115.0)


def test_all_off_draws_nothing():
    s = idc_scenario()
    sched = IdcSchedule(
        schemes=(((1,),),),
        counts=(np.zeros((1, 1)),),
        busy=(np.zeros((1, 1)),),
        flows=(np.zeros((1, 1, 1)),),
    )
    assert idc_power_from_schedule(s, sched).p_kw[0, 0] == 0.0


def test_reactive_conversion():
    assert reactive_from_active(np.array([115.0]), 0.9)[0] == pytest.approx(
        115.0 * math.tan(math.acos(0.9)), rel=1e-12
    )


def test_per_server_block_variable_counts():
    s = idc_scenario(
        horizon=24,
        server_count=10,
        n_idcs=3,
        phis=(4, 3),
        caps=(3, 4),
        demand=((0.0,) * 24, (0.0,) * 24),
    )
    block = build_initial_block(s)
    names = block.program.var_names
    assert sum(1 for v in names if v.startswith("son[")) == 3 * 10 * 24
    assert sum(1 for v in names if v.startswith("vm[")) == 3 * 10 * 24 * 2
    mask = block.program.integer_mask
    on_ids = [i for i, v in enumerate(names) if v.startswith("son[")]
    assert all(mask[i] for i in on_ids)


def test_zero_demand_all_off_is_feasible():
    s = idc_scenario()
    block = build_initial_block(s)
    x = np.zeros(block.program.num_vars)
    worst = max(evaluate_solution(block.program, x).values())
    assert worst <= 1e-12


def test_single_server_peak_serving_rate():
    feasible = idc_scenario(demand=((10.8,),))
    block = build_initial_block(feasible)
    from dcgrid.conic import solve_conic

    pinned = block.program.with_bounds({"son[0,0,0]": (1.0, 1.0)})
    assert solve_conic(pinned).status == "optimal"
    with pytest.raises(CapacityError):
        build_initial_block(idc_scenario(demand=((10.81,),)))


def test_fleet_capacity_check_names_the_interval():
    s = idc_scenario(horizon=2, demand=((0.0, 20.0),))
    with pytest.raises(CapacityError, match="interval 1"):
        check_fleet_capacity(s)


def test_batched_block_capacity_coefficient():
    s = idc_scenario(phis=(4, 3), caps=(3, 4), demand=((0.0,), (0.0,)))
    block = build_reconstructed_block(s, [[(3, 0)]])
    program = block.program
    row = program.ub_index["cap[0,0,0,0]"]
    batch_col = program.var_index["batch[0,0,0]"]
    dense = program.a_ub.toarray()[row]
    assert dense[batch_col] == pytest.approx(-10.8)


def test_batched_block_has_one_batch_variable_per_scheme_interval():
    s = idc_scenario(
        horizon=3,
        server_count=10,
        phis=(4, 3),
        caps=(3, 4),
        demand=((0.0,) * 3, (0.0,) * 3),
    )
    pool = enumerate_feasible(s.idcs[0].server, s.workloads)
    assert len(pool) == 14
    block = build_reconstructed_block(s, [pool])
    batches = [v for v in block.program.var_names if v.startswith("batch[")]
    assert len(batches) == 14 * 3


def test_empty_pool_with_demand_is_flagged_before_solve():
    s = idc_scenario(demand=((5.0,),))
    with pytest.raises(CapacityError):
        build_reconstructed_block(s, [[]])


def test_oversized_scheme_is_rejected_by_name():
    s = idc_scenario(phis=(4,), caps=(3,))
    with pytest.raises(ValueError, match=r"\(5, \)|\(5,\)"):
        build_reconstructed_block(s, [[(5,)]])


def random_schedule(rng, s, pools):
    counts, busy, flows = [], [], []
    for n, idc in enumerate(s.idcs):
        spec = idc.server
        ncols = len(pools[n])
        count = np.zeros((ncols, s.horizon))
        flow = np.zeros((ncols, len(s.workloads), s.horizon))
        for t in range(s.horizon):
            left = idc.server_count
            for c in range(ncols):
                take = int(rng.integers(0, left + 1))
                count[c, t] = take
                left -= take
        for c, a in enumerate(pools[n]):
            caps = scheme_capacity(a, s.workloads)
            for t in range(s.horizon):
                if count[c, t] == 0:
                    continue
                raw = rng.uniform(0.0, 1.0, size=len(s.workloads)) * np.array(caps)
                raw *= count[c, t]
                budget = spec.u_max * spec.cpu_cores * count[c, t]
                if raw.sum() > budget:
                    raw *= budget / raw.sum()
                flow[c, :, t] = raw
        counts.append(count)
        flows.append(flow)
        busy.append(flow.sum(axis=1) / spec.cpu_cores)
    schemes = tuple(tuple(pool) for pool in pools)
    return IdcSchedule(
        schemes=schemes, counts=tuple(counts), busy=tuple(busy), flows=tuple(flows)
    )


def with_demand(s, sched):
    served = sched.served_totals()
    workloads = tuple(
        dataclasses.replace(w, demand_profile=tuple(float(v) for v in served[l]))
        for l, w in enumerate(s.workloads)
    )
    return dataclasses.replace(s, workloads=workloads)


def test_batched_and_per_server_forms_agree_on_random_plans():
    for seed in range(6):
        rng = np.random.default_rng(100 + seed)
        s0 = random_tiny_scenario(seed)
        pools = [
            enumerate_feasible(idc.server, s0.workloads)[:3] for idc in s0.idcs
        ]
        sched = random_schedule(rng, s0, pools)
        s = with_demand(s0, sched)

        batched = build_reconstructed_block(s, pools)
        xb = schedule_to_batched_vector(batched, sched)
        assert max(evaluate_solution(batched.program, xb).values()) <= 1e-9

        per_server = build_initial_block(s)
        xs = expand_schedule_to_servers(per_server, sched)
        assert max(evaluate_solution(per_server.program, xs).values()) <= 1e-9

        for n, idc in enumerate(s.idcs):
            limit = idc.server.u_max * sched.counts[n] + 1e-12
            assert np.all(sched.busy[n] <= limit)


def test_power_is_monotone_in_busy_level_and_batch_size():
    s = idc_scenario(server_count=5)
    base = IdcSchedule(
        schemes=(((1,),),),
        counts=(np.array([[2.0]]),),
        busy=(np.array([[0.5]]),),
        flows=(np.zeros((1, 1, 1)),),
    )
    more_busy = dataclasses.replace(base, busy=(np.array([[0.9]]),))
    more_servers = dataclasses.replace(base, counts=(np.array([[3.0]]),))
    p0 = idc_power_from_schedule(s, base).p_kw
    assert np.all(idc_power_from_schedule(s, more_busy).p_kw >= p0)
    assert np.all(idc_power_from_schedule(s, more_servers).p_kw >= p0)
