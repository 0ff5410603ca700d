import time

import numpy as np

from dcgrid.scenario import load_scenario, bundled_scenario_path
from dcgrid.schemes import enumerate_feasible
from dcgrid.decomposition import (
    MasterState,
    branch_and_price,
    compute_server_floor,
    solve_coordinated,
    solve_master_lp,
)

s = load_scenario(bundled_scenario_path("case33_idc.json"))

t0 = time.time()
floor = compute_server_floor(s)
print("floor:", np.unique(floor), f"({time.time()-t0:.2f}s)")

# frozen LP value check: full pools, no floors, refs (1,1), weight 0
pools = [list(enumerate_feasible(idc.server, s.workloads)) for idc in s.idcs]
state = MasterState(scenario=s, columns=pools)
report, duals = solve_master_lp(state, weight=0.0)
print("master LP (no floor):", report.objective, "expect", 960000.0 / 99.0)

state_f = MasterState(scenario=s, columns=[list(p) for p in pools], server_floor=floor)
report_f, _ = solve_master_lp(state_f, weight=0.0)
print("master LP (floored):", report_f.objective)

t0 = time.time()
bnp = branch_and_price(state_f, weight=0.0)
print(
    f"bnp: obj={bnp.objective:.6f} bound={bnp.bound:.6f} nodes={bnp.nodes} "
    f"status={bnp.status} ({time.time()-t0:.2f}s)"
)
tot = sum(c.sum(axis=0) for c in bnp.schedule.counts)
print("servers per t:", np.unique(tot))

t0 = time.time()
sol = solve_coordinated(s, weight=0.0)
print(
    f"w=0: status={sol.status} iters={len(sol.iterations)} util={sol.utilization:.4f} "
    f"cost={sol.supply_cost:.2f} cores={sol.active_core_hours:.1f} "
    f"cols={sol.columns_per_idc} ({time.time()-t0:.2f}s)"
)

t0 = time.time()
sol5 = solve_coordinated(s, weight=0.5)
print(
    f"w=0.5: status={sol5.status} iters={len(sol5.iterations)} util={sol5.utilization:.4f} "
    f"cost={sol5.supply_cost:.2f} cores={sol5.active_core_hours:.1f} "
    f"lb={sol5.lower_bound:.6f} ub={sol5.scalarized_objective:.6f} "
    f"cols={sol5.columns_per_idc} ({time.time()-t0:.2f}s)"
)
for rec in sol5.iterations[:4]:
    print(" ", rec.format_line())
for rec in sol5.iterations[-2:]:
    print(" ", rec.format_line())
