import sys
import time

from dcgrid.scenario import bundled_scenario_path, load_scenario
from dcgrid.branchflow import check_exactness
from dcgrid.decomposition import solve_coordinated

s = load_scenario(bundled_scenario_path("case33_idc.json"))
weights = [float(w) for w in sys.argv[1:]] or [0.0, 0.5, 0.9, 0.95, 0.98, 1.0]

points = {}
for w in weights:
    t0 = time.time()
    sol = solve_coordinated(s, weight=w, eps=1e-3, max_outer=100)
    dt = time.time() - t0
    counts = [
        sum(int(round(c)) for mat in sol.schedule.counts for c in mat[:, t])
        for t in range(s.horizon)
    ]
    res = check_exactness(sol.network)
    print(
        f"w={w:.3f}: {sol.status} it={len(sol.iterations)} "
        f"z2={sol.supply_cost:.2f} z4={sol.active_core_hours:.0f} "
        f"util={100 * sol.utilization:.2f} srv=({min(counts)},{max(counts)}) "
        f"exact={res:.1e} warn={len(sol.warnings)} ({dt:.1f}s)",
        flush=True,
    )
    points[w] = (round(sol.supply_cost, 2), round(sol.active_core_hours))

distinct = sorted(set(points.values()))
print(f"distinct (z2, z4) points: {len(distinct)}")
for p in distinct:
    print(f"  {p}")
