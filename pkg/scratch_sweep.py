import time

import numpy as np

from dcgrid.scenario import load_scenario, bundled_scenario_path
from dcgrid.decomposition import compute_server_floor, solve_coordinated

s = load_scenario(bundled_scenario_path("case33_idc.json"))
floor = compute_server_floor(s)
print("floor:", np.unique(floor))

points = []
for w in [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]:
    t0 = time.time()
    sol = solve_coordinated(s, weight=w)
    counts = sum(c.sum(axis=0) for c in sol.schedule.counts)
    points.append((w, sol.supply_cost, sol.active_core_hours, sol.utilization))
    print(
        f"w={w:.2f} status={sol.status} it={len(sol.iterations)} "
        f"z2={sol.supply_cost:.3f} z4={sol.active_core_hours:.0f} "
        f"util={sol.utilization*100:.2f} cols={sol.columns_per_idc} "
        f"servers[min,max]=({counts.min():.0f},{counts.max():.0f}) "
        f"({time.time()-t0:.1f}s)"
    )

print("\ndistinct (z2, z4):")
seen = sorted(set((round(p[1], 2), round(p[2], 1)) for p in points))
for z2, z4 in seen:
    print(f"  z2={z2:.2f} z4={z4:.0f}")
