import time

from dcgrid.oracle import brute_force_initial
from dcgrid.scenario import random_tiny_scenario
from dcgrid.decomposition import solve_coordinated

t0 = time.time()
for seed, weight in [(0, 0.1), (1, 0.3), (2, 0.5), (3, 0.7), (4, 0.9), (5, 0.5), (6, 0.2), (7, 0.8)]:
    s = random_tiny_scenario(seed)
    sol = solve_coordinated(s, weight, eps=1e-4)
    orc = brute_force_initial(s, weight, cost_ref=sol.cost_ref, core_ref=sol.core_ref)
    rel = abs(sol.scalarized_objective - orc.objective) / max(1.0, abs(orc.objective))
    flag = "ANCHOR" if abs(sol.scalarized_objective - 1.0) < 1e-9 else "mixed "
    ok = "OK " if rel < 1e-3 else "FAIL"
    bound_ok = sol.scalarized_objective >= orc.objective - 1e-6 * max(1.0, abs(orc.objective))
    print(
        f"{ok} seed {seed} w {weight}: coord {sol.scalarized_objective:.8f} "
        f"oracle {orc.objective:.8f} rel {rel:.2e} {flag} bound_ok {bound_ok} "
        f"iters {len(sol.iterations)}"
    )
print(f"total {time.time() - t0:.1f}s")
