import copy
import json
import time

import numpy as np

from dcgrid.scenario import parse_scenario
from dcgrid.branchflow import build_opf, solve_opf, check_exactness, extract_coupling_duals
from dcgrid.decomposition import compute_server_floor, solve_coordinated

with open("src/dcgrid/data/case33_idc.json") as f:
    BASE = json.load(f)


def variant(load_scale, r_scale, k_it, p_base, pv_scale, v_min=0.81):
    data = copy.deepcopy(BASE)
    for bus in data["buses"]:
        for key in ("load_p", "load_q"):
            if key in bus:
                bus[key]["scale"] = round(bus[key]["scale"] * load_scale, 6)
        if bus["id"] != 1:
            bus["v_min"] = v_min
    for br in data["branches"]:
        br["r"] = br["r"] * r_scale
        br["x"] = br["x"] * r_scale
    for idc in data["idcs"]:
        idc["server"]["k_it"] = k_it
        idc["server"]["p_base"] = p_base
    for gen in data["generators"]:
        gen["p_max"]["scale"] = pv_scale
    return parse_scenario(json.dumps(data))


def probe(name, s, eps):
    floor = compute_server_floor(s)
    print(f"[{name}] floor={np.unique(floor)}", flush=True)
    out = {}
    for w in (0.0, 1.0):
        t0 = time.time()
        try:
            sol = solve_coordinated(s, weight=w, eps=eps, max_outer=30)
        except Exception as exc:
            print(f"  w={w}: FAILED {type(exc).__name__}: {exc}", flush=True)
            return
        counts = sum(c.sum(axis=0) for c in sol.schedule.counts)
        exact = check_exactness(sol.network)
        model = build_opf(s, sol.idc_power)
        rep, st = solve_opf(model, tol=1e-7)
        if rep.status == "optimal":
            lam = extract_coupling_duals(model, rep)
        else:
            lam = np.array([np.nan])
            print(f"  (re-solve status {rep.status})")
        print(
            f"  w={w}: {sol.status} it={len(sol.iterations)} z2={sol.supply_cost:.2f} "
            f"z4={sol.active_core_hours:.0f} util={sol.utilization*100:.2f} "
            f"srv=({counts.min():.0f},{counts.max():.0f}) "
            f"lam[min,max]=({lam.min():.4f},{lam.max():.4f}) exact={exact:.1e} "
            f"warn={len(sol.warnings)} ({time.time()-t0:.1f}s)",
            flush=True,
        )
        out[w] = sol
    d_z2 = out[0.0].supply_cost - out[1.0].supply_cost
    d_z4 = out[1.0].active_core_hours - out[0.0].active_core_hours
    print(
        f"  spread: z2(w0)-z2(w1)={d_z2:.2f} $  z4(w1)-z4(w0)={d_z4:.0f} core-h",
        flush=True,
    )


def sweep(name, s, eps, weights):
    print(f"[{name}] floor={np.unique(compute_server_floor(s))}", flush=True)
    pts = []
    for w in weights:
        t0 = time.time()
        sol = solve_coordinated(s, weight=w, eps=eps, max_outer=40)
        counts = sum(c.sum(axis=0) for c in sol.schedule.counts)
        exact = check_exactness(sol.network)
        pts.append((w, sol.supply_cost, sol.active_core_hours))
        print(
            f"  w={w:.2f}: {sol.status} it={len(sol.iterations)} "
            f"z2={sol.supply_cost:.2f} z4={sol.active_core_hours:.0f} "
            f"util={sol.utilization*100:.2f} srv=({counts.min():.0f},{counts.max():.0f}) "
            f"exact={exact:.1e} warn={len(sol.warnings)} cols={sol.columns_per_idc} "
            f"({time.time()-t0:.1f}s)",
            flush=True,
        )
    uniq = sorted(set((round(z2, 2), round(z4, 1)) for _, z2, z4 in pts))
    print(f"  distinct points: {len(uniq)}")
    for z2, z4 in uniq:
        print(f"    z2={z2:.2f} z4={z4:.0f}")


import sys

which = sys.argv[1] if len(sys.argv) > 1 else "A"
if which == "A":
    probe("A load1.0 r1.0 kit11000", variant(1.0, 1.0, 11000.0, 500.0, 1200.0), 2e-4)
elif which == "B":
    probe("B load0.7 r1.75 kit11000", variant(0.7, 1.75, 11000.0, 500.0, 800.0), 2e-4)
elif which == "C":
    probe("C load0.7 r2.5 kit11000", variant(0.7, 2.5, 11000.0, 500.0, 800.0), 2e-4)
elif which == "A2":
    sweep(
        "A2 vmin0.7225",
        variant(1.0, 1.0, 11000.0, 500.0, 1200.0, v_min=0.7225),
        2e-4,
        [0.0, 0.3, 0.5, 0.7, 0.85, 1.0],
    )
