"""Scenario data model: domain types, JSON loading, validation, serialization.

A scenario is one self-describing JSON document bundling the distribution
network, the data centers, the workload classes and all 24-point profiles.
Conventions: bus loads, generator limits and data-center power in kW/kvar,
per-server power in W, prices in $/kWh, impedances and squared voltages in
per-unit on the base declared by the file (the bundled cases use 12.66 kV,
10 MVA).  The first bus in the table is the root (substation) bus.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict
from importlib import resources

__all__ = [
    "BusRecord",
    "BranchRecord",
    "GeneratorSpec",
    "RootSupply",
    "ServerSpec",
    "IdcSpec",
    "WorkloadClass",
    "Scenario",
    "ScenarioError",
    "load_scenario",
    "parse_scenario",
    "validate_scenario",
    "serialize_scenario",
    "bundled_scenario_path",
    "random_tiny_scenario",
]


class ScenarioError(ValueError):
    """Raised when a scenario file is malformed or violates invariants."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("; ".join(violations))


@dataclass(frozen=True)
class BusRecord:
    """One network bus: loads, voltage box, optional generator/IDC back-links."""

    id: int
    load_p_profile: tuple[float, ...]
    load_q_profile: tuple[float, ...]
    v_min: float
    v_max: float
    generator: int | None = None
    idc: int | None = None


@dataclass(frozen=True)
class BranchRecord:
    """Directed branch of the radial network, oriented away from the root."""

    from_bus: int
    to_bus: int
    r: float
    x: float
    l_max: float


@dataclass(frozen=True)
class GeneratorSpec:
    """Dispatchable or capped renewable unit with a linear cost."""

    bus: int
    p_min: tuple[float, ...]
    p_max: tuple[float, ...]
    q_min: float
    q_max: float
    unit_cost: float


@dataclass(frozen=True)
class RootSupply:
    """Import interface at the root bus."""

    purchase_price: float
    p_max: float
    q_max: float


@dataclass(frozen=True)
class ServerSpec:
    """Homogeneous server model: idle, slope, start/stop and utilization cap."""

    cpu_cores: int
    p_base: float
    k_it: float
    p_su: float
    p_sd: float
    u_max: float


@dataclass(frozen=True)
class IdcSpec:
    """One data center: fleet size, server spec, cooling overhead, power factor."""

    bus: int
    server_count: int
    server: ServerSpec
    k_cooling: float
    p_other: float
    power_factor: float


@dataclass(frozen=True)
class WorkloadClass:
    """One request class: VM shape, replica cap, demand curve, redundancy."""

    cores_per_vm: int
    availability_cap: int
    demand_profile: tuple[float, ...]
    redundancy: float


@dataclass(frozen=True)
class Scenario:
    """Immutable, validated problem instance shared by every solver stage."""

    horizon: int
    buses: tuple[BusRecord, ...]
    branches: tuple[BranchRecord, ...]
    generators: tuple[GeneratorSpec, ...]
    root: RootSupply
    idcs: tuple[IdcSpec, ...]
    workloads: tuple[WorkloadClass, ...]
    big_g: float

    @property
    def root_bus(self) -> BusRecord:
        return self.buses[0]

    def bus_by_id(self, bus_id: int) -> BusRecord:
        for bus in self.buses:
            if bus.id == bus_id:
                return bus
        raise KeyError(bus_id)


def _expand_profile(value, horizon: int, profiles: dict, path: str) -> tuple[float, ...]:
    """Accept a constant, an explicit list, or a named profile with a scale."""
    if isinstance(value, (int, float)):
        return tuple(float(value) for _ in range(horizon))
    if isinstance(value, str):
        if value not in profiles:
            raise ScenarioError([f"{path}: unknown profile {value!r}"])
        return tuple(float(v) for v in profiles[value])
    if isinstance(value, dict):
        name = value.get("profile")
        if name not in profiles:
            raise ScenarioError([f"{path}: unknown profile {name!r}"])
        scale = float(value.get("scale", 1.0))
        return tuple(float(v) * scale for v in profiles[name])
    if isinstance(value, list):
        return tuple(float(v) for v in value)
    raise ScenarioError([f"{path}: cannot interpret profile value {value!r}"])


def parse_scenario(text: str) -> Scenario:
    """Parse a scenario document and validate it, raising on any violation."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError([f"parse error: {exc}"]) from exc
    if not isinstance(raw, dict):
        raise ScenarioError(["parse error: top level must be an object"])
    missing = [k for k in ("horizon", "buses", "branches", "root") if k not in raw]
    if missing:
        raise ScenarioError([f"missing top-level key {k!r}" for k in missing])
    horizon = int(raw["horizon"])
    profiles = raw.get("profiles", {})

    buses = []
    for i, rec in enumerate(raw["buses"]):
        buses.append(
            BusRecord(
                id=int(rec["id"]),
                load_p_profile=_expand_profile(
                    rec.get("load_p", 0.0), horizon, profiles, f"buses[{i}].load_p"
                ),
                load_q_profile=_expand_profile(
                    rec.get("load_q", 0.0), horizon, profiles, f"buses[{i}].load_q"
                ),
                v_min=float(rec.get("v_min", 0.81)),
                v_max=float(rec.get("v_max", 1.1025)),
                generator=None if rec.get("generator") is None else int(rec["generator"]),
                idc=None if rec.get("idc") is None else int(rec["idc"]),
            )
        )
    branches = [
        BranchRecord(
            from_bus=int(rec["from"]),
            to_bus=int(rec["to"]),
            r=float(rec["r"]),
            x=float(rec["x"]),
            l_max=float(rec.get("l_max", 25.0)),
        )
        for rec in raw["branches"]
    ]
    generators = [
        GeneratorSpec(
            bus=int(rec["bus"]),
            p_min=_expand_profile(
                rec.get("p_min", 0.0), horizon, profiles, f"generators[{i}].p_min"
            ),
            p_max=_expand_profile(
                rec.get("p_max", 0.0), horizon, profiles, f"generators[{i}].p_max"
            ),
            q_min=float(rec.get("q_min", 0.0)),
            q_max=float(rec.get("q_max", 0.0)),
            unit_cost=float(rec["unit_cost"]),
        )
        for i, rec in enumerate(raw.get("generators", []))
    ]
    root_rec = raw["root"]
    root = RootSupply(
        purchase_price=float(root_rec["purchase_price"]),
        p_max=float(root_rec.get("p_max", math.inf)),
        q_max=float(root_rec.get("q_max", math.inf)),
    )
    idcs = []
    for i, rec in enumerate(raw.get("idcs", [])):
        srv = rec["server"]
        idcs.append(
            IdcSpec(
                bus=int(rec["bus"]),
                server_count=int(rec["server_count"]),
                server=ServerSpec(
                    cpu_cores=int(srv["cpu_cores"]),
                    p_base=float(srv["p_base"]),
                    k_it=float(srv["k_it"]),
                    p_su=float(srv.get("p_su", 0.0)),
                    p_sd=float(srv.get("p_sd", 0.0)),
                    u_max=float(srv["u_max"]),
                ),
                k_cooling=float(rec["k_cooling"]),
                p_other=float(rec.get("p_other", 0.0)),
                power_factor=float(rec["power_factor"]),
            )
        )
    workloads = [
        WorkloadClass(
            cores_per_vm=int(rec["cores_per_vm"]),
            availability_cap=int(rec["availability_cap"]),
            demand_profile=_expand_profile(
                rec["demand"], horizon, profiles, f"workloads[{i}].demand"
            ),
            redundancy=float(rec["redundancy"]),
        )
        for i, rec in enumerate(raw.get("workloads", []))
    ]
    default_g = float(sum(w.availability_cap for w in workloads)) if workloads else 1.0
    scenario = Scenario(
        horizon=horizon,
        buses=tuple(buses),
        branches=tuple(branches),
        generators=tuple(generators),
        root=root,
        idcs=tuple(idcs),
        workloads=tuple(workloads),
        big_g=float(raw.get("big_g", default_g)),
    )
    violations = validate_scenario(scenario)
    if violations:
        raise ScenarioError(violations)
    return scenario


def load_scenario(path: str) -> Scenario:
    """Read and validate a scenario file."""
    with open(path, "r", encoding="utf-8") as handle:
        return parse_scenario(handle.read())


def validate_scenario(s: Scenario) -> list[str]:
    """Check every structural invariant; returns one message per violation."""
    out: list[str] = []
    t = s.horizon
    if t < 1:
        out.append("horizon: must be at least 1")

    seen_ids = set()
    for i, bus in enumerate(s.buses):
        where = f"buses[{i}] (id {bus.id})"
        if bus.id in seen_ids:
            out.append(f"{where}: duplicate bus id")
        seen_ids.add(bus.id)
        if not (0.0 < bus.v_min <= bus.v_max):
            out.append(f"{where}: voltage bounds need 0 < v_min <= v_max")
        if len(bus.load_p_profile) != t or len(bus.load_q_profile) != t:
            out.append(f"{where}: load profile length differs from horizon {t}")
        if bus.generator is not None and not (0 <= bus.generator < len(s.generators)):
            out.append(f"{where}: generator id {bus.generator} does not resolve")
        if bus.idc is not None and not (0 <= bus.idc < len(s.idcs)):
            out.append(f"{where}: idc id {bus.idc} does not resolve")

    for i, br in enumerate(s.branches):
        where = f"branches[{i}] ({br.from_bus}-{br.to_bus})"
        if br.r < 0 or br.x < 0:
            out.append(f"{where}: negative impedance")
        if br.l_max <= 0:
            out.append(f"{where}: l_max must be positive")
        if br.from_bus not in seen_ids or br.to_bus not in seen_ids:
            out.append(f"{where}: endpoint is not a known bus")

    # Radiality: a tree rooted at the first bus.
    if s.buses:
        if len(s.branches) != len(s.buses) - 1:
            out.append("branches: network not radial (edge count is not bus count - 1)")
        else:
            adjacency: dict[int, list[int]] = {bus.id: [] for bus in s.buses}
            ok = all(br.from_bus in adjacency and br.to_bus in adjacency for br in s.branches)
            if ok:
                for br in s.branches:
                    adjacency[br.from_bus].append(br.to_bus)
                    adjacency[br.to_bus].append(br.from_bus)
                seen = {s.root_bus.id}
                stack = [s.root_bus.id]
                while stack:
                    node = stack.pop()
                    for nxt in adjacency[node]:
                        if nxt not in seen:
                            seen.add(nxt)
                            stack.append(nxt)
                if len(seen) != len(s.buses):
                    out.append("branches: network not radial (graph is disconnected)")

    for i, gen in enumerate(s.generators):
        where = f"generators[{i}]"
        if len(gen.p_min) != t or len(gen.p_max) != t:
            out.append(f"{where}: output cap profile length differs from horizon {t}")
        elif any(a > b for a, b in zip(gen.p_min, gen.p_max)):
            out.append(f"{where}: p_min exceeds p_max in some interval")
        if gen.q_min > gen.q_max:
            out.append(f"{where}: q_min exceeds q_max")
        if gen.bus not in seen_ids:
            out.append(f"{where}: bus {gen.bus} is not a known bus")

    if s.root.purchase_price < 0:
        out.append("root.purchase_price: must be nonnegative")

    for i, idc in enumerate(s.idcs):
        where = f"idcs[{i}]"
        if idc.server_count < 1:
            out.append(f"{where}.server_count: must be at least 1")
        if idc.k_cooling < 0:
            out.append(f"{where}.k_cooling: must be nonnegative")
        if idc.p_other < 0:
            out.append(f"{where}.p_other: must be nonnegative")
        if not (0.0 < idc.power_factor <= 1.0):
            out.append(f"{where}.power_factor: must be in (0, 1]")
        if idc.bus not in seen_ids:
            out.append(f"{where}.bus: {idc.bus} is not a known bus")
        srv = idc.server
        if srv.cpu_cores < 1:
            out.append(f"{where}.server.cpu_cores: must be at least 1")
        if srv.p_base < 0 or srv.k_it < 0 or srv.p_su < 0 or srv.p_sd < 0:
            out.append(f"{where}.server: power coefficients must be nonnegative")
        if not (0.0 < srv.u_max <= 1.0):
            out.append(f"{where}.server.u_max: must be in (0, 1]")

    for i, wl in enumerate(s.workloads):
        where = f"workloads[{i}]"
        if wl.cores_per_vm < 1:
            out.append(f"{where}.cores_per_vm: must be at least 1")
        if wl.availability_cap < 1:
            out.append(f"{where}.availability_cap: must be at least 1")
        if len(wl.demand_profile) != t:
            out.append(f"{where}.demand: profile length differs from horizon {t}")
        elif any(v < 0 for v in wl.demand_profile):
            out.append(f"{where}.demand: negative demand")
        if not (0.0 < wl.redundancy <= 1.0):
            out.append(f"{where}.redundancy: must be in (0, 1]")

    # Back-references: each generator and IDC appears on exactly one bus.
    gen_refs = [bus.generator for bus in s.buses if bus.generator is not None]
    idc_refs = [bus.idc for bus in s.buses if bus.idc is not None]
    for i, gen in enumerate(s.generators):
        if gen_refs.count(i) != 1:
            out.append(f"generators[{i}]: referenced by {gen_refs.count(i)} buses, expected 1")
        else:
            owner = next(bus for bus in s.buses if bus.generator == i)
            if owner.id != gen.bus:
                out.append(f"generators[{i}]: bus field {gen.bus} disagrees with bus {owner.id}")
    for i, idc in enumerate(s.idcs):
        if idc_refs.count(i) != 1:
            out.append(f"idcs[{i}]: referenced by {idc_refs.count(i)} buses, expected 1")
        else:
            owner = next(bus for bus in s.buses if bus.idc == i)
            if owner.id != idc.bus:
                out.append(f"idcs[{i}]: bus field {idc.bus} disagrees with bus {owner.id}")

    if s.workloads:
        need = float(sum(w.availability_cap for w in s.workloads))
        if s.big_g < need:
            out.append(f"big_g: {s.big_g} is below the replica-cap total {need}")
    return out


def serialize_scenario(s: Scenario) -> str:
    """Render a scenario back to its canonical JSON form (profiles inlined)."""
    doc = {
        "horizon": s.horizon,
        "buses": [
            _drop_none(
                {
                    "id": b.id,
                    "load_p": list(b.load_p_profile),
                    "load_q": list(b.load_q_profile),
                    "v_min": b.v_min,
                    "v_max": b.v_max,
                    "generator": b.generator,
                    "idc": b.idc,
                }
            )
            for b in s.buses
        ],
        "branches": [
            {"from": br.from_bus, "to": br.to_bus, "r": br.r, "x": br.x, "l_max": br.l_max}
            for br in s.branches
        ],
        "generators": [
            {
                "bus": g.bus,
                "p_min": list(g.p_min),
                "p_max": list(g.p_max),
                "q_min": g.q_min,
                "q_max": g.q_max,
                "unit_cost": g.unit_cost,
            }
            for g in s.generators
        ],
        "root": {
            "purchase_price": s.root.purchase_price,
            "p_max": s.root.p_max,
            "q_max": s.root.q_max,
        },
        "idcs": [
            {
                "bus": d.bus,
                "server_count": d.server_count,
                "server": asdict(d.server),
                "k_cooling": d.k_cooling,
                "p_other": d.p_other,
                "power_factor": d.power_factor,
            }
            for d in s.idcs
        ],
        "workloads": [
            {
                "cores_per_vm": w.cores_per_vm,
                "availability_cap": w.availability_cap,
                "demand": list(w.demand_profile),
                "redundancy": w.redundancy,
            }
            for w in s.workloads
        ],
        "big_g": s.big_g,
    }
    return json.dumps(doc, indent=2)


def _drop_none(rec: dict) -> dict:
    return {k: v for k, v in rec.items() if v is not None}


def bundled_scenario_path(name: str) -> str:
    """Filesystem path of a bundled scenario (e.g. ``case33_idc.json``)."""
    return str(resources.files("dcgrid").joinpath("data", name))


def random_tiny_scenario(
    seed: int,
    horizon: int = 2,
    num_buses: int = 4,
    num_idcs: int = 2,
    num_workloads: int = 2,
) -> Scenario:
    """Small random instance sized for exhaustive-search cross-checks.

    Fleets stay at two servers per center and replica caps at one or two, so
    the full integer assignment space stays enumerable.  Demands are drawn
    well under the capped serving capacity, keeping the instance feasible by
    construction.  Start/stop power is zero so intervals stay decoupled.
    """
    import random

    rng = random.Random(seed)
    t = horizon
    cores = rng.choice([8, 16])
    server = ServerSpec(
        cpu_cores=cores,
        p_base=rng.uniform(40.0, 60.0),
        k_it=rng.uniform(900.0, 1200.0),
        p_su=0.0,
        p_sd=0.0,
        u_max=rng.uniform(0.8, 0.95),
    )
    idc_count = min(num_idcs, num_buses - 1)
    fleet_servers = 2 * idc_count
    workloads = []
    for _ in range(num_workloads):
        phi = rng.choice([2, 4])
        cap = rng.randint(1, 2)
        redundancy = rng.uniform(0.85, 1.0)
        per_server = min(cap * phi * redundancy, server.u_max * cores)
        ceiling = 0.45 * fleet_servers * per_server
        workloads.append(
            WorkloadClass(
                cores_per_vm=phi,
                availability_cap=cap,
                demand_profile=tuple(rng.uniform(0.0, ceiling) for _ in range(t)),
                redundancy=redundancy,
            )
        )

    idc_buses = rng.sample(range(1, num_buses), idc_count)
    buses = []
    branches = []
    for i in range(num_buses):
        idc_id = idc_buses.index(i) if i in idc_buses else None
        load = rng.uniform(20.0, 80.0) if i > 0 else 0.0
        buses.append(
            BusRecord(
                id=i,
                load_p_profile=tuple(load * rng.uniform(0.8, 1.0) for _ in range(t)),
                load_q_profile=tuple(load * 0.4 * rng.uniform(0.8, 1.0) for _ in range(t)),
                v_min=0.81,
                v_max=1.21,
                generator=None,
                idc=idc_id,
            )
        )
        if i > 0:
            parent = rng.randrange(0, i)
            branches.append(
                BranchRecord(
                    from_bus=parent,
                    to_bus=i,
                    r=rng.uniform(0.001, 0.01),
                    x=rng.uniform(0.001, 0.01),
                    l_max=25.0,
                )
            )
    idcs = tuple(
        IdcSpec(
            bus=bus_id,
            server_count=2,
            server=server,
            k_cooling=rng.uniform(0.1, 0.2),
            p_other=0.0,
            power_factor=0.9,
        )
        for bus_id in idc_buses
    )
    return Scenario(
        horizon=t,
        buses=tuple(buses),
        branches=tuple(branches),
        generators=(),
        root=RootSupply(purchase_price=rng.uniform(0.05, 0.1), p_max=math.inf, q_max=math.inf),
        idcs=idcs,
        workloads=tuple(workloads),
        big_g=float(sum(w.availability_cap for w in workloads)),
    )
