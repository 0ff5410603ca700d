"""Command-line front end tying the pipeline together.

Subcommands
-----------
validate      check a scenario file, list violations, exit 1 when any
schemes       print the deployment-scheme pool of one facility as CSV
solve         run the coordinated solver, write schedule/network/summary
pareto        sweep the objective weight, write the tradeoff points
nash          sweep, build the efficient frontier, pick the bargaining point
report        render summaries from solve output directories side by side
oracle-check  compare the solver against exhaustive enumeration (tiny cases)

Exit codes: 0 success, 1 invalid or unreadable input, 2 a solve or check
failed, 3 bad usage.

Artifacts (all comma-separated with a mandatory header row)
-----------------------------------------------------------
schedule.csv  one row per facility, scheme, and interval with a positive
              batch: ``facility`` (1-based), ``scheme`` (VM counts joined by
              "-"), ``interval`` (0-based), ``servers`` (batch size),
              ``busy`` (sum of per-server utilization shares), and one
              ``served_K`` column per workload class (cores per hour).
network.csv   one row per network element and interval: ``element`` is
              ``root``, ``generator`` (id: its bus), ``bus`` (id: bus id,
              carries ``voltage_sq`` in per unit squared), or ``line``
              (id: ``from-to``, carries flows and ``current_sq``).  Power
              columns are kW and kvar; blank cells do not apply.
summary.json  the summarized plan (utilization percent, energies in kWh,
              supply cost, gap, iteration count) plus a ``solver`` block
              with bounds, references, column counts, and residuals.
points.csv    one sweep outcome per row: ``weight``, ``supply_cost``,
              ``active_core_hours``, ``neg_mean_utilization`` (the
              minimized utilization objective), ``efficient`` (1 when the
              point is a vertex of the efficient frontier).
frontier.csv  the efficient-frontier vertices in sweep order with their
              utilization percentages.
nash.json     the bargaining outcome: the selected sweep point, the exact
              maximizer on the piecewise-linear frontier, the gain product,
              and the disagreement values.

The ``COPT_LOG`` environment variable sets log verbosity: unset or 0 keeps
runs quiet, any higher value prints per-iteration bound lines.  Identical
invocations produce byte-identical artifacts; ``--time-limit`` trades that
reproducibility for a bounded wall-clock runtime.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .branchflow import check_exactness
from .decomposition import DEFAULT_EPS, ScheduleSolution, solve_coordinated
from .idcpower import CapacityError
from .oracle import (
    EnumerationCapError,
    NoFeasibleAssignmentError,
    brute_force_initial,
    brute_force_reconstructed,
)
from .pareto import ParetoPoint, build_frontier, nash_select, sweep_pareto
from .report import (
    InconsistencyError,
    SummaryRecord,
    energy_closure_residual,
    format_comparison,
    summarize,
)
from .scenario import (
    Scenario,
    ScenarioError,
    bundled_scenario_path,
    load_scenario,
)
from .schemes import enumerate_feasible, format_schemes_csv, prune_dominated

DEFAULT_SCENARIO = "case33_idc.json"
ORACLE_AGREEMENT_TOL = 1e-3


class _Fail(Exception):
    """Carries a message and the process exit code it maps to."""

    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code
        self.message = message


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage errors exit with code 3."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(3, f"{self.prog}: error: {message}\n")


def _verbosity() -> int:
    raw = os.environ.get("COPT_LOG", "")
    if not raw.strip():
        return 0
    try:
        return int(raw)
    except ValueError:
        return 1


def _fmt(x: float) -> str:
    return format(float(x), ".10g")


def _resolve_scenario(path: str | None) -> str:
    if path is None:
        return bundled_scenario_path(DEFAULT_SCENARIO)
    if os.path.exists(path):
        return path
    bundled = bundled_scenario_path(os.path.basename(path))
    if os.path.exists(bundled):
        return bundled
    raise _Fail(1, f"scenario file not found: {path}")


def _load(path: str | None) -> Scenario:
    resolved = _resolve_scenario(path)
    try:
        return load_scenario(resolved)
    except OSError as exc:
        raise _Fail(1, f"cannot read scenario: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise _Fail(1, f"scenario is not valid JSON: {exc}") from exc
    except ScenarioError as exc:
        raise _Fail(1, f"scenario invalid: {exc}") from exc


def _ensure_out(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def _write_text(directory: str, name: str, text: str) -> None:
    target = os.path.join(directory, name)
    with open(target, "w", encoding="utf-8", newline="") as handle:
        handle.write(text)


def _parse_weight_list(text: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(
            f"weights must be comma-separated numbers, got {text!r}"
        ) from exc


# ---------------------------------------------------------------------------
# artifact rendering


def schedule_csv(s: Scenario, sol: ScheduleSolution) -> str:
    """Serialize the batched plan, one row per positive batch and interval."""
    num_classes = len(s.workloads)
    header = "facility,scheme,interval,servers,busy," + ",".join(
        f"served_{l + 1}" for l in range(num_classes)
    )
    lines = [header]
    sched = sol.schedule
    for n in range(len(s.idcs)):
        schemes = sched.schemes[n]
        counts = sched.counts[n]
        busy = sched.busy[n]
        flows = sched.flows[n]
        for c, scheme in enumerate(schemes):
            tag = "-".join(str(v) for v in scheme)
            for t in range(s.horizon):
                servers = int(round(float(counts[c, t])))
                if servers < 1:
                    continue
                served = ",".join(
                    _fmt(flows[c, l, t]) for l in range(num_classes)
                )
                lines.append(
                    f"{n + 1},{tag},{t},{servers},{_fmt(busy[c, t])},{served}"
                )
    return "\n".join(lines) + "\n"


def network_csv(s: Scenario, sol: ScheduleSolution) -> str:
    """Serialize the solved grid state, one row per element and interval."""
    net = sol.network
    header = "interval,element,id,p_kw,q_kvar,voltage_sq,current_sq"
    lines = [header]
    for t in range(s.horizon):
        lines.append(
            f"{t},root,root,{_fmt(net.root_p_kw[t])},{_fmt(net.root_q_kvar[t])},,"
        )
        for g, gen in enumerate(s.generators):
            lines.append(
                f"{t},generator,{gen.bus},"
                f"{_fmt(net.gen_p_kw[t, g])},{_fmt(net.gen_q_kvar[t, g])},,"
            )
        for b, bus_id in enumerate(net.bus_ids):
            lines.append(f"{t},bus,{bus_id},,,{_fmt(net.v[t, b])},")
        for e, (head, tail) in enumerate(net.branch_ends):
            lines.append(
                f"{t},line,{head}-{tail},"
                f"{_fmt(net.p_flow_kw[t, e])},{_fmt(net.q_flow_kvar[t, e])},,"
                f"{_fmt(net.current[t, e])}"
            )
    return "\n".join(lines) + "\n"


def summary_payload(
    s: Scenario, sol: ScheduleSolution, rec: SummaryRecord, eps: float
) -> dict:
    payload = rec.as_dict()
    payload["solver"] = {
        "eps": eps,
        "scalarized_objective": sol.scalarized_objective,
        "lower_bound": sol.lower_bound,
        "supply_cost": sol.supply_cost,
        "active_core_hours": sol.active_core_hours,
        "cost_ref": sol.cost_ref,
        "core_ref": sol.core_ref,
        "columns_per_idc": list(sol.columns_per_idc),
        "warnings": list(sol.warnings),
        "exactness_residual": check_exactness(sol.network),
        "energy_closure_residual": energy_closure_residual(s, sol),
    }
    return payload


def _json_text(payload: dict) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _utilization_pct(point: ParetoPoint) -> float:
    return -100.0 * point.z3


# ---------------------------------------------------------------------------
# subcommand handlers


def _cmd_validate(args) -> int:
    resolved = _resolve_scenario(args.scenario)
    try:
        with open(resolved, "r", encoding="utf-8") as handle:
            text = handle.read()
    except OSError as exc:
        raise _Fail(1, f"cannot read scenario: {exc}") from exc
    from .scenario import parse_scenario

    try:
        parse_scenario(text)
        violations: list[str] = []
    except json.JSONDecodeError as exc:
        raise _Fail(1, f"scenario is not valid JSON: {exc}") from exc
    except ScenarioError as exc:
        violations = list(exc.violations)
    for line in violations:
        print(line)
    print(f"{len(violations)} violations")
    return 0 if not violations else 1


def _cmd_schemes(args) -> int:
    s = _load(args.scenario)
    if not 1 <= args.idc <= len(s.idcs):
        raise _Fail(
            1, f"facility index {args.idc} out of range 1..{len(s.idcs)}"
        )
    server = s.idcs[args.idc - 1].server
    pool = list(enumerate_feasible(server, s.workloads))
    if args.pruned:
        pool = list(prune_dominated(pool))
    text = format_schemes_csv(pool, s.workloads)
    if args.out:
        out = _ensure_out(args.out)
        _write_text(out, "schemes.csv", text)
        print(f"{len(pool)} schemes, wrote schemes.csv to {out}")
    else:
        sys.stdout.write(text)
    return 0


def _solve(args, eps: float) -> tuple[Scenario, ScheduleSolution]:
    s = _load(args.scenario)
    sol = solve_coordinated(
        s,
        weight=args.weight,
        eps=eps,
        solver_tol=args.solver_tol,
        time_limit=getattr(args, "time_limit", None),
    )
    if _verbosity() >= 1:
        for line in sol.log_lines():
            print(line)
    return s, sol


def _cmd_solve(args) -> int:
    s, sol = _solve(args, args.tol)
    rec = summarize(s, sol)
    payload = summary_payload(s, sol, rec, args.tol)

    if args.oracle:
        reference = brute_force_initial(
            s, weight=args.weight, cost_ref=sol.cost_ref, core_ref=sol.core_ref
        )
        gap = abs(sol.scalarized_objective - reference.objective) / max(
            1.0, abs(reference.objective)
        )
        payload["oracle"] = {
            "objective": reference.objective,
            "relative_difference": gap,
            "candidates": reference.candidates,
            "evaluations": reference.evaluations,
        }

    out = _ensure_out(args.out)
    _write_text(out, "schedule.csv", schedule_csv(s, sol))
    _write_text(out, "network.csv", network_csv(s, sol))
    _write_text(out, "summary.json", _json_text(payload))

    final_gap = rec.gap if rec.gap is not None else float("nan")
    print(
        f"status {sol.status} after {rec.iterations} iterations, "
        f"gap {final_gap:.3e}"
    )
    util = f"{rec.utilization_pct:.2f} %" if rec.utilization_pct is not None else "n/a"
    print(
        f"utilization {util}, supply cost {rec.dso_cost:.2f} $, "
        f"active core-hours {sol.active_core_hours:.1f}"
    )
    if args.oracle:
        oracle = payload["oracle"]
        print(
            f"reference enumeration objective {oracle['objective']:.10g}, "
            f"relative difference {oracle['relative_difference']:.3e}"
        )
    print(f"wrote schedule.csv, network.csv, summary.json to {out}")
    if sol.status != "converged":
        print(f"solve stopped with status {sol.status}", file=sys.stderr)
        return 2
    return 0


def _sweep(args, jobs: int) -> list[ParetoPoint]:
    s = _load(args.scenario)
    failures: list = []
    try:
        points = sweep_pareto(
            s, weights=args.weights, eps=args.tol, jobs=jobs, failures=failures
        )
    except ValueError as exc:
        raise _Fail(3, f"bad weights: {exc}") from exc
    for failure in failures:
        print(
            f"weight {failure.weight:g} failed: {failure.reason}",
            file=sys.stderr,
        )
    if not points:
        raise _Fail(2, "every weight in the sweep failed")
    if failures:
        raise _Fail(2, f"{len(failures)} of the sweep weights failed")
    return points


def _cmd_pareto(args) -> int:
    points = _sweep(args, args.jobs)
    setup = build_frontier(points)
    vertices = {p.coordinates() for p in setup.frontier}
    lines = ["weight,supply_cost,active_core_hours,neg_mean_utilization,efficient"]
    for p in points:
        flag = 1 if p.coordinates() in vertices else 0
        lines.append(
            f"{_fmt(p.weight)},{_fmt(p.z2)},{_fmt(p.z4)},{_fmt(p.z3)},{flag}"
        )
    out = _ensure_out(args.out)
    _write_text(out, "points.csv", "\n".join(lines) + "\n")
    for p in points:
        mark = "efficient" if p.coordinates() in vertices else "dominated"
        print(
            f"weight {p.weight:.2f}  supply cost {p.z2:.2f}  "
            f"core-hours {p.z4:.1f}  utilization {_utilization_pct(p):.2f} %  "
            f"{mark}"
        )
    print(f"frontier holds {len(setup.frontier)} of {len(points)} swept points")
    print(f"wrote points.csv to {out}")
    return 0


def _cmd_nash(args) -> int:
    points = _sweep(args, jobs=1)
    setup = build_frontier(points)
    selection = nash_select(setup)
    lines = ["weight,supply_cost,active_core_hours,utilization_pct"]
    for p in setup.frontier:
        lines.append(
            f"{_fmt(p.weight)},{_fmt(p.z2)},{_fmt(p.z4)},"
            f"{_fmt(_utilization_pct(p))}"
        )
    chosen = selection.selected
    payload = {
        "selected_weight": chosen.weight,
        "selected_supply_cost": chosen.z2,
        "selected_core_hours": chosen.z4,
        "selected_utilization_pct": _utilization_pct(chosen),
        "maximizer_supply_cost": selection.z2,
        "maximizer_core_hours": selection.z4,
        "gain_product": selection.product,
        "disagreement_supply_cost": setup.z2_max,
        "disagreement_core_hours": setup.z4_max,
    }
    out = _ensure_out(args.out)
    _write_text(out, "frontier.csv", "\n".join(lines) + "\n")
    _write_text(out, "nash.json", _json_text(payload))

    by_weight = {p.weight: p for p in points}
    endpoint_utils = sorted(
        _utilization_pct(by_weight[w]) for w in (0.0, 1.0) if w in by_weight
    )
    if len(endpoint_utils) == 2:
        lo, hi = endpoint_utils
        print(
            f"endpoint utilizations {lo:.2f} % (cost-led) and "
            f"{hi:.2f} % (footprint-led)"
        )
        print(
            f"selected weight {chosen.weight:.2f}: utilization "
            f"{_utilization_pct(chosen):.2f} % lies between the endpoints, "
            f"supply cost {chosen.z2:.2f} $, core-hours {chosen.z4:.1f}"
        )
    else:
        print(
            f"selected weight {chosen.weight:.2f}: utilization "
            f"{_utilization_pct(chosen):.2f} %, supply cost {chosen.z2:.2f} $, "
            f"core-hours {chosen.z4:.1f}"
        )
    print(f"wrote frontier.csv, nash.json to {out}")
    return 0


def _cmd_report(args) -> int:
    rows = []
    for directory in args.dirs:
        target = os.path.join(directory, "summary.json")
        try:
            with open(target, "r", encoding="utf-8") as handle:
                payload = json.load(handle)
        except OSError as exc:
            raise _Fail(1, f"cannot read {target}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise _Fail(1, f"{target} is not valid JSON: {exc}") from exc
        try:
            rec = SummaryRecord.from_dict(payload)
        except (KeyError, TypeError, ValueError) as exc:
            raise _Fail(1, f"{target} is missing summary fields: {exc}") from exc
        label = os.path.basename(os.path.normpath(directory)) or directory
        rows.append((label[:16], rec))
    print(format_comparison(rows))
    return 0


def _cmd_oracle_check(args) -> int:
    eps = min(args.tol, ORACLE_AGREEMENT_TOL / 10.0)
    s, sol = _solve(args, eps)
    kwargs = {"cost_ref": sol.cost_ref, "core_ref": sol.core_ref}
    per_server = brute_force_initial(s, args.weight, **kwargs)
    pools = [
        tuple(enumerate_feasible(idc.server, s.workloads)) for idc in s.idcs
    ]
    batched = brute_force_reconstructed(s, pools, args.weight, **kwargs)

    def rel(value: float, reference: float) -> float:
        return abs(value - reference) / max(1.0, abs(reference))

    gap_initial = rel(sol.scalarized_objective, per_server.objective)
    gap_batched = rel(sol.scalarized_objective, batched.objective)
    gap_between = rel(batched.objective, per_server.objective)
    print(f"coordinated solver objective {sol.scalarized_objective:.10g}")
    print(
        f"per-server reference         {per_server.objective:.10g}  "
        f"(relative difference {gap_initial:.3e})"
    )
    print(
        f"batched reference            {batched.objective:.10g}  "
        f"(relative difference {gap_batched:.3e})"
    )
    tol = ORACLE_AGREEMENT_TOL
    if max(gap_initial, gap_batched, gap_between) <= tol:
        print(f"agreement within {100 * tol:g} %")
        return 0
    print(f"MISMATCH beyond {100 * tol:g} %", file=sys.stderr)
    return 2


# ---------------------------------------------------------------------------
# parser wiring


def _add_scenario_flag(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--scenario",
        default=None,
        help="scenario JSON file (default: the bundled 33-bus case)",
    )


def _add_solver_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--tol",
        type=float,
        default=DEFAULT_EPS,
        help="outer convergence gap on the scalarized objective (default 0.001)",
    )
    parser.add_argument(
        "--solver-tol",
        type=float,
        default=1e-8,
        help="interior-point feasibility/optimality tolerance (default 1e-8)",
    )


def _build_parser() -> _Parser:
    parser = _Parser(
        prog="dcgrid",
        description=(
            "Co-optimize day-ahead data-center scheduling and radial "
            "distribution-grid operation."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("validate", help="check a scenario file")
    p.add_argument("scenario", nargs="?", default=None, help="scenario JSON file")
    p.set_defaults(handler=_cmd_validate)

    p = sub.add_parser("schemes", help="print one facility's scheme pool as CSV")
    _add_scenario_flag(p)
    p.add_argument("--idc", type=int, default=1, help="facility index, 1-based")
    p.add_argument(
        "--pruned",
        action="store_true",
        help="drop schemes dominated within the pool before printing",
    )
    p.add_argument("--out", default=None, help="directory for schemes.csv")
    p.set_defaults(handler=_cmd_schemes)

    p = sub.add_parser("solve", help="run the coordinated solver")
    _add_scenario_flag(p)
    p.add_argument("--weight", type=float, default=0.5, help="cost weight in [0, 1]")
    _add_solver_flags(p)
    p.add_argument(
        "--time-limit",
        type=float,
        default=None,
        help="wall-clock cap in seconds (trades reproducibility for speed)",
    )
    p.add_argument(
        "--oracle",
        action="store_true",
        help="cross-check against exhaustive enumeration (tiny cases only)",
    )
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(handler=_cmd_solve)

    p = sub.add_parser("pareto", help="sweep the objective weight")
    _add_scenario_flag(p)
    p.add_argument(
        "--weights",
        type=_parse_weight_list,
        default=None,
        help="comma-separated weights incl. 0 and 1 (default: 11-point grid)",
    )
    _add_solver_flags(p)
    p.add_argument("--jobs", type=int, default=1, help="parallel solves")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(handler=_cmd_pareto)

    p = sub.add_parser("nash", help="pick the bargaining point on the frontier")
    _add_scenario_flag(p)
    p.add_argument(
        "--weights",
        type=_parse_weight_list,
        default=None,
        help="comma-separated weights incl. 0 and 1 (default: 11-point grid)",
    )
    _add_solver_flags(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(handler=_cmd_nash)

    p = sub.add_parser("report", help="tabulate summaries from solve outputs")
    p.add_argument("dirs", nargs="+", help="directories holding summary.json")
    p.set_defaults(handler=_cmd_report)

    p = sub.add_parser(
        "oracle-check",
        help="compare the solver against exhaustive enumeration",
    )
    _add_scenario_flag(p)
    p.add_argument("--weight", type=float, default=0.5, help="cost weight in [0, 1]")
    _add_solver_flags(p)
    p.set_defaults(handler=_cmd_oracle_check)

    return parser


def run(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code is None else int(exc.code)
    try:
        return args.handler(args)
    except _Fail as failure:
        print(failure.message, file=sys.stderr)
        return failure.code
    except (EnumerationCapError, NoFeasibleAssignmentError) as exc:
        print(f"reference enumeration failed: {exc}", file=sys.stderr)
        return 2
    except InconsistencyError as exc:
        print(f"inconsistent solution: {exc}", file=sys.stderr)
        return 2
    except (CapacityError, ScenarioError) as exc:
        print(f"scenario rejected: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"bad usage: {exc}", file=sys.stderr)
        return 3
    except RuntimeError as exc:
        print(f"solve failed: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
