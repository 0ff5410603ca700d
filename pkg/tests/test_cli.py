"""Command-line tests: exit codes, artifact shapes, determinism, cross-checks."""

import csv
import json
import os

import pytest

from dcgrid.cli import run
from dcgrid.scenario import bundled_scenario_path

TINY_DOC = {
    "horizon": 2,
    "buses": [
        {"id": 1, "v_min": 1.0, "v_max": 1.0},
        {"id": 2, "v_min": 0.81, "v_max": 1.21, "idc": 0, "load_p": 50.0},
    ],
    "branches": [{"from": 1, "to": 2, "r": 0.01, "x": 0.01, "l_max": 25.0}],
    "root": {"purchase_price": 0.08},
    "idcs": [
        {
            "bus": 2,
            "server_count": 2,
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
            "availability_cap": 2,
            "demand": [2.0, 5.0],
            "redundancy": 1.0,
        }
    ],
}


@pytest.fixture(scope="module")
def tiny_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("scen") / "tiny.json"
    path.write_text(json.dumps(TINY_DOC))
    return str(path)


@pytest.fixture(scope="module")
def solved_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("solved")
    code = run(["solve", "--weight", "0.5", "--out", str(out)])
    assert code == 0
    return out


def read_bytes(directory, name):
    with open(os.path.join(str(directory), name), "rb") as handle:
        return handle.read()


def test_validate_bundled_reports_zero_violations(capsys):
    assert run(["validate", "case33_idc.json"]) == 0
    assert "0 violations" in capsys.readouterr().out


def test_validate_broken_scenario_lists_problems(tmp_path, capsys):
    doc = json.loads(json.dumps(TINY_DOC))
    doc["branches"][0]["to"] = 99
    path = tmp_path / "broken.json"
    path.write_text(json.dumps(doc))
    assert run(["validate", str(path)]) == 1
    out = capsys.readouterr().out
    assert "violations" in out
    assert "0 violations" not in out


def test_validate_missing_file_exits_1(capsys):
    assert run(["validate", "/no/such/file.json"]) == 1
    assert "not found" in capsys.readouterr().err


def test_unknown_flag_exits_3(capsys):
    assert run(["solve", "--frobnicate", "--out", "x"]) == 3
    assert run(["no-such-command"]) == 3
    assert run(["--help"]) == 0
    capsys.readouterr()


def test_bad_weight_exits_3(tmp_path, capsys):
    code = run(["solve", "--weight", "1.5", "--out", str(tmp_path / "o")])
    assert code == 3
    assert "weight" in capsys.readouterr().err


def test_schemes_bundled_pool_has_fourteen_rows(capsys):
    assert run(["schemes", "--idc", "1"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].startswith("vm_count_1,")
    assert len(lines) == 1 + 14


def test_schemes_pruned_keeps_maximal_rows(capsys):
    assert run(["schemes", "--idc", "1", "--pruned"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert 1 < len(lines) < 1 + 14


def test_schemes_bad_facility_index_exits_1(capsys):
    assert run(["schemes", "--idc", "9"]) == 1
    assert "out of range" in capsys.readouterr().err


def test_solve_reruns_are_byte_identical(solved_dir, tmp_path, capsys):
    assert run(["solve", "--weight", "0.5", "--out", str(tmp_path)]) == 0
    capsys.readouterr()
    for name in ("schedule.csv", "network.csv", "summary.json"):
        assert read_bytes(solved_dir, name) == read_bytes(tmp_path, name)


def test_summary_utilization_matches_schedule_recompute(solved_dir):
    # Recompute average utilization from schedule.csv and the scenario file
    # alone, without any package helpers.
    with open(bundled_scenario_path("case33_idc.json")) as handle:
        raw = json.load(handle)
    horizon = raw["horizon"]
    demand_total = [0.0] * horizon
    for w in raw["workloads"]:
        prof = w["demand"] if isinstance(w["demand"], list) else [w["demand"]] * horizon
        for t in range(horizon):
            demand_total[t] += prof[t]
    cores_per_server = [idc["server"]["cpu_cores"] for idc in raw["idcs"]]

    powered = [0.0] * horizon
    with open(os.path.join(str(solved_dir), "schedule.csv")) as handle:
        for row in csv.DictReader(handle):
            t = int(row["interval"])
            facility = int(row["facility"])
            powered[t] += cores_per_server[facility - 1] * int(row["servers"])

    shares = [demand_total[t] / powered[t] for t in range(horizon)]
    recomputed = 100.0 * sum(shares) / horizon

    summary = json.loads(read_bytes(solved_dir, "summary.json"))
    assert summary["utilization_pct"] == pytest.approx(recomputed, abs=1e-9)


def test_summary_solver_block_fields(solved_dir):
    summary = json.loads(read_bytes(solved_dir, "summary.json"))
    solver = summary["solver"]
    assert solver["exactness_residual"] < 1e-5
    assert solver["energy_closure_residual"] < 1e-6
    assert solver["lower_bound"] <= solver["scalarized_objective"] + 1e-9
    assert len(solver["columns_per_idc"]) == 3
    assert summary["status"] == "converged"


def test_network_csv_covers_every_element(solved_dir):
    lines = read_bytes(solved_dir, "network.csv").decode().strip().splitlines()
    assert lines[0] == "interval,element,id,p_kw,q_kvar,voltage_sq,current_sq"
    kinds = {}
    for line in lines[1:]:
        kinds.setdefault(line.split(",")[1], 0)
        kinds[line.split(",")[1]] += 1
    assert kinds["root"] == 24
    assert kinds["bus"] == 24 * 33
    assert kinds["line"] == 24 * 32
    assert kinds["generator"] == 24 * 2


def test_solve_oracle_flag_records_agreement(tiny_path, tmp_path, capsys):
    out = tmp_path / "o"
    code = run(
        ["solve", "--scenario", tiny_path, "--weight", "0.3", "--oracle",
         "--out", str(out)]
    )
    assert code == 0
    assert "reference enumeration objective" in capsys.readouterr().out
    summary = json.loads(read_bytes(out, "summary.json"))
    assert summary["oracle"]["relative_difference"] < 1e-6
    assert summary["oracle"]["candidates"] > 0


def test_oracle_check_agrees_on_tiny_case(tiny_path, capsys):
    assert run(["oracle-check", "--scenario", tiny_path, "--weight", "0.3"]) == 0
    assert "agreement within" in capsys.readouterr().out


def test_oracle_check_refuses_oversized_case(capsys):
    assert run(["oracle-check"]) == 2
    assert "refusing" in capsys.readouterr().err


def test_pareto_points_csv_and_flags(tmp_path, capsys):
    out = tmp_path / "p"
    code = run(
        ["pareto", "--weights", "0,1", "--jobs", "2", "--out", str(out)]
    )
    assert code == 0
    capsys.readouterr()
    with open(os.path.join(str(out), "points.csv")) as handle:
        rows = list(csv.DictReader(handle))
    assert len(rows) == 2
    by_weight = {float(r["weight"]): r for r in rows}
    cost_led = by_weight[1.0]
    fleet_led = by_weight[0.0]
    assert float(cost_led["supply_cost"]) <= float(fleet_led["supply_cost"])
    assert float(fleet_led["active_core_hours"]) <= float(
        cost_led["active_core_hours"]
    )
    assert {r["efficient"] for r in rows} <= {"0", "1"}


def test_nash_selection_between_endpoints(tmp_path, capsys):
    out = tmp_path / "n"
    code = run(["nash", "--weights", "0,0.5,1", "--out", str(out)])
    assert code == 0
    capsys.readouterr()
    selection = json.loads(read_bytes(out, "nash.json"))
    with open(os.path.join(str(out), "frontier.csv")) as handle:
        frontier = list(csv.DictReader(handle))
    utils = [float(r["utilization_pct"]) for r in frontier]
    assert len(frontier) >= 2
    assert min(utils) - 1e-9 <= selection["selected_utilization_pct"]
    assert selection["selected_utilization_pct"] <= max(utils) + 1e-9
    assert selection["gain_product"] >= -1e-9


def test_report_renders_fixed_width_table(solved_dir, capsys):
    assert run(["report", str(solved_dir)]) == 0
    out = capsys.readouterr().out
    lines = out.strip().splitlines()
    assert "util_pct" in lines[0]
    assert len(lines) == 3
    assert "84.38" in lines[2]


def test_report_missing_summary_exits_1(tmp_path, capsys):
    assert run(["report", str(tmp_path / "nope")]) == 1
    assert "cannot read" in capsys.readouterr().err


def test_time_limit_stops_with_status_and_artifacts(tmp_path, capsys):
    out = tmp_path / "tl"
    code = run(
        ["solve", "--weight", "0.9", "--tol", "1e-9",
         "--time-limit", "0.0001", "--out", str(out)]
    )
    assert code == 2
    assert "time_limit" in capsys.readouterr().err
    summary = json.loads(read_bytes(out, "summary.json"))
    assert summary["status"] == "time_limit"


def test_verbosity_env_var_prints_iteration_log(
    tiny_path, tmp_path, monkeypatch, capsys
):
    monkeypatch.setenv("COPT_LOG", "1")
    assert run(["solve", "--scenario", tiny_path, "--out", str(tmp_path / "a")]) == 0
    assert "iteration=" in capsys.readouterr().out
    monkeypatch.setenv("COPT_LOG", "0")
    assert run(["solve", "--scenario", tiny_path, "--out", str(tmp_path / "b")]) == 0
    assert "iteration=" not in capsys.readouterr().out
