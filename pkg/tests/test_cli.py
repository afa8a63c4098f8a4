import json
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from cdsr_planner import scenario_io as sio
from cdsr_planner.cli import main


@pytest.fixture(scope="module")
def free_scenario_file(tmp_path_factory):
    """Obstacle-free variant of the bundled static scene: fast to plan."""
    doc = json.loads(sio.bundled_scenario_path("static_two_spheres").read_text())
    doc["obstacles"] = []
    path = tmp_path_factory.mktemp("scn") / "free.json"
    path.write_text(json.dumps(doc))
    return str(path)


@pytest.fixture(scope="module")
def static_scenario_file():
    return str(sio.bundled_scenario_path("static_two_spheres"))


def run_cli(args):
    return CliRunner().invoke(main, args, catch_exceptions=False)


def test_plan_writes_outputs(tmp_path, free_scenario_file):
    out = tmp_path / "run"
    res = run_cli(["plan", "--scenario", free_scenario_file, "--out", str(out),
                   "--seed", "1", "--no-figures"])
    assert res.exit_code == 0, res.output
    assert (out / "path.csv").exists()
    assert (out / "configs.csv").exists()
    assert (out / "path_smoothed.csv").exists()
    header = (out / "path.csv").read_text().splitlines()[0]
    assert header == "waypoint,x_mm,y_mm,z_mm"
    header = (out / "configs.csv").read_text().splitlines()[0]
    assert header == "waypoint,theta_1,phi_1,theta_2,phi_2,base_z"


def test_plan_renders_figures(tmp_path, free_scenario_file):
    out = tmp_path / "run"
    res = run_cli(["plan", "--scenario", free_scenario_file, "--out", str(out),
                   "--seed", "1"])
    assert res.exit_code == 0, res.output
    assert (out / "plan_view.png").stat().st_size > 0


def test_plan_byte_identical_reruns(tmp_path, free_scenario_file):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    for out in (out1, out2):
        res = run_cli(["plan", "--scenario", free_scenario_file, "--out", str(out),
                       "--seed", "5", "--no-figures"])
        assert res.exit_code == 0
    for name in ("path.csv", "configs.csv", "path_smoothed.csv"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_plan_rejects_bad_scenario(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"model": {}}))
    res = CliRunner().invoke(main, ["plan", "--scenario", str(bad), "--out",
                                    str(tmp_path / "o")])
    assert res.exit_code == 1
    assert "scenario rejected" in res.output


def test_plan_failure_exit_code(tmp_path, free_scenario_file):
    # goal far outside reach: planning cannot connect within the budget
    doc = json.loads(Path(free_scenario_file).read_text())
    doc["goal_tip_mm"] = [179.0, 179.0, 1.0]
    path = tmp_path / "unreachable.json"
    path.write_text(json.dumps(doc))
    res = CliRunner().invoke(main, ["plan", "--scenario", str(path), "--out",
                                    str(tmp_path / "o"), "--no-figures"])
    assert res.exit_code == 2


def test_simulate_free_space(tmp_path, free_scenario_file):
    out = tmp_path / "sim"
    res = run_cli(["simulate", "--scenario", free_scenario_file, "--out", str(out),
                   "--seed", "1", "--no-figures"])
    assert res.exit_code == 0, res.output
    log_lines = (out / "simulation_log.csv").read_text().splitlines()
    assert log_lines[0].startswith("step,time_s,tip_x,tip_y,tip_z,tip_error_mm,"
                                   "min_clearance_mm,replanned")
    assert len(log_lines) > 2
    body = (out / "body_points.csv").read_text().splitlines()
    assert body[0] == "step,time_s,point,x_mm,y_mm,z_mm"
    # 10 body points per logged step
    assert len(body) - 1 == (len(log_lines) - 1) * 10
    # zero replans in free space
    assert all(line.split(",")[7] == "0" for line in log_lines[1:])


def test_simulate_ablation_collides(tmp_path):
    out = tmp_path / "ablate"
    res = run_cli([
        "simulate", "--scenario", str(sio.bundled_scenario_path("dynamic_pulsing_spheres")),
        "--out", str(out), "--seed", "0", "--ablation-no-safety", "--no-figures",
    ])
    assert res.exit_code == 2, res.output
    rows = (out / "simulation_log.csv").read_text().splitlines()[1:]
    clearances = [float(r.split(",")[6]) for r in rows]
    assert min(clearances) < 0.0


def test_simulate_budget_exit_code(tmp_path, free_scenario_file):
    out = tmp_path / "sim"
    res = run_cli(["simulate", "--scenario", free_scenario_file, "--out", str(out),
                   "--seed", "1", "--max-steps", "2", "--no-figures"])
    assert res.exit_code == 3


def test_bench_smoke(tmp_path, free_scenario_file):
    out = tmp_path / "bench"
    res = run_cli(["bench", "--scenario", free_scenario_file, "--out", str(out),
                   "--trials", "1", "--counts", "0", "--seed", "3",
                   "--max-iterations", "400", "--no-figures"])
    assert res.exit_code == 0, res.output
    summary = (out / "bench_summary.csv").read_text().splitlines()
    assert summary[0] == ("method,obstacle_count,trials,success_rate,"
                          "mean_time_s,mean_length_mm,mean_time_success_s")
    assert len(summary) == 3  # two methods, one count
    report = (out / "report.txt").read_text()
    assert "609.07" in report
    assert (out / "bench_trials.csv").exists()


def test_bench_rejects_bad_counts(tmp_path, free_scenario_file):
    res = CliRunner().invoke(main, ["bench", "--scenario", free_scenario_file,
                                    "--out", str(tmp_path / "o"), "--counts", "x"])
    assert res.exit_code == 1
