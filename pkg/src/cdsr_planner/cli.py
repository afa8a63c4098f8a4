"""Command-line front end: plan once, run the dynamic simulation, or run the
benchmark grid. Every command reads a scenario JSON, writes CSV data files
into --out, and renders matching figures alongside them."""

from __future__ import annotations

import csv
import sys
from pathlib import Path

import click
import numpy as np

from . import bench as bench_mod
from . import plots, world
from .control import NotConverged
from .kinematics import body_points, config_vector
from .planner import (
    ExecutionFailed,
    PlanFailed,
    PlannerParams,
    execute_dynamic,
    initial_state,
    plan,
    smooth_path,
    write_execution_log,
)
from .scenario_io import ParseError, parse_scenario

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_PLAN_FAILED = 2
EXIT_COLLISION = 2
EXIT_BUDGET = 3
EXIT_EXEC_PLAN_FAILED = 4


def _load(scenario_path: str) -> world.Scenario:
    try:
        return parse_scenario(scenario_path)
    except ParseError as exc:
        raise click.ClickException(f"scenario rejected -- {exc}") from None


def _planner_params(scenario: world.Scenario, seed: int | None, method: str) -> PlannerParams:
    return PlannerParams(
        rng_seed=scenario.rng_seed if seed is None else seed,
        method=method,
    )


def _write_path_csv(path, points: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["waypoint", "x_mm", "y_mm", "z_mm"])
        for i, p in enumerate(points):
            writer.writerow([i, f"{p[0]:.6f}", f"{p[1]:.6f}", f"{p[2]:.6f}"])


def _write_configs_csv(path, configurations, n_segments: int) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["waypoint"]
        for k in range(1, n_segments + 1):
            header += [f"theta_{k}", f"phi_{k}"]
        header.append("base_z")
        writer.writerow(header)
        for i, cfg in enumerate(configurations):
            writer.writerow([i] + [f"{v:.9f}" for v in config_vector(cfg)])


def _write_body_points_csv(path, log, scenario: world.Scenario) -> None:
    model = scenario.model
    pps = scenario.controller.points_per_segment(model.n_segments)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "time_s", "point", "x_mm", "y_mm", "z_mm"])
        for rec in log.records:
            pts = body_points(rec.state, model, pps)
            for j, p in enumerate(pts):
                writer.writerow([rec.step, f"{rec.time_s:.6f}", j,
                                 f"{p[0]:.6f}", f"{p[1]:.6f}", f"{p[2]:.6f}"])


@click.group()
def main() -> None:
    """Safety-constrained motion planning for cable-driven continuum robots."""


@main.command("plan")
@click.option("--scenario", "scenario_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--seed", type=int, default=None, help="planner RNG seed override")
@click.option("--method", type=click.Choice(["rrt", "rrt_star"]), default="rrt_star")
@click.option("--figures/--no-figures", default=True, show_default=True)
def cmd_plan(scenario_path, out_dir, seed, method, figures) -> None:
    """Plan a single collision-free path and write path.csv / configs.csv."""
    scenario = _load(scenario_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    params = _planner_params(scenario, seed, method)
    try:
        start = initial_state(scenario)
    except (ValueError, NotConverged) as exc:
        raise click.ClickException(f"start state: {exc}") from None
    try:
        result = plan(
            start, np.asarray(scenario.goal_tip), scenario.obstacles, 0.0,
            params, scenario.controller, scenario.model, scenario.workspace,
            scenario.time_step,
        )
    except PlanFailed as exc:
        click.echo(f"planning failed: {exc}", err=True)
        sys.exit(EXIT_PLAN_FAILED)
    dense = smooth_path(np.asarray(result.path), 10.0)
    _write_path_csv(out / "path.csv", np.asarray(result.path))
    _write_configs_csv(out / "configs.csv", result.configurations,
                       scenario.model.n_segments)
    _write_path_csv(out / "path_smoothed.csv", dense)
    if figures:
        plots.plot_plan(scenario, np.asarray(result.path), dense,
                        result.configurations, out / "plan_view.png")
    click.echo(
        f"planned {len(result.path)} waypoints in {result.iterations_used} iterations "
        f"({result.wall_time:.2f} s); outputs in {out}"
    )


@main.command("simulate")
@click.option("--scenario", "scenario_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--seed", type=int, default=None, help="planner RNG seed override")
@click.option("--method", type=click.Choice(["rrt", "rrt_star"]), default="rrt_star")
@click.option("--ablation-no-safety", is_flag=True, default=False,
              help="disable the whole safety layer (contrast run)")
@click.option("--max-steps", type=int, default=300, show_default=True)
@click.option("--figures/--no-figures", default=True, show_default=True)
def cmd_simulate(scenario_path, out_dir, seed, method, ablation_no_safety,
                 max_steps, figures) -> None:
    """Execute the dynamic scenario step by step with replanning."""
    scenario = _load(scenario_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    params = _planner_params(scenario, seed, method)
    exit_code = EXIT_OK
    try:
        log = execute_dynamic(scenario, params, ablation_no_safety=ablation_no_safety,
                              max_steps=max_steps)
        message = f"reached the goal in {len(log.records) - 1} steps ({log.replan_count} replans)"
    except ExecutionFailed as exc:
        log = exc.log
        message = f"execution failed: {exc.reason} after {len(log.records) - 1} steps"
        exit_code = {
            "collision": EXIT_COLLISION,
            "budget": EXIT_BUDGET,
            "plan_failed": EXIT_EXEC_PLAN_FAILED,
        }[exc.reason]
    except (ValueError, NotConverged) as exc:
        raise click.ClickException(f"scenario invalid: {exc}") from None
    write_execution_log(log, out / "simulation_log.csv", scenario.model.n_segments)
    _write_body_points_csv(out / "body_points.csv", log, scenario)
    if figures and log.records:
        plots.plot_clearance(log, out / "clearance.png")
        plots.plot_execution(scenario, log, out / "trajectory.png")
    click.echo(f"{message}; outputs in {out}")
    sys.exit(exit_code)


@main.command("bench")
@click.option("--scenario", "scenario_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--seed", type=int, default=None, help="base seed override")
@click.option("--trials", type=int, default=25, show_default=True)
@click.option("--counts", default="1,3,5,7", show_default=True,
              help="comma-separated obstacle counts")
@click.option("--max-iterations", type=int, default=800, show_default=True,
              help="planner iteration budget per trial")
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--figures/--no-figures", default=True, show_default=True)
def cmd_bench(scenario_path, out_dir, seed, trials, counts, max_iterations,
              workers, figures) -> None:
    """Monte-Carlo comparison of the two planner variants."""
    scenario = _load(scenario_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        count_list = [int(c) for c in counts.split(",") if c.strip()]
    except ValueError:
        raise click.ClickException(f"bad --counts value {counts!r}") from None
    if trials < 1 or not count_list:
        raise click.ClickException("need at least one trial and one obstacle count")
    base_seed = scenario.rng_seed if seed is None else seed
    params = PlannerParams(max_iterations=max_iterations)
    records = bench_mod.run_trials(
        ("rrt", "rrt_star"), count_list, trials, base_seed, scenario,
        planner_params=params, workers=workers,
    )
    rows = bench_mod.summarize(records)
    bench_mod.write_trials_csv(records, out / "bench_trials.csv",
                               scenario.model.n_segments)
    bench_mod.write_summary_csv(rows, out / "bench_summary.csv")
    report = bench_mod.render_report(rows)
    (out / "report.txt").write_text(report + "\n")
    if figures:
        plots.plot_bench(rows, out / "bench_metrics.png")
    click.echo(report)
    click.echo(f"outputs in {out}")


if __name__ == "__main__":
    main()
