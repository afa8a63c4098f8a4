"""Monte-Carlo benchmark: random dynamic obstacle fields, tree planning with
and without rewiring, and per-cell success/time/length metrics.

Scenarios are derived deterministically from (base_seed, obstacle_count,
trial index); both planner variants see bit-identical scenarios. A trial
counts as a success only if the planned path and every robot shape pass an
independent clearance re-check.
"""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import world
from .control import NotConverged, track_waypoint
from .kinematics import RobotState, config_vector
from .planner import (
    PlanFailed,
    PlannerParams,
    initial_state,
    plan,
    smooth_path,
)

# §-style reference results shipped with the benchmark for side-by-side
# comparison in the report (workstation-class hardware, parameters not
# published; reproduce trends, not absolute values).
REFERENCE_RESULTS = {
    "rrt": {
        "time_s": {1: 3.05, 3: 4.77, 5: 5.55, 7: 6.36},
        "success": {1: 0.99, 3: 0.97, 5: 0.95, 7: 0.90},
        "length_mm": {1: 715.36, 3: 736.11, 5: 785.46, 7: 743.36},
    },
    "rrt_star": {
        "time_s": {1: 3.66, 3: 4.82, 5: 6.07, 7: 7.30},
        "success": {1: 0.99, 3: 0.89, 5: 0.78, 7: 0.65},
        "length_mm": {1: 609.07, 3: 626.70, 5: 625.46, 7: 597.45},
    },
}

RADIUS_BASE_RANGE = (30.0, 50.0)
RADIUS_AMPLITUDE_RANGE = (10.0, 20.0)
TRAVEL_SPAN_RANGE = (50.0, 100.0)
MEAN_SPEED_RANGE = (5.0, 14.0)
START_RESAMPLE_LIMIT = 100


class ScenarioInfeasible(RuntimeError):
    """Could not draw an obstacle field that leaves the start state free."""


@dataclass(frozen=True)
class TrialRecord:
    method: str
    obstacle_count: int
    seed: int
    success: bool
    plan_time_s: float
    path_length_mm: float | None
    first_three_configs: tuple[RobotState, ...]
    trial: int = 0

    def __post_init__(self):
        if (self.path_length_mm is not None) != self.success:
            raise ValueError("path length must be present exactly when the trial succeeded")
        if len(self.first_three_configs) > 3:
            raise ValueError("at most three configurations are recorded")


@dataclass(frozen=True)
class SummaryRow:
    method: str
    obstacle_count: int
    trials: int
    success_rate: float
    mean_time_s: float
    mean_length_mm: float | None
    mean_time_success_s: float | None


def _unit_vector(rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def _scenario_seed(base_seed: int, obstacle_count: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=base_seed, spawn_key=(obstacle_count, index))


def random_scenario(
    obstacle_count: int,
    rng: np.random.Generator,
    base: world.Scenario,
    start_state: RobotState | None = None,
) -> world.Scenario:
    """Random dynamic obstacle field along the start-goal corridor.

    Radii pulse as base + amplitude * sin(t); centers oscillate linearly over
    a 50-100 mm span at a mean speed under the tracking limit. Resamples until
    the start configuration is collision-free at t=0.
    """
    if obstacle_count < 0:
        raise ValueError("obstacle_count must be non-negative")
    if start_state is None:
        start_state = initial_state(replace(base, obstacles=()))
    start = np.asarray(base.start_tip)
    goal = np.asarray(base.goal_tip)
    corridor = goal - start
    pps = base.controller.points_per_segment(base.model.n_segments)

    for _ in range(START_RESAMPLE_LIMIT):
        obstacles = []
        for _ in range(obstacle_count):
            a = rng.uniform(*RADIUS_BASE_RANGE)
            b = rng.uniform(*RADIUS_AMPLITUDE_RANGE)
            u = rng.uniform(0.25, 0.75)
            lateral = _unit_vector(rng)
            placement = start + u * corridor + lateral * rng.uniform(0.0, 40.0)
            span = rng.uniform(*TRAVEL_SPAN_RANGE)
            direction = _unit_vector(rng)
            speed = rng.uniform(*MEAN_SPEED_RANGE)
            obstacles.append(
                world.DynamicSphere(
                    center=tuple(placement),
                    radius_base=a,
                    radius_amplitude=b,
                    radius_rate=1.0,
                    radius_phase="sin",
                    motion=world.LinearOscillation(
                        end_a=tuple(placement - 0.5 * span * direction),
                        end_b=tuple(placement + 0.5 * span * direction),
                        phase="sin" if rng.random() < 0.5 else "cos",
                        rate=speed * math.pi / span,
                    ),
                )
            )
        scenario = replace(base, obstacles=tuple(obstacles))
        if world.state_is_safe(
            start_state, base.model, scenario.obstacles, 0.0, base.workspace,
            base.model.body_radius, pps,
        ):
            return scenario
    raise ScenarioInfeasible(
        f"no safe start after {START_RESAMPLE_LIMIT} obstacle draws"
    )


def _first_three_configs(
    start_state: RobotState,
    dense_path: np.ndarray,
    scenario: world.Scenario,
) -> tuple[RobotState, ...]:
    """Configurations tracking the first three smoothed waypoints."""
    configs = []
    state = start_state
    for waypoint in dense_path[1:4]:
        try:
            state, _ = track_waypoint(
                state, waypoint, scenario.obstacles, (0.0, scenario.time_step),
                scenario.controller, scenario.model,
            )
        except NotConverged as nc:
            state = nc.state
        configs.append(state)
    return tuple(configs)


def _revalidate(
    result_path: np.ndarray,
    configs: Sequence[RobotState],
    scenario: world.Scenario,
) -> bool:
    """Independent failure rule: the planned path and every robot shape must
    clear the obstacles at both ends of the first step."""
    times = (0.0, scenario.time_step)
    snaps = world.obstacle_states(scenario.obstacles, times)
    if snaps and world.points_clearance(result_path, snaps) < 0.0:
        return False
    pps = scenario.controller.points_per_segment(scenario.model.n_segments)
    for cfg in configs:
        if world.state_clearance(cfg, scenario.model, scenario.obstacles, times, pps) <= 0.0:
            return False
    return True


def run_single_trial(
    method: str,
    obstacle_count: int,
    index: int,
    base_seed: int,
    base: world.Scenario,
    planner_params: PlannerParams,
    waypoint_spacing: float = 10.0,
    start_state: RobotState | None = None,
) -> TrialRecord:
    seq = _scenario_seed(base_seed, obstacle_count, index)
    scenario_rng = np.random.default_rng(seq)
    if start_state is None:
        start_state = initial_state(replace(base, obstacles=()))
    scenario = random_scenario(obstacle_count, scenario_rng, base, start_state)
    planner_seed = int(np.random.default_rng(seq.spawn(1)[0]).integers(2**63))
    params = replace(planner_params, method=method, rng_seed=planner_seed)

    t0 = time.perf_counter()
    try:
        result = plan(
            start_state, np.asarray(scenario.goal_tip), scenario.obstacles, 0.0,
            params, scenario.controller, scenario.model, scenario.workspace,
            scenario.time_step,
        )
    except PlanFailed:
        return TrialRecord(method, obstacle_count, planner_seed, False,
                           time.perf_counter() - t0, None, (), trial=index)
    plan_time = time.perf_counter() - t0

    dense = smooth_path(result.path, waypoint_spacing)
    configs = _first_three_configs(start_state, dense, scenario)
    ok = _revalidate(dense, tuple(result.configurations) + configs, scenario)
    length = float(np.sum(np.linalg.norm(np.diff(dense, axis=0), axis=1)))
    return TrialRecord(
        method, obstacle_count, planner_seed, ok, plan_time,
        length if ok else None, configs, trial=index,
    )


def _trial_task(args):
    return run_single_trial(*args)


def run_trials(
    methods: Sequence[str],
    obstacle_counts: Sequence[int],
    trials_per_cell: int,
    base_seed: int,
    base: world.Scenario,
    planner_params: PlannerParams | None = None,
    workers: int = 1,
) -> list[TrialRecord]:
    """All trial records for the (method x obstacle_count) grid.

    Deterministic in base_seed: scenarios depend only on (base_seed, count,
    index), so every method sees identical worlds. Trials may run in parallel.
    """
    if trials_per_cell < 1:
        raise ValueError("trials_per_cell must be at least 1")
    params = planner_params or PlannerParams()
    start_state = initial_state(replace(base, obstacles=()))
    tasks = [
        (method, count, index, base_seed, base, params, 10.0, start_state)
        for count in obstacle_counts
        for index in range(trials_per_cell)
        for method in methods
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_trial_task, tasks, chunksize=4))
    else:
        records = [run_single_trial(*t) for t in tasks]
    records.sort(key=lambda r: (r.method, r.obstacle_count, r.trial))
    return records


def summarize(records: Sequence[TrialRecord]) -> list[SummaryRow]:
    """Per-cell aggregates in (method, obstacle_count) order."""
    if not records:
        raise ValueError("no records to summarize")
    cells: dict[tuple[str, int], list[TrialRecord]] = {}
    for rec in records:
        cells.setdefault((rec.method, rec.obstacle_count), []).append(rec)
    rows = []
    for (method, count) in sorted(cells):
        group = cells[(method, count)]
        succ = [r for r in group if r.success]
        rows.append(
            SummaryRow(
                method=method,
                obstacle_count=count,
                trials=len(group),
                success_rate=len(succ) / len(group),
                mean_time_s=float(np.mean([r.plan_time_s for r in group])),
                mean_length_mm=(
                    float(np.mean([r.path_length_mm for r in succ])) if succ else None
                ),
                mean_time_success_s=(
                    float(np.mean([r.plan_time_s for r in succ])) if succ else None
                ),
            )
        )
    return rows


# ---------------------------------------------------------------------------
# CSV / report output
# ---------------------------------------------------------------------------


def _config_columns(n_segments: int) -> list[str]:
    cols = []
    for c in range(1, 4):
        for k in range(1, n_segments + 1):
            cols += [f"config{c}_theta_{k}", f"config{c}_phi_{k}"]
        cols.append(f"config{c}_base_z")
    return cols


def write_trials_csv(records: Sequence[TrialRecord], path, n_segments: int) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["method", "obstacle_count", "trial", "seed", "success",
             "plan_time_s", "path_length_mm"] + _config_columns(n_segments)
        )
        for r in records:
            row = [r.method, r.obstacle_count, r.trial, r.seed, int(r.success),
                   f"{r.plan_time_s:.6f}",
                   f"{r.path_length_mm:.6f}" if r.path_length_mm is not None else ""]
            for c in range(3):
                if c < len(r.first_three_configs):
                    vec = config_vector(r.first_three_configs[c])
                    row += [f"{v:.9f}" for v in vec]
                else:
                    row += [""] * (2 * n_segments + 1)
            writer.writerow(row)


def write_summary_csv(rows: Sequence[SummaryRow], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "obstacle_count", "trials", "success_rate",
                         "mean_time_s", "mean_length_mm", "mean_time_success_s"])
        for r in rows:
            writer.writerow([
                r.method, r.obstacle_count, r.trials, f"{r.success_rate:.4f}",
                f"{r.mean_time_s:.6f}",
                f"{r.mean_length_mm:.6f}" if r.mean_length_mm is not None else "",
                f"{r.mean_time_success_s:.6f}" if r.mean_time_success_s is not None else "",
            ])


def render_report(rows: Sequence[SummaryRow]) -> str:
    """Plain-text report juxtaposing the desk-scale run with the shipped
    reference results."""
    lines = ["Benchmark results (desk scale)", "=" * 62]
    lines.append(f"{'method':^10} {'obs':>4} {'trials':>7} {'succ':>7} "
                 f"{'time_s':>8} {'len_mm':>9}")
    for r in rows:
        length = f"{r.mean_length_mm:9.2f}" if r.mean_length_mm is not None else "        -"
        lines.append(f"{r.method:^10} {r.obstacle_count:>4} {r.trials:>7} "
                     f"{r.success_rate:>6.0%} {r.mean_time_s:>8.2f} {length}")
    lines.append("")
    lines.append("Reference results (published benchmark; different hardware and")
    lines.append("unpublished parameters -- compare trends, not absolute values)")
    lines.append("=" * 62)
    lines.append(f"{'method':^10} {'obs':>4} {'succ':>7} {'time_s':>8} {'len_mm':>9}")
    for method in ("rrt", "rrt_star"):
        ref = REFERENCE_RESULTS[method]
        for count in sorted(ref["time_s"]):
            lines.append(
                f"{method:^10} {count:>4} {ref['success'][count]:>6.0%} "
                f"{ref['time_s'][count]:>8.2f} {ref['length_mm'][count]:>9.2f}"
            )
    lines.append("")
    lines.append("Mean time includes failed trials; mean_time_success_s in the")
    lines.append("summary CSV restricts to successful ones. Wall times are")
    lines.append("hardware-bound and never gated.")
    return "\n".join(lines)
