"""Figure rendering for the CLI report paths.

All plots are written straight to image files (headless backend); the CSVs
stay the primary data product and the figures mirror them.
"""

from __future__ import annotations

from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from . import world
from .bench import REFERENCE_RESULTS, SummaryRow
from .kinematics import RobotState, body_points
from .planner import ExecutionLog


def _draw_sphere(ax, center, radius, color, alpha=0.25):
    u = np.linspace(0.0, 2.0 * np.pi, 24)
    v = np.linspace(0.0, np.pi, 16)
    x = center[0] + radius * np.outer(np.cos(u), np.sin(v))
    y = center[1] + radius * np.outer(np.sin(u), np.sin(v))
    z = center[2] + radius * np.outer(np.ones_like(u), np.cos(v))
    ax.plot_surface(x, y, z, color=color, alpha=alpha, linewidth=0)


def _setup_axes(ax, scenario: world.Scenario):
    lo = scenario.workspace.min_corner
    hi = scenario.workspace.max_corner
    ax.set_xlim(lo[0], hi[0])
    ax.set_ylim(lo[1], hi[1])
    ax.set_zlim(lo[2], hi[2])
    ax.set_xlabel("x [mm]")
    ax.set_ylabel("y [mm]")
    ax.set_zlabel("z [mm]")


def plot_plan(
    scenario: world.Scenario,
    path: np.ndarray,
    smoothed: np.ndarray,
    configurations: Sequence[RobotState],
    out_path,
    t: float = 0.0,
) -> None:
    """3D view of the planned path, the robot postures along it, and the
    obstacles at the planning time."""
    fig = plt.figure(figsize=(7, 7))
    ax = fig.add_subplot(projection="3d")
    _setup_axes(ax, scenario)
    for obs in scenario.obstacles:
        center, radius = world.obstacle_state_at(obs, t)
        _draw_sphere(ax, center, radius, "tab:red")
    path = np.asarray(path)
    ax.plot(smoothed[:, 0], smoothed[:, 1], smoothed[:, 2], "-", color="tab:blue", lw=1.5,
            label="smoothed path")
    ax.plot(path[:, 0], path[:, 1], path[:, 2], "x", color="black", ms=7, label="waypoints")
    for cfg in configurations:
        pts = body_points(cfg, scenario.model, 10)
        ax.plot(pts[:, 0], pts[:, 1], pts[:, 2], "-", color="tab:green", lw=1.0, alpha=0.7)
    ax.scatter(*scenario.start_tip, color="gold", s=60, label="start")
    ax.scatter(*scenario.goal_tip, color="tab:green", s=60, label="goal")
    ax.legend(loc="upper left", fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=130)
    plt.close(fig)


def plot_execution(scenario: world.Scenario, log: ExecutionLog, out_path) -> None:
    """3D view of the executed tip trace with obstacles at the final time."""
    fig = plt.figure(figsize=(7, 7))
    ax = fig.add_subplot(projection="3d")
    _setup_axes(ax, scenario)
    t_final = log.records[-1].time_s if log.records else 0.0
    for obs in scenario.obstacles:
        center, radius = world.obstacle_state_at(obs, t_final)
        _draw_sphere(ax, center, radius, "tab:red")
    tips = np.array([r.tip for r in log.records])
    ax.plot(tips[:, 0], tips[:, 1], tips[:, 2], "-o", color="tab:blue", ms=2.5, lw=1.2,
            label="tip trace")
    stride = max(1, len(log.records) // 6)
    for rec in log.records[::stride]:
        pts = body_points(rec.state, scenario.model, 10)
        ax.plot(pts[:, 0], pts[:, 1], pts[:, 2], "-", color="tab:green", lw=1.0, alpha=0.6)
    ax.scatter(*scenario.start_tip, color="gold", s=60, label="start")
    ax.scatter(*scenario.goal_tip, color="tab:green", s=60, label="goal")
    ax.legend(loc="upper left", fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=130)
    plt.close(fig)


def plot_clearance(log: ExecutionLog, out_path) -> None:
    """Minimum robot-obstacle distance per time step."""
    times = [r.time_s for r in log.records]
    clear = [r.min_clearance_mm for r in log.records]
    fig, ax = plt.subplots(figsize=(7, 3.2))
    ax.plot(times, clear, "-o", ms=3, color="tab:blue")
    ax.axhline(0.0, color="tab:red", lw=1.0, ls="--")
    for rec in log.records:
        if rec.replanned:
            ax.axvline(rec.time_s, color="gray", lw=0.6, alpha=0.5)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("min clearance [mm]")
    ax.set_title("robot-obstacle clearance (gray lines: replans)")
    fig.tight_layout()
    fig.savefig(out_path, dpi=130)
    plt.close(fig)


def plot_bench(rows: Sequence[SummaryRow], out_path) -> None:
    """Success rate and mean successful path length per obstacle count,
    desk-scale results next to the shipped reference values."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    styles = {"rrt": ("tab:blue", "o"), "rrt_star": ("tab:orange", "s")}
    for method in sorted({r.method for r in rows}):
        cells = sorted(r for r in rows if r.method == method)
        counts = [r.obstacle_count for r in cells]
        color, marker = styles.get(method, ("tab:green", "^"))
        ax1.plot(counts, [r.success_rate for r in cells], marker=marker, color=color,
                 label=f"{method} (this run)")
        ax2.plot(counts, [r.mean_length_mm or np.nan for r in cells], marker=marker,
                 color=color, label=f"{method} (this run)")
        ref = REFERENCE_RESULTS.get(method)
        if ref:
            ref_counts = sorted(ref["success"])
            ax1.plot(ref_counts, [ref["success"][c] for c in ref_counts], ls="--",
                     marker=marker, color=color, alpha=0.45, label=f"{method} (reference)")
            ax2.plot(ref_counts, [ref["length_mm"][c] for c in ref_counts], ls="--",
                     marker=marker, color=color, alpha=0.45, label=f"{method} (reference)")
    ax1.set_xlabel("obstacles")
    ax1.set_ylabel("success rate")
    ax1.set_ylim(0, 1.05)
    ax2.set_xlabel("obstacles")
    ax2.set_ylabel("mean successful path length [mm]")
    ax1.legend(fontsize=7)
    ax2.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(out_path, dpi=130)
    plt.close(fig)
