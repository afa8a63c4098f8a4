"""Tip-space RRT / RRT* planning with safety-constrained steering, spline
smoothing, and the dynamic replanning executor.

The planner samples tip positions, extends the tree by bounded steps, and
verifies each extension twice: the straight tip edge must clear all obstacles
at both the current and the next obstacle snapshot, and the robot body must
reach the new vertex through the collision-aware IK solver. RRT* additionally
chooses the cheapest parent in a fixed neighborhood and rewires.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import world
from .control import ControllerParams, NotConverged, clearance_ascent, track_waypoint
from .kinematics import (
    RobotModel,
    RobotState,
    SegmentConfig,
    cable_vector,
    config_vector,
    state_from_vector,
    tip_position,
    wrap_angles,
)

SAMPLE_REJECTION_LIMIT = 10_000


class SamplingExhausted(RuntimeError):
    """Free-space sampling failed too many times in a row (space saturated)."""


class PlanFailed(RuntimeError):
    """The iteration budget ran out before the goal joined the tree.

    Carries the final tree under .nodes for diagnostics."""

    def __init__(self, iterations: int, nodes: list["PlanNode"] | None = None):
        super().__init__(f"no path after {iterations} iterations")
        self.iterations = iterations
        self.nodes = nodes or []


class ExecutionFailed(RuntimeError):
    """Dynamic execution aborted; carries the partial log and a reason:
    'collision', 'budget', or 'plan_failed'."""

    def __init__(self, reason: str, log: "ExecutionLog"):
        super().__init__(f"execution failed: {reason}")
        self.reason = reason
        self.log = log


@dataclass(frozen=True)
class PlannerParams:
    """Sampling-planner knobs; method picks plain RRT or RRT* (with rewiring)."""

    max_iterations: int = 2000
    step_size: float = 40.0
    goal_bias: float = 0.05
    goal_tolerance: float = 10.0
    rewire_radius: float = 80.0
    rng_seed: int = 0
    method: str = "rrt_star"

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.step_size <= 0.0:
            raise ValueError("step_size must be positive")
        if not (0.0 <= self.goal_bias <= 1.0):
            raise ValueError("goal_bias must lie in [0, 1]")
        if self.goal_tolerance <= 0.0 or self.rewire_radius <= 0.0:
            raise ValueError("goal_tolerance and rewire_radius must be positive")
        if self.method not in ("rrt", "rrt_star"):
            raise ValueError(f"method must be 'rrt' or 'rrt_star', got {self.method!r}")


@dataclass
class PlanNode:
    """One tree vertex: tip position, parent link, path cost, and the
    IK-verified robot configuration that realizes the position."""

    position: np.ndarray
    parent: int | None
    cost: float
    config: RobotState


@dataclass(frozen=True)
class PlanResult:
    path: tuple[np.ndarray, ...]
    configurations: tuple[RobotState, ...]
    iterations_used: int
    wall_time: float
    success: bool


# ---------------------------------------------------------------------------
# planner primitives
# ---------------------------------------------------------------------------


def sample_free(
    workspace: world.Workspace,
    goal: np.ndarray,
    goal_bias: float,
    obstacles: Sequence[world.DynamicSphere],
    t: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Goal with probability goal_bias, else a uniform point outside all
    obstacle interiors. Raises SamplingExhausted after too many rejections."""
    if rng.random() < goal_bias:
        return np.asarray(goal, dtype=float)
    snaps = world.obstacle_states(obstacles, (t,)) if obstacles else []
    for _ in range(SAMPLE_REJECTION_LIMIT):
        p = workspace.sample(rng)
        if not snaps or world.points_clearance(p[None, :], snaps) >= 0.0:
            return p
    raise SamplingExhausted(f"{SAMPLE_REJECTION_LIMIT} rejections in a row")


def nearest_node(positions: np.ndarray, p: np.ndarray) -> int:
    """Index of the Euclidean-nearest stored position; ties go to the lowest index."""
    if len(positions) == 0:
        raise ValueError("empty tree")
    d2 = np.sum((positions - np.asarray(p)) ** 2, axis=1)
    return int(np.argmin(d2))


def steer(p_from: np.ndarray, p_to: np.ndarray, step_size: float) -> np.ndarray:
    """Point at most step_size along the ray from p_from toward p_to."""
    a = np.asarray(p_from, dtype=float)
    b = np.asarray(p_to, dtype=float)
    d = b - a
    dist = float(np.linalg.norm(d))
    if dist <= step_size or dist == 0.0:
        return b.copy()
    return a + d * (step_size / dist)


# ---------------------------------------------------------------------------
# planning
# ---------------------------------------------------------------------------


def _descendants(children: list[set[int]], root: int):
    stack = list(children[root])
    while stack:
        i = stack.pop()
        yield i
        stack.extend(children[i])


def plan_with_tree(
    start_state: RobotState,
    goal_tip: np.ndarray,
    obstacles: Sequence[world.DynamicSphere],
    t: float,
    planner_params: PlannerParams,
    controller_params: ControllerParams,
    model: RobotModel,
    workspace: world.Workspace,
    time_step: float = 1.0,
    safety_enabled: bool = True,
) -> tuple[PlanResult, list[PlanNode]]:
    """Run the planner and also return the final tree (for inspection)."""
    t0 = time.perf_counter()
    goal = np.asarray(goal_tip, dtype=float)
    t_next = t + time_step
    pps = controller_params.points_per_segment(model.n_segments)
    # plans keep the body a safety threshold beyond the hard floor and the
    # tip path a threshold off the surfaces, so mild obstacle growth between
    # replans does not immediately invalidate them
    margin = model.body_radius + controller_params.safety_margin
    edge_margin = controller_params.safety_margin

    # plan against each obstacle's radius envelope: routes that only exist at
    # a favorable phase of the pulsation get claimed before the robot is
    # through them
    obstacles = envelope_obstacles(obstacles) if safety_enabled else ()
    snaps_both = world.obstacle_states(obstacles, (t, t_next)) if obstacles else []

    root_tip = tip_position(start_state, model)
    nodes = [PlanNode(root_tip, None, 0.0, start_state)]
    children: list[set[int]] = [set()]
    positions = np.empty((planner_params.max_iterations + 1, 3))
    positions[0] = root_tip

    def finish(goal_idx: int, iterations: int) -> tuple[PlanResult, list[PlanNode]]:
        chain = []
        i: int | None = goal_idx
        while i is not None:
            chain.append(i)
            i = nodes[i].parent
        chain.reverse()
        return (
            PlanResult(
                path=tuple(nodes[i].position.copy() for i in chain),
                configurations=tuple(nodes[i].config for i in chain),
                iterations_used=iterations,
                wall_time=time.perf_counter() - t0,
                success=True,
            ),
            nodes,
        )

    if float(np.linalg.norm(root_tip - goal)) <= planner_params.goal_tolerance:
        return finish(0, 0)

    rng = np.random.default_rng(planner_params.rng_seed)
    rewire = planner_params.method == "rrt_star"

    # a collision-aware configuration at (or near) the goal, solved once:
    # seeds the vertex solves close to the goal, where continuation from
    # above tends to land in the wrong bend basin
    goal_config: RobotState | None = None
    try:
        goal_config = solve_tip_ik(
            goal, model, controller_params, obstacles, (t, t_next)
        )
    except NotConverged as nc:
        # penalty equilibrium can stop short of the tolerance; the state is
        # still an excellent seed if it got anywhere near the goal
        if nc.tip_error <= planner_params.goal_tolerance:
            goal_config = nc.state
    near_goal_range = 2.0 * planner_params.step_size

    for it in range(1, planner_params.max_iterations + 1):
        p_rand = sample_free(
            workspace, goal, planner_params.goal_bias, obstacles, t, rng
        )
        i_near = nearest_node(positions[: len(nodes)], p_rand)
        p_new = steer(nodes[i_near].position, p_rand, planner_params.step_size)

        if snaps_both and world.points_clearance(p_new[None, :], snaps_both) < edge_margin:
            continue
        if safety_enabled and not world.edge_is_safe(
            nodes[i_near].position, p_new, obstacles, t, t_next, margin=edge_margin
        ):
            continue

        # configuration for the new vertex: continuation from the parent's
        # configuration (penalty active, so the body motion is
        # collision-aware). When continuation settles short, alternate seeds
        # may take over, but only if the configuration morph from the parent
        # is itself collision-free: the tree must stay executable.
        near_goal = float(np.linalg.norm(p_new - goal)) <= near_goal_range
        try:
            config, err = track_waypoint(
                nodes[i_near].config, p_new, obstacles, (t, t_next),
                controller_params, model,
            )
        except NotConverged as nc:
            config, err = nc.state, nc.tip_error
        if err >= controller_params.tip_tolerance:
            alt_seeds: list[RobotState] = []
            if near_goal:
                if goal_config is not None:
                    alt_seeds.append(goal_config)
                alt_seeds.extend(_seed_states(p_new, model))
            elif float(np.linalg.norm(tip_position(config, model) - nodes[i_near].position)) < 1.0:
                alt_seeds.append(neutral_state_toward(p_new, model))
            for seed in alt_seeds:
                try:
                    config2, err2 = track_waypoint(
                        seed, p_new, obstacles, (t, t_next), controller_params, model
                    )
                except NotConverged as nc:
                    config2, err2 = nc.state, nc.tip_error
                if err2 < err and (
                    not safety_enabled
                    or config_sweep_safe(
                        nodes[i_near].config, config2, model, obstacles,
                        (t, t_next), model.body_radius, pps,
                    )
                ):
                    config, err = config2, err2
                    if err < controller_params.tip_tolerance:
                        break
        if (
            err >= controller_params.tip_tolerance
            and err <= planner_params.step_size
        ):
            # penalty equilibrium stopped short: polish the last hop without
            # the penalty; the hard clearance check below decides admission
            try:
                polished, err_p = track_waypoint(
                    config, p_new, (), t, controller_params, model
                )
                if err_p < controller_params.tip_tolerance and world.state_is_safe(
                    polished, model, obstacles, (t, t_next), workspace, margin, pps
                ):
                    config, err = polished, err_p
            except NotConverged:
                pass
        if err >= controller_params.tip_tolerance:
            p_new = tip_position(config, model)
            if float(np.linalg.norm(p_new - nodes[i_near].position)) < 1.0:
                continue
            if not workspace.contains(p_new):
                continue
            if snaps_both and world.points_clearance(p_new[None, :], snaps_both) < edge_margin:
                continue
            if safety_enabled and not world.edge_is_safe(
                nodes[i_near].position, p_new, obstacles, t, t_next, margin=edge_margin
            ):
                continue
        if not world.state_is_safe(
            config, model, obstacles, (t, t_next), workspace, margin, pps
        ):
            continue

        parent = i_near
        if rewire:
            d2 = np.sum((positions[: len(nodes)] - p_new) ** 2, axis=1)
            near_ids = np.flatnonzero(d2 <= planner_params.rewire_radius**2)
            dists = np.sqrt(d2[near_ids])
            best_cost = nodes[i_near].cost + float(np.linalg.norm(p_new - nodes[i_near].position))
            order = np.argsort([nodes[j].cost + dists[k] for k, j in enumerate(near_ids)])
            for k in order:
                j = int(near_ids[k])
                cand_cost = nodes[j].cost + float(dists[k])
                if cand_cost >= best_cost - 1e-12:
                    break
                if not safety_enabled or world.edge_is_safe(
                    nodes[j].position, p_new, obstacles, t, t_next, margin=edge_margin
                ):
                    parent, best_cost = j, cand_cost
                    break
            new_cost = best_cost
        else:
            new_cost = nodes[i_near].cost + float(np.linalg.norm(p_new - nodes[i_near].position))

        new_idx = len(nodes)
        nodes.append(PlanNode(p_new, parent, new_cost, config))
        children.append(set())
        children[parent].add(new_idx)
        positions[new_idx] = p_new

        if rewire:
            d2 = np.sum((positions[:new_idx] - p_new) ** 2, axis=1)
            for j in np.flatnonzero(d2 <= planner_params.rewire_radius**2):
                j = int(j)
                if j == parent:
                    continue
                through = new_cost + math.sqrt(float(d2[j]))
                if through >= nodes[j].cost - 1e-12:
                    continue
                if safety_enabled and not world.edge_is_safe(
                    p_new, nodes[j].position, obstacles, t, t_next, margin=edge_margin
                ):
                    continue
                delta = through - nodes[j].cost
                old_parent = nodes[j].parent
                if old_parent is not None:
                    children[old_parent].discard(j)
                nodes[j].parent = new_idx
                nodes[j].cost = through
                children[new_idx].add(j)
                for k in _descendants(children, j):
                    nodes[k].cost += delta

        if float(np.linalg.norm(p_new - goal)) <= planner_params.goal_tolerance:
            return finish(new_idx, it)

    raise PlanFailed(planner_params.max_iterations, nodes)


def plan(
    start_state: RobotState,
    goal_tip: np.ndarray,
    obstacles: Sequence[world.DynamicSphere],
    t: float,
    planner_params: PlannerParams,
    controller_params: ControllerParams,
    model: RobotModel,
    workspace: world.Workspace,
    time_step: float = 1.0,
    safety_enabled: bool = True,
) -> PlanResult:
    """Plan a tip path from the current state to the goal at time t.

    Obstacles are honored at both t and t + time_step. Raises PlanFailed when
    the iteration budget is exhausted.
    """
    result, _ = plan_with_tree(
        start_state, goal_tip, obstacles, t, planner_params, controller_params,
        model, workspace, time_step, safety_enabled,
    )
    return result


# ---------------------------------------------------------------------------
# spline smoothing
# ---------------------------------------------------------------------------


def _catmull_rom_span(p0, p1, p2, p3, ts: np.ndarray) -> np.ndarray:
    """Centripetal Catmull-Rom points between p1 and p2 at fractions ts."""
    pts = np.stack([p0, p1, p2, p3])
    knots = np.zeros(4)
    for i in range(3):
        knots[i + 1] = knots[i] + math.sqrt(np.linalg.norm(pts[i + 1] - pts[i]))
    t = knots[1] + ts[:, None] * (knots[2] - knots[1])
    t0, t1, t2, t3 = knots

    def lerp(a, b, ka, kb):
        w = (t - ka) / (kb - ka)
        return (1.0 - w) * a + w * b

    a1 = lerp(p0, p1, t0, t1)
    a2 = lerp(p1, p2, t1, t2)
    a3 = lerp(p2, p3, t2, t3)
    b1 = lerp(a1, a2, t0, t2)
    b2 = lerp(a2, a3, t1, t3)
    return lerp(b1, b2, t1, t2)


def smooth_path(path: Sequence[np.ndarray], spacing: float) -> np.ndarray:
    """Centripetal Catmull-Rom interpolation through all waypoints, resampled
    so consecutive output points are at most `spacing` apart.

    Endpoint tangents come from reflected phantom points; every original
    waypoint appears in the output exactly.
    """
    if spacing <= 0.0:
        raise ValueError("spacing must be positive")
    pts = np.asarray(path, dtype=float).reshape(-1, 3)
    if len(pts) < 2:
        raise ValueError("need at least 2 waypoints")
    keep = [0]
    for i in range(1, len(pts)):
        if np.linalg.norm(pts[i] - pts[keep[-1]]) > 1e-9:
            keep.append(i)
    pts = pts[keep]
    if len(pts) == 1:  # degenerate: all waypoints coincide
        return np.vstack([pts[0], pts[0]])

    ext = np.vstack([2.0 * pts[0] - pts[1], pts, 2.0 * pts[-1] - pts[-2]])
    out = [pts[0]]
    for j in range(len(pts) - 1):
        p0, p1, p2, p3 = ext[j], ext[j + 1], ext[j + 2], ext[j + 3]
        probe = _catmull_rom_span(p0, p1, p2, p3, np.linspace(0.0, 1.0, 33))
        arc = float(np.sum(np.linalg.norm(np.diff(probe, axis=0), axis=1)))
        n_sub = max(1, math.ceil(arc / spacing))
        for _ in range(8):
            ts = np.linspace(0.0, 1.0, n_sub + 1)
            samples = _catmull_rom_span(p0, p1, p2, p3, ts)
            samples[-1] = p2
            gaps = np.linalg.norm(np.diff(samples, axis=0), axis=1)
            if float(np.max(gaps)) <= spacing:
                break
            n_sub *= 2
        out.extend(samples[1:])
    return np.asarray(out)


# ---------------------------------------------------------------------------
# dynamic execution
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StepRecord:
    step: int
    time_s: float
    state: RobotState
    tip: np.ndarray
    tip_error_mm: float
    min_clearance_mm: float
    replanned: bool


@dataclass
class ExecutionLog:
    records: list[StepRecord]
    success: bool = False
    failure_reason: str | None = None
    replan_count: int = 0

    @property
    def min_clearance(self) -> float:
        return min((r.min_clearance_mm for r in self.records), default=math.inf)


def neutral_state_toward(target: np.ndarray, model: RobotModel) -> RobotState:
    """Straight robot whose bend planes face the target: a good IK seed.

    The insertion depth is chosen so the target sits inside ~95% of the reach
    envelope, keeping the solve away from the stretched-out singularity.
    """
    target = np.asarray(target, dtype=float)
    local = model.base_rotation.T @ (target - np.array([0.0, 0.0, model.mount_height]))
    radial2 = local[0] ** 2 + local[1] ** 2
    phi = math.atan2(local[1], local[0]) if radial2 > 1e-12 else 0.0
    total = float(np.sum(model.lengths))
    lo, hi = model.base_z_limits
    drop = math.sqrt(max((0.95 * total) ** 2 - radial2, 0.0))
    z = min(max(float(local[2]) - drop, lo), hi)
    return RobotState(tuple(SegmentConfig(0.0, phi) for _ in model.segments), z)


def _seed_states(target: np.ndarray, model: RobotModel):
    """IK seed family: the straight-toward-target state, same-plane bend
    splits, and opposite-plane S-shapes. Greedy descent from a single seed can
    curl a segment into its limit or through an obstacle; one of these seeds
    usually lands in the right basin."""
    yield neutral_state_toward(target, model)
    local = model.base_rotation.T @ (target - np.array([0.0, 0.0, model.mount_height]))
    radial = math.hypot(local[0], local[1])
    phi = math.atan2(local[1], local[0]) if radial > 1e-9 else 0.0
    lo, hi = model.base_z_limits
    z = min(max(float(local[2]) - 0.8 * float(np.sum(model.lengths)), lo), hi)
    beta = math.atan2(radial, local[2] - z)
    total_bend = min(2.0 * beta, 2.0 * math.pi)
    n = model.n_segments
    for split in (0.5, 1.0):
        th1 = min(math.pi, total_bend * split)
        th2 = min(math.pi, max(total_bend - th1, 0.0))
        segs = [SegmentConfig(th1, phi)] + [
            SegmentConfig(th2 / max(n - 1, 1), phi) for _ in range(n - 1)
        ]
        yield RobotState(tuple(segs), z)
    phi_back = phi + math.pi
    for th1, th2 in ((1.0, 2.3), (2.3, 1.0)):
        segs = [SegmentConfig(th1, phi)] + [
            SegmentConfig(th2 / max(n - 1, 1), phi_back) for _ in range(n - 1)
        ]
        yield RobotState(tuple(segs), z)


def solve_tip_ik(
    target: np.ndarray,
    model: RobotModel,
    params: ControllerParams,
    obstacles: Sequence[world.DynamicSphere] = (),
    time_at: float | Sequence[float] = 0.0,
    lead_seeds: Sequence[RobotState] = (),
) -> RobotState:
    """IK to an absolute tip target, robust to bend-split local minima via a
    family of deterministic seeds (obstacle penalty active when obstacles are
    given). lead_seeds are tried first, in order. Raises NotConverged with the
    best state when nothing reaches the target."""
    target = np.asarray(target, dtype=float)
    best: tuple[float, RobotState] | None = None
    for seed in (*lead_seeds, *_seed_states(target, model)):
        try:
            state, err = track_waypoint(seed, target, obstacles, time_at, params, model)
            return state
        except NotConverged as nc:
            if best is None or nc.tip_error < best[0]:
                best = (nc.tip_error, nc.state)
    assert best is not None
    raise NotConverged(best[1], best[0])


def initial_state(scenario: world.Scenario) -> RobotState:
    """Deterministic start configuration whose tip sits at the scenario start.

    Solved in free space first (so the same geometry always yields the same
    candidate); when that shape would not clear the scenario's obstacles at
    t=0, the solve is repeated with the clearance penalty active. Raises
    ValueError when no collision-free start exists.
    """
    target = np.asarray(scenario.start_tip)
    model = scenario.model
    margin = model.body_radius
    ctrl = scenario.controller
    pps = ctrl.points_per_segment(model.n_segments)

    # solve from every seed and keep the posture with the most room against
    # the obstacles' radius envelopes: start postures that only clear a
    # pulsing obstacle at a favorable phase are fragile
    envelope = envelope_obstacles(scenario.obstacles)
    best: tuple[float, RobotState] | None = None
    for seed in _seed_states(target, model):
        try:
            cand, _ = track_waypoint(seed, target, (), 0.0, ctrl, model)
        except NotConverged:
            continue
        if not world.state_is_safe(cand, model, (), 0.0, scenario.workspace, 0.0, pps):
            continue
        clear = world.state_clearance(cand, model, envelope, (0.0,), pps)
        if best is None or clear > best[0]:
            best = (clear, cand)
    if best is not None and best[0] >= margin:
        return best[1]
    if best is not None and world.state_is_safe(
        best[1], model, scenario.obstacles, 0.0, scenario.workspace, margin, pps
    ):
        return best[1]

    # fall back to a penalty-shaped solve plus a penalty-free polish
    try:
        state = solve_tip_ik(target, model, ctrl, envelope, 0.0)
    except NotConverged as nc:
        if nc.tip_error > 0.1 * float(np.sum(model.lengths)):
            raise ValueError(
                f"no collision-free start configuration (residual {nc.tip_error:.2f} mm)"
            ) from None
        state = nc.state
    try:
        state, _ = track_waypoint(state, target, (), 0.0, ctrl, model)
    except NotConverged as nc:
        raise ValueError(
            f"start tip unreachable (residual {nc.tip_error:.2f} mm)"
        ) from None
    if not world.state_is_safe(state, model, scenario.obstacles, 0.0,
                               scenario.workspace, margin, pps):
        raise ValueError("start configuration cannot clear the obstacles at t=0")
    return state


def envelope_obstacles(
    obstacles: Sequence[world.DynamicSphere],
) -> tuple[world.DynamicSphere, ...]:
    """Obstacles with their radius pulsation replaced by its maximum."""
    return tuple(
        replace(o, radius_base=o.radius_base + o.radius_amplitude, radius_amplitude=0.0)
        for o in obstacles
    )


def config_sweep_safe(
    a: RobotState,
    b: RobotState,
    model: RobotModel,
    obstacles,
    times,
    margin: float,
    points_per_segment: int,
    samples: int = 5,
) -> bool:
    """Check the straight configuration-space morph between two states: every
    interpolated body must clear the obstacles. This is what makes a vertex
    whose bend basin differs from its parent's actually executable."""
    va = config_vector(a)
    vb = config_vector(b)
    delta = vb - va
    delta[1:-1:2] = wrap_angles(delta[1:-1:2])
    for s in np.linspace(0.0, 1.0, samples + 2)[1:-1]:
        st = state_from_vector(va + s * delta, model)
        if not world.state_is_safe(st, model, obstacles, times, None, margin,
                                   points_per_segment):
            return False
    return True


def _config_step_toward(
    state: RobotState,
    guide_vec: np.ndarray,
    model: RobotModel,
    obstacles,
    times,
    margin: float,
    points_per_segment: int,
    cable_cap: float,
    iterations: int = 8,
) -> RobotState | None:
    """Walk the configuration toward guide_vec in cable-capped sub-steps,
    keeping every intermediate state hard-safe. Returns the state reached, or
    None when not even the first nudge is safe."""
    moved = None
    current = state
    for _ in range(iterations):
        cur = config_vector(current)
        delta = guide_vec - cur
        delta[1:-1:2] = wrap_angles(delta[1:-1:2])
        if float(np.max(np.abs(delta))) < 1e-9:
            break
        cables_now = cable_vector(cur, model)
        full_dq = cable_vector(model.clamp_vector(cur + delta), model) - cables_now
        peak = float(np.max(np.abs(full_dq)))
        scale = min(1.0, cable_cap / peak) if peak > 1e-12 else 1.0
        accepted = None
        for s in (scale, 0.5 * scale, 0.25 * scale):
            cand_vec = model.clamp_vector(cur + s * delta)
            dq = cable_vector(cand_vec, model) - cables_now
            if float(np.max(np.abs(dq))) > cable_cap + 1e-12:
                continue
            cand = state_from_vector(cand_vec, model)
            if world.state_is_safe(cand, model, obstacles, times, None, margin,
                                   points_per_segment):
                accepted = cand
                break
        if accepted is None:
            break
        moved = accepted
        current = accepted
    return moved


def _remaining_path_safe(
    tip: np.ndarray,
    smoothed: np.ndarray,
    idx: int,
    obstacles,
    t: float,
    t_next: float,
) -> bool:
    if not world.edge_is_safe(tip, smoothed[idx], obstacles, t, t_next):
        return False
    for j in range(idx, len(smoothed) - 1):
        if not world.edge_is_safe(smoothed[j], smoothed[j + 1], obstacles, t, t_next):
            return False
    return True


def execute_dynamic(
    scenario: world.Scenario,
    planner_params: PlannerParams,
    ablation_no_safety: bool = False,
    waypoint_spacing: float = 10.0,
    max_steps: int = 300,
    advance_tolerance: float = 5.0,
) -> ExecutionLog:
    """Plan once, then track the smoothed path step by step while obstacles
    move, replanning from the current tip whenever the remaining path stops
    clearing the current and next obstacle snapshots.

    With ablation_no_safety the entire safety layer is disabled (no clearance
    penalty, no obstacle checks, no replanning): the contrast run that shows
    why the constraints matter. Collisions then surface as ExecutionFailed
    with reason 'collision'; the partial log rides on the exception.
    """
    model = scenario.model
    dt = scenario.time_step
    safety = not ablation_no_safety
    ctrl = scenario.controller if safety else replace(scenario.controller, penalty_mu=0.0)
    # one time step is a bounded actuation window; cap the per-step solver
    # effort accordingly
    step_ctrl = replace(ctrl, max_inner_iterations=min(ctrl.max_inner_iterations, 40))
    obstacles = scenario.obstacles
    goal = np.asarray(scenario.goal_tip)
    pps = ctrl.points_per_segment(model.n_segments)

    state = initial_state(scenario)
    if safety and not world.state_is_safe(
        state, model, obstacles, 0.0, scenario.workspace, model.body_radius, pps
    ):
        raise ValueError("scenario start state is not collision-free at t=0")

    log = ExecutionLog(records=[])

    def clearance(st: RobotState, times) -> float:
        return world.state_clearance(st, model, obstacles, times, pps)

    def make_plan(from_state: RobotState, t: float, budget: int | None = None,
                  attempt: int = 0):
        params = planner_params
        if budget is not None and budget < params.max_iterations:
            params = replace(params, max_iterations=budget)
        if attempt:
            # a repeated seed would redraw the exact sample sequence that
            # just failed; derive a fresh deterministic stream per attempt
            params = replace(
                params,
                rng_seed=int(np.random.default_rng(
                    (planner_params.rng_seed, attempt)).integers(2**63)),
            )
        result = plan(
            from_state, goal, obstacles if safety else (), t, params, ctrl,
            model, scenario.workspace, dt, safety_enabled=safety,
        )
        dense = smooth_path(result.path, waypoint_spacing)
        # per smoothed point: the planned configuration of the waypoint the
        # point leads to (used as a morph guide when tip tracking stalls)
        guides: list[RobotState] = []
        j = 0
        for p in dense:
            if j < len(result.path) - 1 and float(np.linalg.norm(p - result.path[j])) <= 1e-9:
                guides.append(result.configurations[j])
                j += 1
            else:
                guides.append(result.configurations[min(j, len(result.configurations) - 1)])
        return dense, guides

    t = 0.0
    try:
        smoothed, guides = make_plan(state, t)
    except PlanFailed:
        raise ExecutionFailed("plan_failed", log) from None
    idx = min(1, len(smoothed) - 1)

    tip = tip_position(state, model)
    log.records.append(
        StepRecord(0, 0.0, state, tip, float(np.linalg.norm(smoothed[idx] - tip)),
                   clearance(state, (0.0,)), False)
    )
    stalls = 0
    failed_replans = 0
    replan_attempts = 0

    for step in range(1, max_steps + 1):
        t_next = t + dt

        # retreat reflex: when the next obstacle snapshot crowds the current
        # body, back away first; path tracking can wait. The margin covers
        # the worst per-step obstacle approach (growth plus travel).
        threatened = safety and obstacles and not world.state_is_safe(
            state, model, obstacles, t_next, None, model.body_radius + 12.0, pps
        )

        replanned = False
        if safety and not threatened and (
            stalls >= 3
            or not _remaining_path_safe(tip, smoothed, idx, obstacles, t, t_next)
        ):
            replan_attempts += 1
            try:
                # fail fast on the first replan attempts; escalate the budget
                # only if the blockage persists
                smoothed, guides = make_plan(
                    state, t, budget=min(600 * 2**failed_replans, 1200),
                    attempt=replan_attempts,
                )
                idx = min(1, len(smoothed) - 1)
                replanned = True
                log.replan_count += 1
                failed_replans = 0
            except PlanFailed:
                # the pocket around the robot may be transiently blocked:
                # hold course and retry once the obstacles move on
                failed_replans += 1
            if failed_replans >= 3 or replan_attempts > 15:
                log.failure_reason = "plan_failed"
                raise ExecutionFailed("plan_failed", log) from None
            stalls = 0

        target = smoothed[idx]
        previous = state
        if threatened:
            # evade: descend the clearance penalty (no tip target) so the
            # whole body backs off the approaching surfaces
            stalls = 3  # force a replan once clear
            state = clearance_ascent(state, obstacles, (t, t_next), step_ctrl, model,
                                     stop_margin=model.body_radius + 14.0)
            err = float(np.linalg.norm(np.asarray(target) - tip_position(state, model)))
        else:
            try:
                state, err = track_waypoint(state, target, obstacles if safety else (),
                                            (t, t_next), step_ctrl, model)
            except NotConverged as nc:
                state, err = nc.state, nc.tip_error

        t_prev, t = t, t_next

        gate_ok = world.state_is_safe(
            state, model, obstacles, (t_prev, t), scenario.workspace,
            model.body_radius, pps,
        ) and world.state_is_safe(state, model, obstacles, t + dt, None, 0.0, pps)
        if safety and not threatened and not gate_ok:
            # hard gate: never occupy a state that is unsafe now or that an
            # obstacle will claim next step; evade from the previous state
            # instead and reroute
            state = clearance_ascent(previous, obstacles, (t_prev, t, t + dt), step_ctrl, model,
                                     stop_margin=model.body_radius + 14.0)
            stalls = 3
            err = float(np.linalg.norm(np.asarray(target) - tip_position(state, model)))

        tip = tip_position(state, model)

        # when tip tracking makes no headway (wrong bend basin for the
        # planned waypoint), morph toward the planned configuration instead;
        # only hard-safe nudges are taken
        if (
            safety
            and not threatened
            and float(np.linalg.norm(tip - tip_position(previous, model))) < 1.0
            and float(np.linalg.norm(tip - np.asarray(target))) > advance_tolerance
        ):
            nudged = _config_step_toward(
                state, config_vector(guides[idx]), model, obstacles,
                (t_prev, t), model.body_radius, pps, step_ctrl.max_step_norm,
            )
            if nudged is not None:
                state = nudged
                tip = tip_position(state, model)
                err = float(np.linalg.norm(np.asarray(target) - tip))

        # final approach: the penalty equilibrium can hover just outside the
        # goal tolerance; polish the last hop penalty-free and keep it only
        # when the hard clearance check passes
        if safety and idx == len(smoothed) - 1:
            goal_dist = float(np.linalg.norm(tip - goal))
            if planner_params.goal_tolerance < goal_dist <= 2.5 * planner_params.goal_tolerance:
                try:
                    polished, _ = track_waypoint(state, goal, (), t, step_ctrl, model)
                    if world.state_is_safe(
                        polished, model, obstacles, (t_prev, t),
                        scenario.workspace, model.body_radius, pps,
                    ):
                        state = polished
                        tip = tip_position(state, model)
                        err = float(np.linalg.norm(tip - target))
                except NotConverged:
                    pass

        clear = clearance(state, (t_prev, t))
        log.records.append(StepRecord(step, t, state, tip, float(err), clear, replanned))

        if clear < 0.0:
            log.failure_reason = "collision"
            raise ExecutionFailed("collision", log)

        if float(np.linalg.norm(tip - goal)) <= planner_params.goal_tolerance:
            log.success = True
            return log

        if stalls < 3:
            if float(np.linalg.norm(tip - target)) <= advance_tolerance:
                idx = min(idx + 1, len(smoothed) - 1)
                stalls = 0
            elif idx < len(smoothed) - 1:
                # penalty equilibrium can hover just outside the advance
                # radius; skip ahead along the dense path instead of fighting
                # the waypoint
                idx += 1
                stalls = 0
            else:
                stalls += 1

    log.failure_reason = "budget"
    raise ExecutionFailed("budget", log)


# ---------------------------------------------------------------------------
# CSV export
# ---------------------------------------------------------------------------


def execution_log_header(n_segments: int) -> list[str]:
    cols = ["step", "time_s", "tip_x", "tip_y", "tip_z",
            "tip_error_mm", "min_clearance_mm", "replanned"]
    for k in range(1, n_segments + 1):
        cols += [f"theta_{k}", f"phi_{k}"]
    cols.append("base_z")
    return cols


def write_execution_log(log: ExecutionLog, path, n_segments: int) -> None:
    """Write the per-step log as CSV (one row per time step)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(execution_log_header(n_segments))
        for r in log.records:
            row = [r.step, f"{r.time_s:.6f}"]
            row += [f"{v:.6f}" for v in r.tip]
            row += [f"{r.tip_error_mm:.6f}", f"{r.min_clearance_mm:.6f}", int(r.replanned)]
            for seg in r.state.segments:
                row += [f"{seg.theta:.9f}", f"{seg.phi:.9f}"]
            row.append(f"{r.state.base_z:.6f}")
            writer.writerow(row)
