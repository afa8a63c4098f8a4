"""Dynamic spherical obstacles, workspace bounds, and clearance queries.

Obstacles are spheres whose radius pulses as base + amplitude * sin/cos(rate*t)
and whose center may oscillate along a fixed line. All queries are pure
functions of time; negative clearance means penetration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

from .kinematics import RobotModel, RobotState, body_points

if TYPE_CHECKING:
    from .control import ControllerParams

# Obstacles faster than this (mean center speed, mm/s) are rejected: the
# tracking assumption breaks down and the two-time-state checks lose meaning.
MAX_MEAN_SPEED = 15.0


def _phase_fn(name: str):
    if name == "sin":
        return math.sin
    if name == "cos":
        return math.cos
    raise ValueError(f"phase must be 'sin' or 'cos', got {name!r}")


@dataclass(frozen=True)
class LinearOscillation:
    """Center motion along a fixed line: endpoint-to-endpoint oscillation.

    center(t) = midpoint + (b - a)/2 * phase(rate * t). Mean speed over a
    period is |b - a| * rate / pi.
    """

    end_a: tuple[float, float, float]
    end_b: tuple[float, float, float]
    phase: str = "sin"
    rate: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "end_a", tuple(float(v) for v in self.end_a))
        object.__setattr__(self, "end_b", tuple(float(v) for v in self.end_b))
        _phase_fn(self.phase)
        if self.rate <= 0.0:
            raise ValueError("oscillation rate must be positive")
        if self.mean_speed >= MAX_MEAN_SPEED:
            raise ValueError(
                f"mean obstacle speed {self.mean_speed:.2f} mm/s exceeds {MAX_MEAN_SPEED} mm/s"
            )

    @property
    def span(self) -> float:
        return float(np.linalg.norm(np.subtract(self.end_b, self.end_a)))

    @property
    def mean_speed(self) -> float:
        return self.span * self.rate / math.pi

    def center_at(self, t: float) -> np.ndarray:
        a = np.asarray(self.end_a)
        b = np.asarray(self.end_b)
        return 0.5 * (a + b) + 0.5 * (b - a) * _phase_fn(self.phase)(self.rate * t)


@dataclass(frozen=True)
class DynamicSphere:
    """Sphere with pulsing radius and optional oscillating center.

    radius(t) = radius_base + radius_amplitude * phase(radius_rate * t);
    radius_base must exceed radius_amplitude so the radius stays positive.
    """

    center: tuple[float, float, float]
    radius_base: float
    radius_amplitude: float = 0.0
    radius_rate: float = 1.0
    radius_phase: str = "sin"
    motion: LinearOscillation | None = None

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        if self.radius_amplitude < 0.0:
            raise ValueError("radius amplitude must be non-negative")
        if self.radius_base <= self.radius_amplitude:
            raise ValueError(
                f"radius base {self.radius_base} must exceed amplitude {self.radius_amplitude}"
            )
        _phase_fn(self.radius_phase)


def obstacle_state_at(obs: DynamicSphere, t: float) -> tuple[np.ndarray, float]:
    """Center and radius of an obstacle at time t."""
    radius = obs.radius_base + obs.radius_amplitude * _phase_fn(obs.radius_phase)(
        obs.radius_rate * t
    )
    if obs.motion is None:
        return np.asarray(obs.center, dtype=float), radius
    return obs.motion.center_at(t), radius


def obstacle_states(
    obstacles: Sequence[DynamicSphere], times: Iterable[float]
) -> list[tuple[np.ndarray, float]]:
    """All distinct (center, radius) snapshots of the obstacles at the given
    times. Static obstacles contribute one snapshot regardless of how many
    times are queried, so they are not double-counted by penalty sums."""
    out: list[tuple[np.ndarray, float]] = []
    seen: set[tuple[float, float, float, float]] = set()
    for t in times:
        for obs in obstacles:
            center, radius = obstacle_state_at(obs, t)
            key = (center[0], center[1], center[2], radius)
            if key not in seen:
                seen.add(key)
                out.append((center, radius))
    return out


def min_surface_distance(points: np.ndarray, obs: DynamicSphere, t: float) -> float:
    """Smallest signed distance from any point to the obstacle surface at time t."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] == 0:
        raise ValueError("need at least one point")
    center, radius = obstacle_state_at(obs, t)
    return float(np.min(np.linalg.norm(pts - center, axis=1)) - radius)


def points_clearance(
    points: np.ndarray, states: Sequence[tuple[np.ndarray, float]]
) -> float:
    """Smallest surface clearance of a point set over pre-evaluated obstacle states."""
    best = math.inf
    pts = np.atleast_2d(points)
    for center, radius in states:
        d = float(np.min(np.linalg.norm(pts - center, axis=1)) - radius)
        if d < best:
            best = d
    return best


@dataclass(frozen=True)
class Workspace:
    """Axis-aligned sampling/validity box."""

    min_corner: tuple[float, float, float]
    max_corner: tuple[float, float, float]

    def __post_init__(self):
        object.__setattr__(self, "min_corner", tuple(float(v) for v in self.min_corner))
        object.__setattr__(self, "max_corner", tuple(float(v) for v in self.max_corner))
        if any(hi <= lo for lo, hi in zip(self.min_corner, self.max_corner)):
            raise ValueError("workspace box is empty")

    def contains(self, points: np.ndarray) -> bool:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        lo = np.asarray(self.min_corner)
        hi = np.asarray(self.max_corner)
        return bool(np.all(pts >= lo - 1e-12) and np.all(pts <= hi + 1e-12))

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        lo = np.asarray(self.min_corner)
        hi = np.asarray(self.max_corner)
        return lo + rng.random(3) * (hi - lo)


def state_clearance(
    state: RobotState,
    model: RobotModel,
    obstacles: Sequence[DynamicSphere],
    times: Sequence[float],
    points_per_segment: int = 5,
) -> float:
    """Worst body-point surface clearance over the given obstacle time snapshots."""
    if not obstacles:
        return math.inf
    pts = body_points(state, model, points_per_segment)
    return points_clearance(pts, obstacle_states(obstacles, times))


def state_is_safe(
    state: RobotState,
    model: RobotModel,
    obstacles: Sequence[DynamicSphere],
    t: float | Sequence[float],
    workspace: Workspace | None = None,
    safety_margin: float = 0.0,
    points_per_segment: int = 5,
) -> bool:
    """True when every body point clears every obstacle by at least the margin
    (closed inequality: clearance == margin counts as safe) and stays inside
    the workspace. `t` may be one time or several; all must pass."""
    pts = body_points(state, model, points_per_segment)
    if workspace is not None and not workspace.contains(pts):
        return False
    times = (t,) if isinstance(t, (int, float)) else tuple(t)
    if not obstacles:
        return True
    return points_clearance(pts, obstacle_states(obstacles, times)) >= safety_margin


def edge_is_safe(
    p_from: np.ndarray,
    p_to: np.ndarray,
    obstacles: Sequence[DynamicSphere],
    t_now: float,
    t_next: float,
    resolution: float = 5.0,
    margin: float = 0.0,
) -> bool:
    """Check a straight tip segment against obstacles at both endpoint times.

    The segment is sampled at spacing <= resolution; every sample must clear
    every obstacle in both its t_now and t_next state.
    """
    if resolution <= 0.0:
        raise ValueError("resolution must be positive")
    a = np.asarray(p_from, dtype=float)
    b = np.asarray(p_to, dtype=float)
    dist = float(np.linalg.norm(b - a))
    n = max(2, int(math.ceil(dist / resolution)) + 1)
    samples = a + np.linspace(0.0, 1.0, n)[:, None] * (b - a)
    if not obstacles:
        return True
    states = obstacle_states(obstacles, (t_now, t_next))
    return points_clearance(samples, states) >= margin


@dataclass(frozen=True)
class Scenario:
    """One planning problem: robot, endpoints, obstacle field, and controller."""

    model: RobotModel
    start_tip: tuple[float, float, float]
    goal_tip: tuple[float, float, float]
    obstacles: tuple[DynamicSphere, ...]
    workspace: Workspace
    controller: "ControllerParams"
    time_step: float = 1.0
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "start_tip", tuple(float(v) for v in self.start_tip))
        object.__setattr__(self, "goal_tip", tuple(float(v) for v in self.goal_tip))
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        if self.time_step <= 0.0:
            raise ValueError("time step must be positive")
        for name, point in (("start_tip", self.start_tip), ("goal_tip", self.goal_tip)):
            if not self.workspace.contains(np.asarray(point)):
                raise ValueError(f"{name} {point} lies outside the workspace")
