"""Damped-least-squares inverse kinematics with an obstacle clearance penalty.

The solver works in configuration space (per-segment bend angles plus base
translation): the tip error is pulled through the finite-difference task
Jacobian, damped least squares gives the step direction, the clearance penalty
gradient steers it away from obstacles, and a backtracking line search
guarantees the combined objective never increases on an accepted step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import world
from .kinematics import (
    RobotModel,
    RobotState,
    body_points_batch,
    cable_vector,
    config_vector,
    state_from_vector,
    task_jacobian_vec,
    tip_batch,
    wrap_angles,
)

PENALTY_GRAD_STEP = 1e-5
ARMIJO_C1 = 1e-4
MAX_BACKTRACKS = 20


class StepStalled(RuntimeError):
    """Line search could not reduce the objective; solver is pinned (usually
    against an obstacle penalty wall or a joint-range boundary)."""


class NotConverged(RuntimeError):
    """Waypoint tracking ran out of iterations; carries the best state seen."""

    def __init__(self, state: RobotState, tip_error: float):
        super().__init__(f"tip error {tip_error:.4f} mm after iteration budget")
        self.state = state
        self.tip_error = tip_error


@dataclass(frozen=True)
class ControllerParams:
    """Gains and limits for the constrained IK solver.

    kp_gain: proportional gain on the error (scalar or positive-definite matrix).
    damping_lambda: damping constant of the least-squares solve.
    penalty_mu: weight of the obstacle clearance penalty (0 disables it).
    safety_margin: required standoff added to obstacle radii in the penalty.
    rho: scale applied to the solved step direction.
    body_point_count: total centerline samples used for clearance, robot-wide.
    max_step_norm: per-cable cap on a single step's drive change, mm.
    """

    kp_gain: float = 1.0
    damping_lambda: float = 0.3
    penalty_mu: float = 20.0
    safety_margin: float = 5.0
    rho: float = 1.0
    body_point_count: int = 10
    max_inner_iterations: int = 200
    tip_tolerance: float = 0.5
    max_step_norm: float = 2.0

    def __post_init__(self):
        kp = self.kp_gain
        if np.isscalar(kp):
            if kp <= 0.0:
                raise ValueError("kp_gain must be positive")
        else:
            kp = np.asarray(kp, dtype=float)
            object.__setattr__(self, "kp_gain", kp)
            if kp.ndim == 1:
                if np.any(kp <= 0.0):
                    raise ValueError("diagonal kp_gain must be positive")
            elif kp.ndim == 2:
                if np.max(np.abs(kp - kp.T)) > 1e-9 or np.min(np.linalg.eigvalsh(kp)) <= 0.0:
                    raise ValueError("matrix kp_gain must be symmetric positive definite")
            else:
                raise ValueError("kp_gain must be a scalar, vector, or matrix")
        if self.damping_lambda <= 0.0:
            raise ValueError("damping_lambda must be positive")
        if self.penalty_mu < 0.0:
            raise ValueError("penalty_mu must be non-negative")
        if self.safety_margin < 0.0:
            raise ValueError("safety_margin must be non-negative")
        if self.body_point_count < 2:
            raise ValueError("body_point_count must be at least 2")
        if self.max_inner_iterations < 1:
            raise ValueError("max_inner_iterations must be at least 1")
        if self.tip_tolerance <= 0.0 or self.max_step_norm <= 0.0:
            raise ValueError("tip_tolerance and max_step_norm must be positive")

    def points_per_segment(self, n_segments: int) -> int:
        return max(2, math.ceil(self.body_point_count / n_segments))


@dataclass(frozen=True)
class IkStepResult:
    """Outcome of one constrained IK step."""

    delta_q: np.ndarray
    new_state: RobotState
    objective_value: float
    min_clearance: float
    converged: bool
    delta_config: np.ndarray


def _apply_gain(gain, err: np.ndarray) -> np.ndarray:
    if np.isscalar(gain):
        return gain * err
    gain = np.asarray(gain)
    if gain.ndim == 1:
        return gain * err
    return gain @ err


def configuration_error(
    desired: np.ndarray, current: np.ndarray, phi_indices: Sequence[int] | None = None
) -> np.ndarray:
    """Component-wise configuration error with plane angles wrapped to (-pi, pi].

    When phi_indices is omitted the vectors are read as [theta, phi] pairs with
    an optional trailing base-z entry; odd positions are treated as angles.
    """
    d = np.asarray(desired, dtype=float)
    c = np.asarray(current, dtype=float)
    if d.shape != c.shape or d.ndim != 1:
        raise ValueError(f"dimension mismatch: {d.shape} vs {c.shape}")
    err = d - c
    if phi_indices is None:
        n_pairs = (len(d) - 1) // 2 if len(d) % 2 == 1 else len(d) // 2
        phi_indices = range(1, 2 * n_pairs, 2)
    idx = list(phi_indices)
    if idx:
        err[idx] = wrap_angles(err[idx])
    return err


def dls_step(jac: np.ndarray, err: np.ndarray, params: ControllerParams) -> np.ndarray:
    """Damped least-squares solve: the unique minimizer of
    ||J d - K e||^2 + lambda^2 ||d||^2."""
    jac = np.asarray(jac, dtype=float)
    if jac.size == 0:
        raise ValueError("empty Jacobian")
    rhs = jac.T @ _apply_gain(params.kp_gain, np.asarray(err, dtype=float))
    h = jac.T @ jac + params.damping_lambda**2 * np.eye(jac.shape[1])
    return np.linalg.solve(h, rhs)


def _snap_arrays(
    obstacle_snapshots: Sequence[tuple[np.ndarray, float]],
) -> tuple[np.ndarray, np.ndarray]:
    centers = np.stack([c for c, _ in obstacle_snapshots])
    radii = np.array([r for _, r in obstacle_snapshots])
    return centers, radii


def _penalty_from_points(
    pts: np.ndarray,
    centers: np.ndarray,
    radii: np.ndarray,
    params: ControllerParams,
) -> np.ndarray:
    """Clearance penalty for pre-computed body point sets (B, P, 3) against
    stacked obstacle snapshots.

    Sum over snapshots of mu^2 * ((R + margin) / d_min)^2 where d_min is the
    closest body-point-to-center distance. Infinite when a body point sits on
    a center.
    """
    diff = pts[:, None, :, :] - centers[None, :, None, :]  # (B, m, P, 3)
    d2min = np.min(np.einsum("bmkj,bmkj->bmk", diff, diff), axis=2)  # (B, m)
    degenerate = d2min < 1e-18
    mu2 = params.penalty_mu**2
    terms = mu2 * (radii + params.safety_margin) ** 2 / np.where(degenerate, 1.0, d2min)
    return np.sum(np.where(degenerate, np.inf, terms), axis=1)


def _penalty_batch(
    vecs: np.ndarray,
    obstacle_snapshots: Sequence[tuple[np.ndarray, float]],
    params: ControllerParams,
    model: RobotModel,
) -> np.ndarray:
    """Clearance penalty for a batch of raw configuration vectors."""
    k = params.points_per_segment(model.n_segments)
    pts = body_points_batch(vecs, model, k)  # (B, nK, 3)
    centers, radii = _snap_arrays(obstacle_snapshots)
    return _penalty_from_points(pts, centers, radii, params)


def safety_penalty(
    state: RobotState,
    obstacles: Sequence[world.DynamicSphere],
    time: float | Sequence[float],
    params: ControllerParams,
    model: RobotModel,
) -> float:
    """Obstacle proximity penalty of a robot state at the given time(s)."""
    times = (time,) if isinstance(time, (int, float)) else tuple(time)
    if not obstacles or params.penalty_mu == 0.0:
        return 0.0
    snaps = world.obstacle_states(obstacles, times)
    return float(_penalty_batch(config_vector(state)[None, :], snaps, params, model)[0])


def safety_penalty_gradient(
    state: RobotState,
    obstacles: Sequence[world.DynamicSphere],
    time: float | Sequence[float],
    params: ControllerParams,
    model: RobotModel,
    step: float = PENALTY_GRAD_STEP,
) -> np.ndarray:
    """Central finite-difference gradient of the penalty in configuration space."""
    times = (time,) if isinstance(time, (int, float)) else tuple(time)
    snaps = world.obstacle_states(obstacles, times)
    return _penalty_gradient_vec(config_vector(state), snaps, params, model, step)


def _penalty_gradient_vec(vec, snaps, params, model, step=PENALTY_GRAD_STEP) -> np.ndarray:
    dim = vec.shape[0]
    batch = np.repeat(vec[None, :], 2 * dim, axis=0)
    idx = np.arange(dim)
    batch[2 * idx, idx] += step
    batch[2 * idx + 1, idx] -= step
    vals = _penalty_batch(batch, snaps, params, model)
    return (vals[0::2] - vals[1::2]) / (2.0 * step)


def _coordinate_bounds(vec: np.ndarray, model: RobotModel) -> tuple[np.ndarray, np.ndarray]:
    dim = vec.shape[0]
    lo = np.full(dim, -np.inf)
    hi = np.full(dim, np.inf)
    lo[0:-1:2] = -math.pi
    hi[0:-1:2] = math.pi
    lo[-1], hi[-1] = model.base_z_limits
    return lo, hi


def _bounded_direction(
    vec: np.ndarray, h: np.ndarray, rhs: np.ndarray, model: RobotModel
) -> np.ndarray:
    """Solve h @ d = rhs, iteratively freezing coordinates that sit at a range
    limit while the solution pushes further into it."""
    lo, hi = _coordinate_bounds(vec, model)
    free = np.ones(vec.shape[0], dtype=bool)
    direction = np.zeros_like(vec)
    for _ in range(vec.shape[0]):
        if not np.any(free):
            break
        idx = np.flatnonzero(free)
        sub = np.linalg.solve(h[np.ix_(idx, idx)], rhs[idx])
        direction = np.zeros_like(vec)
        direction[idx] = sub
        pinned = ((vec <= lo + 1e-12) & (direction < 0.0)) | (
            (vec >= hi - 1e-12) & (direction > 0.0)
        )
        if not np.any(pinned & free):
            break
        free &= ~pinned
        direction[~free] = 0.0
    return direction


def _clearance_vec(vec, snaps, params, model) -> float:
    if not snaps:
        return math.inf
    k = params.points_per_segment(model.n_segments)
    pts = body_points_batch(vec[None, :], model, k)[0]
    return world.points_clearance(pts, snaps)


def clearance_ascent(
    state: RobotState,
    obstacles: Sequence[world.DynamicSphere],
    time: float | Sequence[float],
    params: ControllerParams,
    model: RobotModel,
    iterations: int = 8,
    stop_margin: float = math.inf,
) -> RobotState:
    """Move the body away from the obstacles by descending the clearance
    penalty, ignoring any tip target: the evasive maneuver. Every accepted
    sub-step strictly reduces the penalty and respects the cable cap; the
    walk stops once the clearance reaches stop_margin, keeping the maneuver
    minimal."""
    times = (time,) if isinstance(time, (int, float)) else tuple(time)
    snaps = world.obstacle_states(obstacles, times) if obstacles else []
    if not snaps:
        return state
    centers, radii = _snap_arrays(snaps)
    pps = params.points_per_segment(model.n_segments)
    vec = config_vector(state)
    dim = vec.shape[0]
    idx = np.arange(dim)
    for _ in range(iterations):
        if _clearance_vec(vec, snaps, params, model) >= stop_margin:
            break
        pen0 = float(_penalty_from_points(
            body_points_batch(vec[None, :], model, pps), centers, radii, params)[0])
        batch = np.repeat(vec[None, :], 2 * dim, axis=0)
        batch[2 * idx, idx] += PENALTY_GRAD_STEP
        batch[2 * idx + 1, idx] -= PENALTY_GRAD_STEP
        pens = _penalty_from_points(
            body_points_batch(batch, model, pps), centers, radii, params)
        grad = (pens[0::2] - pens[1::2]) / (2.0 * PENALTY_GRAD_STEP)
        direction = _bounded_direction(vec, np.eye(dim), -grad, model)
        norm = float(np.linalg.norm(direction))
        if norm < 1e-12:
            break
        cables0 = cable_vector(vec, model)
        peak = float(np.max(np.abs(cable_vector(vec + direction, model) - cables0)))
        if peak > params.max_step_norm:
            direction *= params.max_step_norm / peak
        accepted = False
        alpha = 1.0
        for _ in range(8):
            cand = model.clamp_vector(vec + alpha * direction)
            if float(np.max(np.abs(cable_vector(cand, model) - cables0))) <= params.max_step_norm + 1e-12:
                pen = float(_penalty_from_points(
                    body_points_batch(cand[None, :], model, pps), centers, radii, params)[0])
                if pen < pen0:
                    vec = cand
                    accepted = True
                    break
            alpha *= 0.5
        if not accepted:
            break
    return state_from_vector(vec, model)


def _ik_step_vec(
    vec: np.ndarray,
    tip_target: np.ndarray,
    snaps: Sequence[tuple[np.ndarray, float]],
    params: ControllerParams,
    model: RobotModel,
):
    """One constrained step on a raw configuration vector.

    Returns (new_vec, delta_config, delta_q, objective, tip_error_after).
    Raises StepStalled when backtracking cannot find a decrease.
    """
    penalty_active = params.penalty_mu > 0.0 and len(snaps) > 0
    pps = params.points_per_segment(model.n_segments)
    penalty0 = 0.0
    if penalty_active:
        centers, radii = _snap_arrays(snaps)
        pts0 = body_points_batch(vec[None, :], model, pps)
        tip = pts0[0, -1]  # the last body point is the tip
        penalty0 = float(_penalty_from_points(pts0, centers, radii, params)[0])
    else:
        tip = tip_batch(vec[None, :], model)[0]
    err = tip_target - tip
    err_norm = float(np.linalg.norm(err))
    cables0 = cable_vector(vec, model)

    gained = _apply_gain(params.kp_gain, err)
    err_term = float(gained @ gained)
    if err_norm < params.tip_tolerance:
        zero = np.zeros_like(vec)
        return vec, zero, np.zeros_like(cables0), err_term + penalty0, err_norm

    jac = task_jacobian_vec(vec, model)
    rhs = jac.T @ gained
    # the penalty gradient is worth its cost only when the penalty is not
    # vanishingly small against the error term it competes with
    if penalty_active and penalty0 > 1e-3 * max(err_term, 1.0):
        dim = vec.shape[0]
        batch = np.repeat(vec[None, :], 2 * dim, axis=0)
        idx = np.arange(dim)
        batch[2 * idx, idx] += PENALTY_GRAD_STEP
        batch[2 * idx + 1, idx] -= PENALTY_GRAD_STEP
        pens = _penalty_from_points(body_points_batch(batch, model, pps), centers, radii, params)
        rhs = rhs - 0.5 * (pens[0::2] - pens[1::2]) / (2.0 * PENALTY_GRAD_STEP)
    h = jac.T @ jac + params.damping_lambda**2 * np.eye(jac.shape[1])

    # active-set projection: freeze coordinates pressed into their range
    # limits, otherwise the clamped step stops being a descent direction
    direction = _bounded_direction(vec, h, rhs, model) * params.rho

    # pre-scale so no cable moves more than allowed at full step
    peak = float(np.max(np.abs(cable_vector(vec + direction, model) - cables0)))
    if peak > params.max_step_norm:
        direction = direction * (params.max_step_norm / peak)

    f0 = err_term + penalty0
    slope = 2.0 * float(rhs @ direction)  # model decrease rate along the direction
    if math.isfinite(f0) and slope <= 1e-12 * max(1.0, abs(f0)):
        # error pull and penalty push balance out: local minimum of the
        # combined objective, no direction can descend
        raise StepStalled(f"stationary objective at tip error {err_norm:.3f} mm")

    lam2 = params.damping_lambda**2
    alpha = 1.0
    for _ in range(MAX_BACKTRACKS + 1):
        cand = model.clamp_vector(vec + alpha * direction)
        delta = cand - vec
        delta[1:-1:2] = wrap_angles(delta[1:-1:2])
        dq = cable_vector(cand, model) - cables0
        if float(np.max(np.abs(dq))) <= params.max_step_norm + 1e-12:
            # evaluate the true objective at the candidate (the quadratic
            # model only shapes the direction): new error + damping + penalty
            if penalty_active:
                pts_c = body_points_batch(cand[None, :], model, pps)
                new_tip = pts_c[0, -1]
                pen_c = float(_penalty_from_points(pts_c, centers, radii, params)[0])
            else:
                new_tip = tip_batch(cand[None, :], model)[0]
                pen_c = 0.0
            new_gained = _apply_gain(params.kp_gain, tip_target - new_tip)
            f = float(new_gained @ new_gained) + lam2 * float(delta @ delta) + pen_c
            if f <= f0 - ARMIJO_C1 * alpha * slope and f <= f0:
                tip_err = float(np.linalg.norm(tip_target - new_tip))
                return cand, delta, dq, f, tip_err
        alpha *= 0.5
    raise StepStalled(
        f"no objective decrease after {MAX_BACKTRACKS} backtracks (tip error {err_norm:.3f} mm)"
    )


def constrained_ik_step(
    state: RobotState,
    tip_target: np.ndarray,
    obstacles: Sequence[world.DynamicSphere],
    time: float | Sequence[float],
    params: ControllerParams,
    model: RobotModel,
) -> IkStepResult:
    """One collision-aware IK step toward a tip target.

    The accepted step's objective (damped residual plus clearance penalty)
    never exceeds the zero-step objective; the per-cable drive change is
    capped at params.max_step_norm. Raises StepStalled when no decrease is
    possible.
    """
    times = (time,) if isinstance(time, (int, float)) else tuple(time)
    snaps = world.obstacle_states(obstacles, times) if obstacles else []
    vec = config_vector(state)
    target = np.asarray(tip_target, dtype=float)
    new_vec, delta, dq, objective, tip_err = _ik_step_vec(vec, target, snaps, params, model)
    return IkStepResult(
        delta_q=dq,
        new_state=state_from_vector(new_vec, model),
        objective_value=objective,
        min_clearance=_clearance_vec(new_vec, snaps, params, model),
        converged=tip_err < params.tip_tolerance,
        delta_config=delta,
    )


def track_waypoint(
    state: RobotState,
    tip_target: np.ndarray,
    obstacles: Sequence[world.DynamicSphere],
    time: float | Sequence[float],
    params: ControllerParams,
    model: RobotModel,
) -> tuple[RobotState, float]:
    """Iterate constrained IK steps until the tip reaches the target.

    Returns (state, tip_error) once the error drops under tip_tolerance.
    Raises NotConverged with the best state seen when the iteration budget runs
    out or the solver stalls (e.g. the target is blocked or unreachable).
    """
    times = (time,) if isinstance(time, (int, float)) else tuple(time)
    snaps = world.obstacle_states(obstacles, times) if obstacles else []
    target = np.asarray(tip_target, dtype=float)
    vec = config_vector(state)
    err = float(np.linalg.norm(target - tip_batch(vec[None, :], model)[0]))
    best_vec, best_err = vec, err
    stalls = 0
    for _ in range(params.max_inner_iterations):
        if err < params.tip_tolerance:
            return state_from_vector(vec, model), err
        prev_err = err
        try:
            vec, _, _, _, err = _ik_step_vec(vec, target, snaps, params, model)
        except StepStalled:
            break
        if err < best_err:
            best_vec, best_err = vec, err
        # bail out early once the error stops shrinking: the solver has hit
        # the equilibrium between error pull and penalty push
        if prev_err - err < 0.01 + 0.02 * err:
            stalls += 1
            if stalls >= 3:
                break
        else:
            stalls = 0
    if err < params.tip_tolerance:
        return state_from_vector(vec, model), err
    raise NotConverged(state_from_vector(best_vec, model), best_err)
