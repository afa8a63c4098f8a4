import math

import numpy as np
import pytest

from cdsr_planner import control as ctl
from cdsr_planner import kinematics as kin
from cdsr_planner import world as wd


GEOM = kin.SegmentGeometry(200.0, 3.0)
MODEL = kin.RobotModel((GEOM, GEOM))
PARAMS = ctl.ControllerParams()


def random_state(rng, theta_lo=0.2, theta_hi=2.8):
    return kin.RobotState(
        (
            kin.SegmentConfig(rng.uniform(theta_lo, theta_hi), rng.uniform(-math.pi, math.pi)),
            kin.SegmentConfig(rng.uniform(theta_lo, theta_hi), rng.uniform(-math.pi, math.pi)),
        ),
        rng.uniform(5.0, 95.0),
    )


def reachable_target(rng, state, max_dist=20.0):
    """Tip of a nearby configuration: guaranteed inside the reachable set."""
    vec = kin.config_vector(state)
    tip = kin.tip_position(state, MODEL)
    for _ in range(100):
        pert = vec + rng.normal(scale=[0.06, 0.12, 0.06, 0.12, 2.0], size=5)
        target = kin.tip_batch(MODEL.clamp_vector(pert)[None], MODEL)[0]
        if 1.0 <= np.linalg.norm(target - tip) <= max_dist:
            return target
    raise AssertionError("could not build a reachable target")


# ---------------------------------------------------------------------------
# configuration error
# ---------------------------------------------------------------------------


def test_configuration_error_zero():
    v = np.array([0.4, 1.0, 0.9, -2.0, 30.0])
    assert np.allclose(ctl.configuration_error(v, v), 0.0)


def test_configuration_error_theta():
    assert ctl.configuration_error(np.array([1.0]), np.array([0.4]))[0] == pytest.approx(0.6)


def test_configuration_error_wraps_phi():
    d = np.array([0.0, math.pi - 0.1])
    c = np.array([0.0, -math.pi + 0.1])
    err = ctl.configuration_error(d, c)
    assert err[1] == pytest.approx(-0.2, abs=1e-12)


def test_configuration_error_full_vector_layout():
    # odd positions of [theta, phi, theta, phi, z] are plane angles
    d = np.array([0.1, math.pi - 0.05, 0.2, 0.0, 10.0])
    c = np.array([0.1, -math.pi + 0.05, 0.2, 0.0, 4.0])
    err = ctl.configuration_error(d, c)
    assert err[1] == pytest.approx(-0.1, abs=1e-12)
    assert err[4] == pytest.approx(6.0)


def test_configuration_error_dimension_mismatch():
    with pytest.raises(ValueError):
        ctl.configuration_error(np.zeros(3), np.zeros(4))


# ---------------------------------------------------------------------------
# DLS solve
# ---------------------------------------------------------------------------


def test_dls_identity_closed_form():
    p = ctl.ControllerParams(kp_gain=1.0, damping_lambda=1.0)
    step = ctl.dls_step(np.eye(2), np.array([1.0, 0.0]), p)
    assert np.allclose(step, [0.5, 0.0], atol=1e-12)


def test_dls_small_damping_approaches_inverse():
    rng = np.random.default_rng(0)
    j = rng.normal(size=(4, 4)) + 4 * np.eye(4)
    e = rng.normal(size=4)
    p = ctl.ControllerParams(kp_gain=1.0, damping_lambda=1e-6)
    assert np.allclose(ctl.dls_step(j, e, p), np.linalg.solve(j, e), atol=1e-9)


def test_dls_normal_equation_residual():
    rng = np.random.default_rng(1)
    for _ in range(50):
        j = rng.normal(size=(7, 5))
        e = rng.normal(size=7)
        lam = rng.uniform(0.1, 2.0)
        p = ctl.ControllerParams(kp_gain=1.0, damping_lambda=lam)
        d = ctl.dls_step(j, e, p)
        resid = (j.T @ j + lam**2 * np.eye(5)) @ d - j.T @ e
        assert np.linalg.norm(resid) < 1e-10


def test_dls_damping_shrinks_steps():
    rng = np.random.default_rng(2)
    for _ in range(25):
        j = rng.normal(size=(7, 5))
        e = rng.normal(size=7)
        lams = sorted(rng.uniform(0.05, 3.0, size=3))
        norms = [
            np.linalg.norm(ctl.dls_step(j, e, ctl.ControllerParams(damping_lambda=lam)))
            for lam in lams
        ]
        assert norms[0] >= norms[1] >= norms[2]


def test_dls_rejects_empty():
    with pytest.raises(ValueError):
        ctl.dls_step(np.zeros((0, 0)), np.zeros(0), PARAMS)


# ---------------------------------------------------------------------------
# safety penalty
# ---------------------------------------------------------------------------


def test_penalty_vanishes_at_range():
    obs = wd.DynamicSphere(center=(0.0, 0.0, 1e6), radius_base=65.0)
    st = kin.RobotState((kin.SegmentConfig(0.5, 0.2), kin.SegmentConfig(0.5, 0.2)))
    val = ctl.safety_penalty(st, (obs,), 0.0, PARAMS, MODEL)
    # mu^2 ((R + margin) / distance)^2 with the robot a workspace-scale away
    assert val == pytest.approx(400.0 * (70.0 / 1e6) ** 2, rel=1e-3)
    assert val < 1e-5


def test_penalty_direct_value():
    # single body point pair: straight robot along z, obstacle on the z axis
    # min center distance 150, R_obs 65, margin 10, mu 20 -> 400*(75/150)^2 = 100
    geom = kin.SegmentGeometry(100.0, 3.0)
    model1 = kin.RobotModel((geom,))
    st = kin.RobotState((kin.SegmentConfig(0.0),))
    obs = wd.DynamicSphere(center=(0.0, 0.0, 250.0), radius_base=65.0)
    p = ctl.ControllerParams(penalty_mu=20.0, safety_margin=10.0, body_point_count=2)
    assert ctl.safety_penalty(st, (obs,), 0.0, p, model1) == pytest.approx(100.0, rel=1e-12)


def test_penalty_monotone_in_distance():
    geom = kin.SegmentGeometry(100.0, 3.0)
    model1 = kin.RobotModel((geom,))
    st = kin.RobotState((kin.SegmentConfig(0.0),))
    vals = []
    for z in [600.0, 500.0, 400.0, 300.0, 200.0]:
        obs = wd.DynamicSphere(center=(0.0, 0.0, z), radius_base=40.0)
        vals.append(ctl.safety_penalty(st, (obs,), 0.0, PARAMS, model1))
    assert all(a < b for a, b in zip(vals, vals[1:]))


def test_penalty_infinite_on_center_hit():
    geom = kin.SegmentGeometry(100.0, 3.0)
    model1 = kin.RobotModel((geom,))
    st = kin.RobotState((kin.SegmentConfig(0.0),))
    obs = wd.DynamicSphere(center=(0.0, 0.0, 50.0), radius_base=10.0)
    p = ctl.ControllerParams(body_point_count=3)  # sample points 0, 50, 100
    assert math.isinf(ctl.safety_penalty(st, (obs,), 0.0, p, model1))


def test_penalty_sums_over_obstacles_and_times():
    geom = kin.SegmentGeometry(100.0, 3.0)
    model1 = kin.RobotModel((geom,))
    st = kin.RobotState((kin.SegmentConfig(0.0),))
    obs = wd.DynamicSphere(center=(0.0, 0.0, 250.0), radius_base=65.0)
    one = ctl.safety_penalty(st, (obs,), 0.0, PARAMS, model1)
    far = wd.DynamicSphere(center=(0.0, 0.0, 400.0), radius_base=65.0)
    two = ctl.safety_penalty(st, (obs, far), 0.0, PARAMS, model1)
    assert two == pytest.approx(one + ctl.safety_penalty(st, (far,), 0.0, PARAMS, model1), rel=1e-12)
    # a static sphere queried at two times is one snapshot, not two
    both_times = ctl.safety_penalty(st, (obs,), (0.0, 1.0), PARAMS, model1)
    assert both_times == pytest.approx(one, rel=1e-12)
    # a pulsing sphere contributes a distinct snapshot per time
    pulse = wd.DynamicSphere(center=(0.0, 0.0, 250.0), radius_base=65.0,
                             radius_amplitude=10.0, radius_rate=1.0)
    p0 = ctl.safety_penalty(st, (pulse,), 0.0, PARAMS, model1)
    p1 = ctl.safety_penalty(st, (pulse,), 1.0, PARAMS, model1)
    assert ctl.safety_penalty(st, (pulse,), (0.0, 1.0), PARAMS, model1) == pytest.approx(
        p0 + p1, rel=1e-12
    )


def test_penalty_gradient_secant_recheck():
    rng = np.random.default_rng(3)
    obs = wd.DynamicSphere(center=(60.0, 20.0, 220.0), radius_base=45.0)
    for _ in range(10):
        st = random_state(rng)
        g1 = ctl.safety_penalty_gradient(st, (obs,), 0.0, PARAMS, MODEL, step=1e-5)
        g2 = ctl.safety_penalty_gradient(st, (obs,), 0.0, PARAMS, MODEL, step=5e-6)
        scale = max(np.max(np.abs(g1)), 1e-9)
        assert np.max(np.abs(g1 - g2)) / scale < 1e-3


# ---------------------------------------------------------------------------
# constrained IK step
# ---------------------------------------------------------------------------


def test_step_without_penalty_equals_dls():
    # interior states with errors small enough that the full step is taken:
    # no clamp, no cable cap, no backtracking
    rng = np.random.default_rng(4)
    for _ in range(20):
        st = random_state(rng, theta_lo=0.4, theta_hi=2.4)
        tip = kin.tip_position(st, MODEL)
        d = rng.normal(size=3)
        target = tip + d / np.linalg.norm(d) * 0.3
        p = ctl.ControllerParams(penalty_mu=0.0, tip_tolerance=0.05)
        res = ctl.constrained_ik_step(st, target, (), 0.0, p, MODEL)
        expected = ctl.dls_step(kin.task_jacobian(st, MODEL), target - tip, p)
        assert np.allclose(res.delta_config, expected, atol=1e-12)


def test_step_zero_error_returns_converged():
    st = kin.RobotState((kin.SegmentConfig(0.7, 0.3), kin.SegmentConfig(1.1, -0.9)), 20.0)
    tip = kin.tip_position(st, MODEL)
    res = ctl.constrained_ik_step(st, tip, (), 0.0, PARAMS, MODEL)
    assert res.converged
    assert np.allclose(res.delta_q, 0.0)
    assert res.new_state == st


def test_step_objective_never_increases():
    rng = np.random.default_rng(5)
    accepted = 0
    for _ in range(200):
        st = random_state(rng)
        tip = kin.tip_position(st, MODEL)
        # obstacle planted near the segment midline to make the penalty bite
        mid = kin.body_points(st, MODEL, 5)[4]
        offset = rng.normal(size=3)
        center = mid + offset / np.linalg.norm(offset) * rng.uniform(60.0, 120.0)
        obs = wd.DynamicSphere(center=tuple(center), radius_base=rng.uniform(30.0, 55.0))
        target = reachable_target(rng, st)
        gained = PARAMS.kp_gain * (target - tip)
        f0 = float(gained @ gained) + ctl.safety_penalty(st, (obs,), 0.0, PARAMS, MODEL)
        try:
            res = ctl.constrained_ik_step(st, target, (obs,), 0.0, PARAMS, MODEL)
        except ctl.StepStalled:
            continue
        accepted += 1
        assert res.objective_value <= f0
    assert accepted > 150


def test_step_respects_cable_cap():
    rng = np.random.default_rng(6)
    p = ctl.ControllerParams(max_step_norm=0.5)
    for _ in range(50):
        st = random_state(rng)
        target = kin.tip_position(st, MODEL) + rng.normal(size=3) * 15.0
        try:
            res = ctl.constrained_ik_step(st, target, (), 0.0, p, MODEL)
        except ctl.StepStalled:
            continue
        assert np.max(np.abs(res.delta_q)) <= 0.5 + 1e-9


def test_step_stalls_on_zero_direction():
    # rho = 0 zeroes the step direction: nothing can descend, must not loop
    st = kin.RobotState((kin.SegmentConfig(0.5, 0.0), kin.SegmentConfig(0.5, 0.0)), 0.0)
    target = kin.tip_position(st, MODEL) + np.array([10.0, 0.0, 0.0])
    p = ctl.ControllerParams(rho=0.0)
    with pytest.raises(ctl.StepStalled):
        ctl.constrained_ik_step(st, target, (), 0.0, p, MODEL)


def test_blocked_target_raises_not_converged():
    # target buried inside an obstacle: error pull and penalty push conflict
    st = kin.RobotState((kin.SegmentConfig(0.3, 0.0), kin.SegmentConfig(0.3, 0.0)), 0.0)
    tip = kin.tip_position(st, MODEL)
    obs = wd.DynamicSphere(center=tuple(tip + np.array([60.0, 0.0, 0.0])), radius_base=40.0)
    p = ctl.ControllerParams(penalty_mu=200.0)
    with pytest.raises(ctl.NotConverged):
        ctl.track_waypoint(st, np.asarray(obs.center), (obs,), 0.0, p, MODEL)


def test_step_min_clearance_reported():
    st = kin.RobotState((kin.SegmentConfig(0.2, 0.0), kin.SegmentConfig(0.2, 0.0)), 0.0)
    obs = wd.DynamicSphere(center=(150.0, 0.0, 200.0), radius_base=40.0)
    res = ctl.constrained_ik_step(st, kin.tip_position(st, MODEL) + 1.0, (obs,), 0.0, PARAMS, MODEL)
    direct = wd.state_clearance(res.new_state, MODEL, (obs,), (0.0,), PARAMS.points_per_segment(2))
    assert res.min_clearance == pytest.approx(direct, abs=1e-9)
    free = ctl.constrained_ik_step(st, kin.tip_position(st, MODEL) + 1.0, (), 0.0, PARAMS, MODEL)
    assert math.isinf(free.min_clearance)


# ---------------------------------------------------------------------------
# waypoint tracking
# ---------------------------------------------------------------------------


def test_track_reaches_nearby_targets():
    rng = np.random.default_rng(7)
    p = ctl.ControllerParams(max_inner_iterations=50)
    converged = 0
    for _ in range(100):
        st = random_state(rng)
        target = reachable_target(rng, st)
        try:
            st2, err = ctl.track_waypoint(st, target, (), 0.0, p, MODEL)
        except ctl.NotConverged:
            continue
        converged += 1
        assert err < p.tip_tolerance
        assert np.linalg.norm(kin.tip_position(st2, MODEL) - target) < p.tip_tolerance
    assert converged >= 99


def test_track_immediate_return_at_target():
    st = kin.RobotState((kin.SegmentConfig(0.7, 0.3), kin.SegmentConfig(1.1, -0.9)), 20.0)
    tip = kin.tip_position(st, MODEL)
    st2, err = ctl.track_waypoint(st, tip, (), 0.0, PARAMS, MODEL)
    assert st2 == st
    assert err < PARAMS.tip_tolerance


def test_track_unreachable_raises_not_converged():
    st = kin.RobotState((kin.SegmentConfig(0.5, 0.0), kin.SegmentConfig(0.5, 0.0)), 0.0)
    target = np.array([0.0, 0.0, 2000.0])
    with pytest.raises(ctl.NotConverged) as info:
        ctl.track_waypoint(st, target, (), 0.0, PARAMS, MODEL)
    assert info.value.tip_error > PARAMS.tip_tolerance
    assert isinstance(info.value.state, kin.RobotState)


def test_track_avoids_obstacle_between():
    # sphere sits between tip and target; tracked approach must keep clear
    st = kin.RobotState((kin.SegmentConfig(0.4, 0.0), kin.SegmentConfig(0.4, 0.0)), 50.0)
    tip = kin.tip_position(st, MODEL)
    target = tip + np.array([90.0, 0.0, -30.0])
    obs = wd.DynamicSphere(center=tuple(0.5 * (tip + target)), radius_base=25.0)
    p = ctl.ControllerParams(penalty_mu=20.0, safety_margin=5.0)
    try:
        st2, err = ctl.track_waypoint(st, target, (obs,), 0.0, p, MODEL)
        states = [st2]
    except ctl.NotConverged as e:
        states = [e.state]
    clear = wd.state_clearance(states[0], MODEL, (obs,), (0.0,), 5)
    assert clear > 0.0


# ---------------------------------------------------------------------------
# parameter validation
# ---------------------------------------------------------------------------


def test_params_validation():
    with pytest.raises(ValueError):
        ctl.ControllerParams(kp_gain=0.0)
    with pytest.raises(ValueError):
        ctl.ControllerParams(damping_lambda=0.0)
    with pytest.raises(ValueError):
        ctl.ControllerParams(penalty_mu=-1.0)
    with pytest.raises(ValueError):
        ctl.ControllerParams(body_point_count=1)
    with pytest.raises(ValueError):
        ctl.ControllerParams(kp_gain=np.array([[1.0, 2.0], [0.0, 1.0]]))
    p = ctl.ControllerParams(kp_gain=np.array([1.0, 2.0, 3.0]))
    assert np.allclose(p.kp_gain, [1.0, 2.0, 3.0])


def test_points_per_segment_split():
    assert ctl.ControllerParams(body_point_count=10).points_per_segment(2) == 5
    assert ctl.ControllerParams(body_point_count=10).points_per_segment(3) == 4
    assert ctl.ControllerParams(body_point_count=2).points_per_segment(2) == 2
