import math

import numpy as np
import pytest

from cdsr_planner import kinematics as kin
from cdsr_planner import world as wd
from cdsr_planner.control import ControllerParams


GEOM = kin.SegmentGeometry(200.0, 3.0)
MODEL = kin.RobotModel((GEOM, GEOM))
BOX = wd.Workspace((-150.0, -150.0, 0.0), (150.0, 150.0, 500.0))


# ---------------------------------------------------------------------------
# obstacle state
# ---------------------------------------------------------------------------


def test_static_sphere_constant():
    obs = wd.DynamicSphere(center=(1.0, 2.0, 3.0), radius_base=60.0)
    for t in [0.0, 1.5, 100.0]:
        c, r = wd.obstacle_state_at(obs, t)
        assert np.allclose(c, [1.0, 2.0, 3.0])
        assert r == pytest.approx(60.0)


def test_pulsing_radius():
    obs = wd.DynamicSphere(center=(0.0, 0.0, 0.0), radius_base=60.0,
                           radius_amplitude=10.0, radius_rate=1.0, radius_phase="sin")
    _, r = wd.obstacle_state_at(obs, math.pi / 2)
    assert r == pytest.approx(70.0)
    _, r0 = wd.obstacle_state_at(obs, 0.0)
    assert r0 == pytest.approx(60.0)


def test_cos_radius_starts_high():
    obs = wd.DynamicSphere(center=(0.0, 0.0, 0.0), radius_base=45.0,
                           radius_amplitude=15.0, radius_rate=0.5, radius_phase="cos")
    _, r = wd.obstacle_state_at(obs, 0.0)
    assert r == pytest.approx(60.0)


def test_radius_stays_in_band():
    obs = wd.DynamicSphere(center=(0.0, 0.0, 0.0), radius_base=40.0,
                           radius_amplitude=15.0, radius_rate=0.7)
    radii = [wd.obstacle_state_at(obs, t)[1] for t in np.linspace(0.0, 50.0, 400)]
    assert min(radii) >= 25.0 - 1e-12
    assert max(radii) <= 55.0 + 1e-12


def test_linear_motion_endpoints_and_midpoint():
    motion = wd.LinearOscillation(end_a=(0.0, 0.0, 0.0), end_b=(40.0, 0.0, 0.0),
                                  phase="sin", rate=0.5)
    obs = wd.DynamicSphere(center=(0.0, 0.0, 0.0), radius_base=30.0, motion=motion)
    period = 2.0 * math.pi / 0.5
    c0, _ = wd.obstacle_state_at(obs, 0.0)
    cq, _ = wd.obstacle_state_at(obs, period / 4.0)
    assert np.allclose(c0, [20.0, 0.0, 0.0])   # sin starts at the midpoint
    assert np.allclose(cq, [40.0, 0.0, 0.0])   # quarter period reaches an endpoint


def test_motion_speed_limit_enforced():
    with pytest.raises(ValueError):
        wd.LinearOscillation(end_a=(0.0, 0.0, 0.0), end_b=(100.0, 0.0, 0.0), rate=1.0)
    ok = wd.LinearOscillation(end_a=(0.0, 0.0, 0.0), end_b=(100.0, 0.0, 0.0), rate=0.4)
    assert ok.mean_speed == pytest.approx(100.0 * 0.4 / math.pi)


def test_sphere_validation():
    with pytest.raises(ValueError):
        wd.DynamicSphere(center=(0, 0, 0), radius_base=10.0, radius_amplitude=10.0)
    with pytest.raises(ValueError):
        wd.DynamicSphere(center=(0, 0, 0), radius_base=10.0, radius_amplitude=-1.0)
    with pytest.raises(ValueError):
        wd.DynamicSphere(center=(0, 0, 0), radius_base=10.0, radius_phase="tan")


# ---------------------------------------------------------------------------
# clearance queries
# ---------------------------------------------------------------------------


def test_min_surface_distance_single_point():
    obs = wd.DynamicSphere(center=(0.0, 0.0, 0.0), radius_base=10.0)
    assert wd.min_surface_distance(np.array([[0.0, 0.0, 20.0]]), obs, 0.0) == pytest.approx(10.0)


def test_min_surface_distance_penetration():
    obs = wd.DynamicSphere(center=(0.0, 0.0, 0.0), radius_base=10.0)
    assert wd.min_surface_distance(np.array([[0.0, 0.0, 5.0]]), obs, 0.0) < 0.0


def test_min_surface_distance_matches_dense_sampling():
    rng = np.random.default_rng(0)
    obs = wd.DynamicSphere(center=(30.0, -20.0, 250.0), radius_base=45.0)
    st = kin.RobotState((kin.SegmentConfig(1.2, 0.4), kin.SegmentConfig(0.8, -1.0)), 20.0)
    coarse = wd.min_surface_distance(kin.body_points(st, MODEL, 10), obs, 0.0)
    dense = wd.min_surface_distance(kin.body_points(st, MODEL, 5000), obs, 0.0)
    # dense sampling can only find closer points; gap bounded by sample spacing
    spacing = GEOM.length / 9.0
    assert dense <= coarse + 1e-9
    assert coarse - dense <= spacing


def test_min_surface_distance_lipschitz():
    obs = wd.DynamicSphere(center=(0.0, 0.0, 0.0), radius_base=10.0)
    rng = np.random.default_rng(1)
    pts = rng.normal(scale=50.0, size=(20, 3))
    base = wd.min_surface_distance(pts, obs, 0.0)
    for _ in range(20):
        shifted = pts.copy()
        i = rng.integers(len(pts))
        delta = rng.normal(size=3)
        shifted[i] += delta
        moved = wd.min_surface_distance(shifted, obs, 0.0)
        assert abs(moved - base) <= np.linalg.norm(delta) + 1e-9


def test_min_surface_distance_empty_rejected():
    obs = wd.DynamicSphere(center=(0.0, 0.0, 0.0), radius_base=10.0)
    with pytest.raises(ValueError):
        wd.min_surface_distance(np.zeros((0, 3)), obs, 0.0)


# ---------------------------------------------------------------------------
# state safety
# ---------------------------------------------------------------------------


def test_state_safe_no_obstacles():
    st = kin.RobotState((kin.SegmentConfig(0.3, 0.0), kin.SegmentConfig(0.3, 0.0)), 10.0)
    assert wd.state_is_safe(st, MODEL, (), 0.0, BOX)


def test_state_unsafe_piercing_sphere():
    st = kin.RobotState((kin.SegmentConfig(0.0), kin.SegmentConfig(0.0)), 0.0)
    obs = wd.DynamicSphere(center=(0.0, 0.0, 200.0), radius_base=30.0)
    assert not wd.state_is_safe(st, MODEL, (obs,), 0.0, BOX)


def test_state_safe_boundary_is_closed():
    # tangency: straight robot along z, sphere surface exactly margin away
    st = kin.RobotState((kin.SegmentConfig(0.0), kin.SegmentConfig(0.0)), 0.0)
    obs = wd.DynamicSphere(center=(100.0, 0.0, 200.0), radius_base=90.0)
    assert wd.state_is_safe(st, MODEL, (obs,), 0.0, workspace=None,
                            safety_margin=10.0, points_per_segment=5)
    assert not wd.state_is_safe(st, MODEL, (obs,), 0.0, workspace=None,
                                safety_margin=10.0 + 1e-6, points_per_segment=5)


def test_state_safety_margin_monotone():
    rng = np.random.default_rng(2)
    obs = wd.DynamicSphere(center=(40.0, 10.0, 250.0), radius_base=50.0)
    for _ in range(30):
        st = kin.RobotState(
            (kin.SegmentConfig(rng.uniform(0, 3), rng.uniform(-3, 3)),
             kin.SegmentConfig(rng.uniform(0, 3), rng.uniform(-3, 3))),
            rng.uniform(0, 100),
        )
        margins = [0.0, 5.0, 20.0]
        flags = [wd.state_is_safe(st, MODEL, (obs,), 0.0, None, m) for m in margins]
        # shrinking the margin never flips safe -> unsafe
        for tight, loose in zip(flags, flags[1:]):
            assert tight or not loose


def test_state_safe_respects_workspace():
    st = kin.RobotState((kin.SegmentConfig(0.0), kin.SegmentConfig(0.0)), 90.0)
    tall = wd.Workspace((-150.0, -150.0, 0.0), (150.0, 150.0, 500.0))
    short = wd.Workspace((-150.0, -150.0, 0.0), (150.0, 150.0, 400.0))
    assert wd.state_is_safe(st, MODEL, (), 0.0, tall)
    assert not wd.state_is_safe(st, MODEL, (), 0.0, short)


def test_state_safe_multiple_times():
    st = kin.RobotState((kin.SegmentConfig(0.0), kin.SegmentConfig(0.0)), 0.0)
    grower = wd.DynamicSphere(center=(80.0, 0.0, 200.0), radius_base=60.0,
                              radius_amplitude=25.0, radius_rate=math.pi / 2,
                              radius_phase="sin")
    assert wd.state_is_safe(st, MODEL, (grower,), 0.0, None)
    assert not wd.state_is_safe(st, MODEL, (grower,), (0.0, 1.0), None)


# ---------------------------------------------------------------------------
# edge safety
# ---------------------------------------------------------------------------


def test_edge_safe_far_from_obstacles():
    obs = wd.DynamicSphere(center=(0.0, 0.0, 500.0), radius_base=30.0)
    assert wd.edge_is_safe([0, 0, 0], [100, 0, 0], (obs,), 0.0, 1.0)


def test_edge_through_sphere_center_fails():
    obs = wd.DynamicSphere(center=(50.0, 0.0, 0.0), radius_base=20.0)
    assert not wd.edge_is_safe([0, 0, 0], [100, 0, 0], (obs,), 0.0, 1.0)


def test_edge_growing_sphere_two_state():
    # clear of the sphere at t_now, swallowed by it at t_next
    obs = wd.DynamicSphere(center=(50.0, 0.0, 30.0), radius_base=26.0,
                           radius_amplitude=25.0, radius_rate=math.pi / 2,
                           radius_phase="sin")
    assert wd.edge_is_safe([0, 0, 0], [100, 0, 0], (obs,), 0.0, 0.0)
    assert not wd.edge_is_safe([0, 0, 0], [100, 0, 0], (obs,), 0.0, 1.0)


def test_edge_degenerate_point_matches_state_check():
    obs = wd.DynamicSphere(center=(10.0, 0.0, 0.0), radius_base=5.0)
    p = np.array([20.0, 0.0, 0.0])
    assert wd.edge_is_safe(p, p, (obs,), 0.0, 1.0)
    inside = np.array([12.0, 0.0, 0.0])
    assert not wd.edge_is_safe(inside, inside, (obs,), 0.0, 1.0)


def test_edge_sampling_resolution():
    # thin sphere between two samples is missed at coarse resolution, caught fine
    obs = wd.DynamicSphere(center=(50.0, 4.0, 0.0), radius_base=4.5)
    assert not wd.edge_is_safe([0, 0, 0], [100, 0, 0], (obs,), 0.0, 1.0, resolution=1.0)
    with pytest.raises(ValueError):
        wd.edge_is_safe([0, 0, 0], [100, 0, 0], (obs,), 0.0, 1.0, resolution=0.0)


# ---------------------------------------------------------------------------
# workspace and scenario
# ---------------------------------------------------------------------------


def test_workspace_contains_and_sample():
    rng = np.random.default_rng(3)
    for _ in range(200):
        p = BOX.sample(rng)
        assert BOX.contains(p)
    assert not BOX.contains(np.array([0.0, 0.0, 501.0]))
    with pytest.raises(ValueError):
        wd.Workspace((0.0, 0.0, 0.0), (0.0, 1.0, 1.0))


def test_scenario_validation():
    ctrl = ControllerParams()
    ok = wd.Scenario(MODEL, (-50, 100, 390), (10, -120, 170), (), BOX, ctrl)
    assert ok.time_step == 1.0
    with pytest.raises(ValueError):
        wd.Scenario(MODEL, (-50, 100, 600), (10, -120, 170), (), BOX, ctrl)
    with pytest.raises(ValueError):
        wd.Scenario(MODEL, (-50, 100, 390), (10, -120, 170), (), BOX, ctrl, time_step=0.0)
