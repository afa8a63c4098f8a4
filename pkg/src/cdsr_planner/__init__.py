"""Safety-constrained motion planning for cable-driven continuum robots:
constant-curvature kinematics, collision-aware damped least-squares IK,
tip-space tree planning with replanning, and a Monte-Carlo benchmark."""

from .control import (
    ControllerParams,
    IkStepResult,
    NotConverged,
    StepStalled,
    configuration_error,
    constrained_ik_step,
    dls_step,
    safety_penalty,
    track_waypoint,
)
from .kinematics import (
    CableLengths,
    Frame,
    MomentState,
    RobotModel,
    RobotState,
    SegmentConfig,
    SegmentGeometry,
    body_points,
    cables_from_config,
    cables_from_state,
    config_from_cables,
    coupled_configuration,
    forward_kinematics,
    robot_jacobian,
    segment_jacobian,
    segment_tip_position,
    segment_transform,
    task_jacobian,
    tip_position,
)
from .planner import (
    ExecutionFailed,
    ExecutionLog,
    PlanFailed,
    PlannerParams,
    PlanNode,
    PlanResult,
    SamplingExhausted,
    execute_dynamic,
    initial_state,
    plan,
    smooth_path,
    solve_tip_ik,
)
from .scenario_io import ParseError, load_bundled, parse_scenario
from .world import (
    DynamicSphere,
    LinearOscillation,
    Scenario,
    Workspace,
    edge_is_safe,
    min_surface_distance,
    obstacle_state_at,
    state_is_safe,
)

__version__ = "0.1.0"
