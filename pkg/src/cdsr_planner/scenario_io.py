"""Scenario files: a strict JSON schema for robots, obstacle fields, and
controller settings.

Units are millimeters, seconds, and radians throughout. Unknown fields are
rejected; every error carries the dotted path of the offending field.

Schema (all keys required unless marked optional):

    model:
        segments: [ {length_mm, cable_pitch_mm, cable_count?, stiffness?} ]
        base_z_limits_mm: [lo, hi]
        body_radius_mm
        mount_height_mm
        hanging: bool
    start_tip_mm: [x, y, z]
    goal_tip_mm: [x, y, z]
    workspace: {min_mm: [x, y, z], max_mm: [x, y, z]}
    obstacles: [ {center_mm, radius_base_mm, radius_amplitude_mm?,
                  radius_rate_rad_s?, radius_phase?,
                  motion?: {end_a_mm, end_b_mm, phase?, rate_rad_s?}} ]
    controller (optional): {kp_gain?, damping_lambda?, penalty_mu?,
                  safety_margin_mm?, rho?, body_point_count?,
                  max_inner_iterations?, tip_tolerance_mm?, max_step_mm?}
    time_step_s (optional, default 1.0)
    rng_seed (optional, default 0)
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

from .control import ControllerParams
from .kinematics import RobotModel, SegmentGeometry
from .world import DynamicSphere, LinearOscillation, Scenario, Workspace

BUNDLED_SCENARIOS = ("static_two_spheres", "dynamic_pulsing_spheres", "bench_default")


class ParseError(ValueError):
    """Scenario file rejected; `field_path` names the offending field."""

    def __init__(self, field_path: str, reason: str):
        super().__init__(f"{field_path}: {reason}")
        self.field_path = field_path
        self.reason = reason


def _require_keys(obj: dict, path: str, required: set[str], optional: set[str]) -> None:
    for key in obj:
        if key not in required and key not in optional:
            raise ParseError(f"{path}.{key}", "unknown field")
    for key in required:
        if key not in obj:
            raise ParseError(f"{path}.{key}", "missing field")


def _number(obj, path: str) -> float:
    if isinstance(obj, bool) or not isinstance(obj, (int, float)):
        raise ParseError(path, f"expected a number, got {type(obj).__name__}")
    return float(obj)


def _integer(obj, path: str) -> int:
    if isinstance(obj, bool) or not isinstance(obj, int):
        raise ParseError(path, f"expected an integer, got {type(obj).__name__}")
    return obj


def _vector3(obj, path: str) -> tuple[float, float, float]:
    if not isinstance(obj, list) or len(obj) != 3:
        raise ParseError(path, "expected a list of 3 numbers")
    return tuple(_number(v, f"{path}[{i}]") for i, v in enumerate(obj))


def _parse_segment(obj, path: str) -> SegmentGeometry:
    if not isinstance(obj, dict):
        raise ParseError(path, "expected an object")
    _require_keys(obj, path, {"length_mm", "cable_pitch_mm"}, {"cable_count", "stiffness"})
    try:
        return SegmentGeometry(
            length=_number(obj["length_mm"], f"{path}.length_mm"),
            cable_pitch=_number(obj["cable_pitch_mm"], f"{path}.cable_pitch_mm"),
            cable_count=_integer(obj.get("cable_count", 3), f"{path}.cable_count"),
            stiffness=_number(obj.get("stiffness", 1.0), f"{path}.stiffness"),
        )
    except ParseError:
        raise
    except ValueError as exc:
        raise ParseError(path, str(exc)) from None


def _parse_model(obj, path: str) -> RobotModel:
    if not isinstance(obj, dict):
        raise ParseError(path, "expected an object")
    _require_keys(
        obj, path,
        {"segments", "base_z_limits_mm", "mount_height_mm"},
        {"body_radius_mm", "hanging"},
    )
    segs = obj["segments"]
    if not isinstance(segs, list) or not segs:
        raise ParseError(f"{path}.segments", "expected a non-empty list")
    limits = obj["base_z_limits_mm"]
    if not isinstance(limits, list) or len(limits) != 2:
        raise ParseError(f"{path}.base_z_limits_mm", "expected [lo, hi]")
    hanging = obj.get("hanging", False)
    if not isinstance(hanging, bool):
        raise ParseError(f"{path}.hanging", "expected a boolean")
    try:
        return RobotModel(
            segments=tuple(
                _parse_segment(s, f"{path}.segments[{i}]") for i, s in enumerate(segs)
            ),
            base_z_limits=(
                _number(limits[0], f"{path}.base_z_limits_mm[0]"),
                _number(limits[1], f"{path}.base_z_limits_mm[1]"),
            ),
            body_radius=_number(obj.get("body_radius_mm", 3.0), f"{path}.body_radius_mm"),
            mount_height=_number(obj["mount_height_mm"], f"{path}.mount_height_mm"),
            hanging=hanging,
        )
    except ParseError:
        raise
    except ValueError as exc:
        raise ParseError(path, str(exc)) from None


def _parse_motion(obj, path: str) -> LinearOscillation:
    if not isinstance(obj, dict):
        raise ParseError(path, "expected an object")
    _require_keys(obj, path, {"end_a_mm", "end_b_mm"}, {"phase", "rate_rad_s"})
    phase = obj.get("phase", "sin")
    if phase not in ("sin", "cos"):
        raise ParseError(f"{path}.phase", "expected 'sin' or 'cos'")
    try:
        return LinearOscillation(
            end_a=_vector3(obj["end_a_mm"], f"{path}.end_a_mm"),
            end_b=_vector3(obj["end_b_mm"], f"{path}.end_b_mm"),
            phase=phase,
            rate=_number(obj.get("rate_rad_s", 0.5), f"{path}.rate_rad_s"),
        )
    except ParseError:
        raise
    except ValueError as exc:
        raise ParseError(path, str(exc)) from None


def _parse_obstacle(obj, path: str) -> DynamicSphere:
    if not isinstance(obj, dict):
        raise ParseError(path, "expected an object")
    _require_keys(
        obj, path,
        {"center_mm", "radius_base_mm"},
        {"radius_amplitude_mm", "radius_rate_rad_s", "radius_phase", "motion"},
    )
    phase = obj.get("radius_phase", "sin")
    if phase not in ("sin", "cos"):
        raise ParseError(f"{path}.radius_phase", "expected 'sin' or 'cos'")
    motion = None
    if "motion" in obj and obj["motion"] is not None:
        motion = _parse_motion(obj["motion"], f"{path}.motion")
    try:
        return DynamicSphere(
            center=_vector3(obj["center_mm"], f"{path}.center_mm"),
            radius_base=_number(obj["radius_base_mm"], f"{path}.radius_base_mm"),
            radius_amplitude=_number(
                obj.get("radius_amplitude_mm", 0.0), f"{path}.radius_amplitude_mm"
            ),
            radius_rate=_number(obj.get("radius_rate_rad_s", 1.0), f"{path}.radius_rate_rad_s"),
            radius_phase=phase,
            motion=motion,
        )
    except ParseError:
        raise
    except ValueError as exc:
        raise ParseError(path, str(exc)) from None


def _parse_controller(obj, path: str) -> ControllerParams:
    if not isinstance(obj, dict):
        raise ParseError(path, "expected an object")
    keys = {
        "kp_gain": ("kp_gain", _number),
        "damping_lambda": ("damping_lambda", _number),
        "penalty_mu": ("penalty_mu", _number),
        "safety_margin_mm": ("safety_margin", _number),
        "rho": ("rho", _number),
        "body_point_count": ("body_point_count", _integer),
        "max_inner_iterations": ("max_inner_iterations", _integer),
        "tip_tolerance_mm": ("tip_tolerance", _number),
        "max_step_mm": ("max_step_norm", _number),
    }
    _require_keys(obj, path, set(), set(keys))
    kwargs = {}
    for key, (field_name, conv) in keys.items():
        if key in obj:
            kwargs[field_name] = conv(obj[key], f"{path}.{key}")
    try:
        return ControllerParams(**kwargs)
    except ValueError as exc:
        raise ParseError(path, str(exc)) from None


def parse_scenario(source) -> Scenario:
    """Load and validate a scenario from a file path or a JSON string."""
    text = str(source)
    if not text.lstrip().startswith("{"):
        path = Path(text)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ParseError("$", f"cannot read scenario file {path}: {exc}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError("$", f"invalid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ParseError("$", "expected a JSON object")
    _require_keys(
        raw, "$",
        {"model", "start_tip_mm", "goal_tip_mm", "workspace", "obstacles"},
        {"controller", "time_step_s", "rng_seed"},
    )
    model = _parse_model(raw["model"], "$.model")
    ws = raw["workspace"]
    if not isinstance(ws, dict):
        raise ParseError("$.workspace", "expected an object")
    _require_keys(ws, "$.workspace", {"min_mm", "max_mm"}, set())
    try:
        workspace = Workspace(
            _vector3(ws["min_mm"], "$.workspace.min_mm"),
            _vector3(ws["max_mm"], "$.workspace.max_mm"),
        )
    except ParseError:
        raise
    except ValueError as exc:
        raise ParseError("$.workspace", str(exc)) from None
    if not isinstance(raw["obstacles"], list):
        raise ParseError("$.obstacles", "expected a list")
    obstacles = tuple(
        _parse_obstacle(o, f"$.obstacles[{i}]") for i, o in enumerate(raw["obstacles"])
    )
    controller = _parse_controller(raw.get("controller", {}), "$.controller")
    try:
        return Scenario(
            model=model,
            start_tip=_vector3(raw["start_tip_mm"], "$.start_tip_mm"),
            goal_tip=_vector3(raw["goal_tip_mm"], "$.goal_tip_mm"),
            obstacles=obstacles,
            workspace=workspace,
            controller=controller,
            time_step=_number(raw.get("time_step_s", 1.0), "$.time_step_s"),
            rng_seed=_integer(raw.get("rng_seed", 0), "$.rng_seed"),
        )
    except ParseError:
        raise
    except ValueError as exc:
        raise ParseError("$", str(exc)) from None


def bundled_scenario_path(name: str) -> Path:
    """Filesystem path of a scenario shipped with the package."""
    if name not in BUNDLED_SCENARIOS:
        raise ValueError(f"unknown bundled scenario {name!r}; have {BUNDLED_SCENARIOS}")
    return Path(str(resources.files("cdsr_planner") / "scenarios" / f"{name}.json"))


def load_bundled(name: str) -> Scenario:
    return parse_scenario(bundled_scenario_path(name))
