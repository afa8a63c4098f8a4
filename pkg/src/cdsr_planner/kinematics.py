"""Constant-curvature kinematics for cable-driven continuum robots.

Each segment bends as a circular arc described by a bending angle theta and a
bending-plane angle phi; the arc radius is length/theta. Segments chain tip to
base, with an optional prismatic translation of the whole robot along world z.
All functions are pure; all types are immutable values.

Units: millimeters for lengths, radians for angles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

# Below this bending angle the arc terms (1-cos t)/t and sin(t)/t switch to
# their Taylor series; keeps the straight-segment limit continuous to ~1e-15.
THETA_EPS = 1e-7

TWO_PI = 2.0 * math.pi


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    a = math.fmod(a, TWO_PI)
    if a <= -math.pi:
        a += TWO_PI
    elif a > math.pi:
        a -= TWO_PI
    return a


def wrap_angles(a: np.ndarray) -> np.ndarray:
    """Vectorized wrap to (-pi, pi]."""
    w = np.mod(a, TWO_PI)
    w = np.where(w > math.pi, w - TWO_PI, w)
    return np.where(w <= -math.pi, w + TWO_PI, w)


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SegmentGeometry:
    """Geometry and stiffness of one segment.

    length: backbone arc length.
    cable_pitch: radius from the disc center to the cable channels.
    cable_count: number of drive cables (evenly spaced).
    stiffness: bending stiffness (moment per radian of bend).
    """

    length: float
    cable_pitch: float
    cable_count: int = 3
    stiffness: float = 1.0

    def __post_init__(self):
        if self.length <= 0.0:
            raise ValueError(f"segment length must be positive, got {self.length}")
        if self.cable_pitch <= 0.0:
            raise ValueError(f"cable pitch radius must be positive, got {self.cable_pitch}")
        if self.cable_count < 3:
            raise ValueError(f"need at least 3 cables per segment, got {self.cable_count}")
        if self.stiffness <= 0.0:
            raise ValueError(f"stiffness must be positive, got {self.stiffness}")

    @property
    def cable_spacing(self) -> float:
        """Angular spacing between adjacent cable channels."""
        return TWO_PI / self.cable_count


@dataclass(frozen=True)
class SegmentConfig:
    """Bend of one segment: bending angle theta in [0, pi], plane angle phi in (-pi, pi]."""

    theta: float
    phi: float = 0.0

    def __post_init__(self):
        if not (-1e-12 <= self.theta <= math.pi + 1e-9):
            raise ValueError(f"theta must lie in [0, pi], got {self.theta}")
        object.__setattr__(self, "theta", min(max(self.theta, 0.0), math.pi))
        object.__setattr__(self, "phi", wrap_angle(self.phi))


@dataclass(frozen=True)
class RobotState:
    """Full robot configuration: per-segment bends plus base z-translation."""

    segments: tuple[SegmentConfig, ...]
    base_z: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if len(self.segments) < 1:
            raise ValueError("robot needs at least one segment")


@dataclass(frozen=True)
class RobotModel:
    """An n-segment robot: per-segment geometry plus base mounting.

    The base anchor sits at world [0, 0, mount_height]; `hanging` flips the
    chain to point down into the workspace (insertion from the top face).
    base_z is the prismatic insertion depth along the base axis, within
    base_z_limits. body_radius is the disc radius, added to clearance margins
    so the sampled centerline stands in for the physical body.
    """

    segments: tuple[SegmentGeometry, ...]
    base_z_limits: tuple[float, float] = (0.0, 100.0)
    body_radius: float = 3.0
    mount_height: float = 0.0
    hanging: bool = False

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if len(self.segments) < 1:
            raise ValueError("robot needs at least one segment")
        lo, hi = self.base_z_limits
        if hi < lo:
            raise ValueError(f"base z limits reversed: {self.base_z_limits}")
        if self.body_radius < 0.0:
            raise ValueError("body radius must be non-negative")
        object.__setattr__(self, "_lengths", np.array([s.length for s in self.segments]))
        object.__setattr__(self, "_pitches", np.array([s.cable_pitch for s in self.segments]))
        rot = np.diag([1.0, -1.0, -1.0]) if self.hanging else np.eye(3)
        object.__setattr__(self, "_base_rot", rot)
        counts = [s.cable_count for s in self.segments]
        object.__setattr__(self, "_drive_dim", sum(counts) + 1)
        if len(set(counts)) == 1:
            offs = np.array([s.cable_spacing * np.arange(s.cable_count) for s in self.segments])
        else:
            offs = None  # ragged cable counts: cable_vector falls back to a loop
        object.__setattr__(self, "_cable_offsets", offs)

    @property
    def base_rotation(self) -> np.ndarray:
        return self._base_rot

    def base_anchor(self, base_z: float) -> np.ndarray:
        """World position of the robot base at the given insertion depth."""
        return np.array([0.0, 0.0, self.mount_height]) + base_z * self._base_rot[:, 2]

    @property
    def n_segments(self) -> int:
        return len(self.segments)

    @property
    def lengths(self) -> np.ndarray:
        return self._lengths

    def check_state(self, state: RobotState) -> None:
        """Raise if the state does not fit this model."""
        if len(state.segments) != self.n_segments:
            raise ValueError(
                f"state has {len(state.segments)} segments, model has {self.n_segments}"
            )
        lo, hi = self.base_z_limits
        if not (lo - 1e-9 <= state.base_z <= hi + 1e-9):
            raise ValueError(f"base_z {state.base_z} outside limits [{lo}, {hi}]")

    def clamp_vector(self, vec: np.ndarray) -> np.ndarray:
        """Clamp a raw configuration vector into solver range.

        Bend angles stay signed in [-pi, pi]: a negative bend is the same arc
        as the positive bend with the plane angle flipped by pi, and keeping
        the sign lets iterative solvers pass through straight configurations
        instead of pinning against theta = 0. state_from_vector canonicalizes.
        """
        out = vec.copy()
        out[0:-1:2] = np.clip(out[0:-1:2], -math.pi, math.pi)
        out[1:-1:2] = wrap_angles(out[1:-1:2])
        out[-1] = min(max(out[-1], self.base_z_limits[0]), self.base_z_limits[1])
        return out


@dataclass(frozen=True)
class CableLengths:
    """Drive-side description: per-segment cable lengths plus base z-translation."""

    segments: tuple[tuple[float, ...], ...]
    base_z: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(tuple(q) for q in self.segments))
        for k, cables in enumerate(self.segments):
            if any(q <= 0.0 for q in cables):
                raise ValueError(f"segment {k} has a non-positive cable length")

    def as_vector(self) -> np.ndarray:
        """Flatten to [q_1,1 .. q_n,c, base_z]."""
        flat = [q for cables in self.segments for q in cables]
        flat.append(self.base_z)
        return np.array(flat)


@dataclass(frozen=True)
class Frame:
    """Rigid transform: orthonormal rotation (det +1) and translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=float)
        t = np.asarray(self.translation, dtype=float)
        if r.shape != (3, 3) or t.shape != (3,):
            raise ValueError("frame needs a 3x3 rotation and a 3-vector translation")
        if np.max(np.abs(r.T @ r - np.eye(3))) > 1e-9:
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > 1e-9:
            raise ValueError("rotation must have determinant +1")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "Frame":
        return Frame(np.eye(3), np.zeros(3))

    def compose(self, other: "Frame") -> "Frame":
        """This frame followed by `other` expressed in this frame."""
        return Frame(self.rotation @ other.rotation,
                     self.translation + self.rotation @ other.translation)

    def transform_point(self, p: np.ndarray) -> np.ndarray:
        return self.rotation @ np.asarray(p, dtype=float) + self.translation


@dataclass(frozen=True)
class MomentState:
    """Bending moments along the chain: each segment's own moment and the
    resultant (own plus everything distal, summed as in-plane vectors)."""

    own: tuple[float, ...]
    resultant: tuple[float, ...]


# ---------------------------------------------------------------------------
# internal vectorized core
# ---------------------------------------------------------------------------


def config_vector(state: RobotState) -> np.ndarray:
    """Flatten a state to [theta_1, phi_1, ..., theta_n, phi_n, base_z]."""
    vec = np.empty(2 * len(state.segments) + 1)
    for k, seg in enumerate(state.segments):
        vec[2 * k] = seg.theta
        vec[2 * k + 1] = seg.phi
    vec[-1] = state.base_z
    return vec


def state_from_vector(vec: np.ndarray, model: RobotModel) -> RobotState:
    """Rebuild a RobotState from a flat configuration vector.

    Signed bends are canonicalized: (theta < 0, phi) becomes (-theta, phi + pi),
    which is the identical arc. Out-of-range values are clamped.
    """
    vec = np.asarray(vec, dtype=float)
    segs = []
    for k in range(model.n_segments):
        th, ph = float(vec[2 * k]), float(vec[2 * k + 1])
        if th < 0.0:
            th, ph = -th, ph + math.pi
        segs.append(SegmentConfig(min(th, math.pi), ph))
    lo, hi = model.base_z_limits
    return RobotState(tuple(segs), min(max(float(vec[-1]), lo), hi))


def _arc_terms(theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Stable (1-cos t)/t and sin(t)/t, valid for any real t including ~0."""
    t = np.asarray(theta, dtype=float)
    small = np.abs(t) < THETA_EPS
    if np.any(small):
        safe = np.where(small, 1.0, t)
        a = np.where(small, 0.5 * t - t**3 / 24.0, (1.0 - np.cos(safe)) / safe)
        b = np.where(small, 1.0 - t**2 / 6.0 + t**4 / 120.0, np.sin(safe) / safe)
        return a, b
    return (1.0 - np.cos(t)) / t, np.sin(t) / t


def _segment_terms(th: np.ndarray, ph: np.ndarray):
    """Shared per-segment quantities: arc terms, plane cos/sin, and the
    segment rotation, computing each trig value once."""
    ct, st = np.cos(th), np.sin(th)
    cp, sp = np.cos(ph), np.sin(ph)
    small = np.abs(th) < THETA_EPS
    if np.any(small):
        safe = np.where(small, 1.0, th)
        a = np.where(small, 0.5 * th - th**3 / 24.0, (1.0 - ct) / safe)
        b = np.where(small, 1.0 - th**2 / 6.0 + th**4 / 120.0, st / safe)
    else:
        a = (1.0 - ct) / th
        b = st / th
    rot = np.empty(th.shape + (3, 3))
    ctm1 = ct - 1.0
    rot[..., 0, 0] = cp * cp * ctm1 + 1.0
    rot[..., 0, 1] = cp * sp * ctm1
    rot[..., 0, 2] = cp * st
    rot[..., 1, 0] = rot[..., 0, 1]
    rot[..., 1, 1] = sp * sp * ctm1 + 1.0
    rot[..., 1, 2] = sp * st
    rot[..., 2, 0] = -cp * st
    rot[..., 2, 1] = -sp * st
    rot[..., 2, 2] = ct
    return a, b, cp, sp, rot


_FRACTION_CACHE: dict[int, np.ndarray] = {}


def _fractions(k: int) -> np.ndarray:
    got = _FRACTION_CACHE.get(k)
    if got is None:
        got = np.linspace(0.0, 1.0, k)
        _FRACTION_CACHE[k] = got
    return got


def _rot_batch(phi: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Batched Rot(z,phi) @ Rot(y,theta) @ Rot(z,-phi), shape (B, 3, 3)."""
    cp, sp = np.cos(phi), np.sin(phi)
    ct, st = np.cos(theta), np.sin(theta)
    r = np.empty(phi.shape + (3, 3))
    r[..., 0, 0] = cp * cp * ct + sp * sp
    r[..., 0, 1] = cp * sp * (ct - 1.0)
    r[..., 0, 2] = cp * st
    r[..., 1, 0] = cp * sp * (ct - 1.0)
    r[..., 1, 1] = sp * sp * ct + cp * cp
    r[..., 1, 2] = sp * st
    r[..., 2, 0] = -cp * st
    r[..., 2, 1] = -sp * st
    r[..., 2, 2] = ct
    return r


def tip_batch(vecs: np.ndarray, model: RobotModel) -> np.ndarray:
    """Tip positions for a batch of raw configuration vectors, shape (B, 3)."""
    vecs = np.atleast_2d(vecs)
    b = vecs.shape[0]
    rot = np.broadcast_to(model.base_rotation, (b, 3, 3)).copy()
    pos = np.zeros((b, 3))
    pos[:, 2] = model.mount_height
    pos += vecs[:, -1:] * model.base_rotation[:, 2]
    local = np.empty((b, 3))
    for k, length in enumerate(model.lengths):
        th = vecs[:, 2 * k]
        ph = vecs[:, 2 * k + 1]
        a, bb, cp, sp, seg_rot = _segment_terms(th, ph)
        planar = length * a
        local[:, 0] = planar * cp
        local[:, 1] = planar * sp
        local[:, 2] = length * bb
        pos += np.einsum("bij,bj->bi", rot, local)
        rot = rot @ seg_rot
    return pos


def body_points_batch(vecs: np.ndarray, model: RobotModel, points_per_segment: int) -> np.ndarray:
    """Centerline sample points for a batch of configuration vectors.

    Returns (B, n_segments * K, 3): K points per segment at equal arc-length
    fractions (base included, tip included).
    """
    if points_per_segment < 2:
        raise ValueError("need at least 2 points per segment")
    vecs = np.atleast_2d(vecs)
    b = vecs.shape[0]
    k_count = points_per_segment
    fractions = _fractions(k_count)
    lengths = model.lengths
    rot = np.broadcast_to(model.base_rotation, (b, 3, 3)).copy()
    pos = np.zeros((b, 3))
    pos[:, 2] = model.mount_height
    pos += vecs[:, -1:] * model.base_rotation[:, 2]
    out = np.empty((b, len(lengths) * k_count, 3))
    for k, length in enumerate(lengths):
        th = vecs[:, 2 * k]
        ph = vecs[:, 2 * k + 1]
        # partial arc: same radius, bend fraction s*theta, arc length s*L
        th_s = th[:, None] * fractions[None, :]
        a, bb = _arc_terms(th_s)
        _, _, cp, sp, seg_rot = _segment_terms(th, ph)
        arc = length * fractions
        local = np.empty((b, k_count, 3))
        planar = arc * a
        local[:, :, 0] = planar * cp[:, None]
        local[:, :, 1] = planar * sp[:, None]
        local[:, :, 2] = arc * bb
        pts = np.einsum("bij,bkj->bki", rot, local)
        pts += pos[:, None, :]
        out[:, k * k_count:(k + 1) * k_count, :] = pts
        pos = pts[:, -1, :]  # segment tip is the last arc sample
        rot = rot @ seg_rot
    return out


def cable_vector(vec: np.ndarray, model: RobotModel) -> np.ndarray:
    """Drive vector [cables of each segment..., base_z] for a raw config vector."""
    offsets = model._cable_offsets
    if offsets is not None:
        thetas = vec[0:-1:2]
        phis = vec[1:-1:2]
        q = model._lengths[:, None] - model._pitches[:, None] * thetas[:, None] * np.cos(
            phis[:, None] + offsets
        )
        out = np.empty(model._drive_dim)
        out[:-1] = q.ravel()
        out[-1] = vec[-1]
        return out
    parts = []
    for k, geom in enumerate(model.segments):
        th, ph = vec[2 * k], vec[2 * k + 1]
        offs = ph + geom.cable_spacing * np.arange(geom.cable_count)
        parts.append(geom.length - geom.cable_pitch * th * np.cos(offs))
    parts.append([vec[-1]])
    return np.concatenate(parts)


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------


def segment_tip_position(cfg: SegmentConfig, geom: SegmentGeometry) -> np.ndarray:
    """End position of a single bent segment in its base frame.

    The arc tip sits at (L/theta) * [(1-cos th) cos ph, (1-cos th) sin ph, sin th];
    below THETA_EPS the series limit [0, 0, L] is used.
    """
    a, b = _arc_terms(np.array(cfg.theta))
    return np.array(
        [
            geom.length * float(a) * math.cos(cfg.phi),
            geom.length * float(a) * math.sin(cfg.phi),
            geom.length * float(b),
        ]
    )


def segment_transform(cfg: SegmentConfig, geom: SegmentGeometry) -> Frame:
    """Frame of the segment tip relative to its base."""
    rot = _rot_batch(np.array(cfg.phi), np.array(cfg.theta))
    return Frame(np.asarray(rot), segment_tip_position(cfg, geom))


def forward_kinematics(state: RobotState, model: RobotModel) -> list[Frame]:
    """Chain all segment transforms; returns each segment's base frame plus the tip frame.

    The first frame carries the prismatic base translation [0, 0, base_z]; the
    last frame's translation is the robot tip position.
    """
    model.check_state(state)
    frames = [Frame(model.base_rotation, model.base_anchor(state.base_z))]
    for cfg, geom in zip(state.segments, model.segments):
        frames.append(frames[-1].compose(segment_transform(cfg, geom)))
    return frames


def tip_position(state: RobotState, model: RobotModel) -> np.ndarray:
    """Robot tip position in the world frame."""
    return tip_batch(config_vector(state)[None, :], model)[0]


def body_points(state: RobotState, model: RobotModel, points_per_segment: int) -> np.ndarray:
    """Discretized centerline: K points per segment at equal arc-length fractions.

    Returns an (n_segments * K, 3) array; used for clearance checks.
    """
    return body_points_batch(config_vector(state)[None, :], model, points_per_segment)[0]


def cables_from_config(cfg: SegmentConfig, geom: SegmentGeometry) -> np.ndarray:
    """Cable lengths that produce the given segment bend."""
    offsets = cfg.phi + geom.cable_spacing * np.arange(geom.cable_count)
    return geom.length - geom.cable_pitch * cfg.theta * np.cos(offsets)


def config_from_cables(cables: Sequence[float], geom: SegmentGeometry) -> SegmentConfig:
    """Segment bend from three cable lengths (inverse of cables_from_config).

    Raises ValueError when the cable set would bend the segment beyond pi,
    or when any length is non-positive. Straight segments get phi = 0.
    """
    q = np.asarray(cables, dtype=float)
    if q.shape != (3,):
        raise ValueError(f"expected 3 cable lengths, got shape {q.shape}")
    if np.any(q <= 0.0):
        raise ValueError("cable lengths must be positive")
    q1, q2, q3 = q
    ss = q1 * q1 + q2 * q2 + q3 * q3 - q1 * q2 - q2 * q3 - q1 * q3
    theta = 2.0 * math.sqrt(max(ss, 0.0)) / (3.0 * geom.cable_pitch)
    if theta > math.pi + 1e-9:
        raise ValueError(f"cable set bends segment to {theta:.6f} rad, beyond pi")
    theta = min(theta, math.pi)
    if theta < THETA_EPS:
        return SegmentConfig(theta, 0.0)
    phi = math.atan2(math.sqrt(3.0) * (q2 - q3), q2 + q3 - 2.0 * q1)
    return SegmentConfig(theta, phi)


def cables_from_state(state: RobotState, model: RobotModel) -> CableLengths:
    """Full drive-side description of a robot state."""
    return CableLengths(
        tuple(tuple(cables_from_config(cfg, geom)) for cfg, geom in zip(state.segments, model.segments)),
        state.base_z,
    )


def segment_jacobian(cfg: SegmentConfig, geom: SegmentGeometry) -> np.ndarray:
    """Cable rates per (theta, phi) rates: row i = [-r cos(phi+i*xi), r theta sin(phi+i*xi)]."""
    offsets = cfg.phi + geom.cable_spacing * np.arange(geom.cable_count)
    return np.stack(
        [-geom.cable_pitch * np.cos(offsets), geom.cable_pitch * cfg.theta * np.sin(offsets)],
        axis=-1,
    )


def robot_jacobian(state: RobotState, model: RobotModel) -> np.ndarray:
    """Block-diagonal drive Jacobian mapping [theta/phi rates..., base_z rate] to
    [cable rates..., base_z rate]; shape (3n+1, 2n+1) for 3-cable segments."""
    n = model.n_segments
    rows = sum(g.cable_count for g in model.segments) + 1
    jac = np.zeros((rows, 2 * n + 1))
    r0 = 0
    for k, (cfg, geom) in enumerate(zip(state.segments, model.segments)):
        jac[r0:r0 + geom.cable_count, 2 * k:2 * k + 2] = segment_jacobian(cfg, geom)
        r0 += geom.cable_count
    jac[-1, -1] = 1.0
    return jac


def task_jacobian(state: RobotState, model: RobotModel, step: float = 1e-6) -> np.ndarray:
    """Tip velocity per configuration rate, by central finite differences.

    Shape (3, 2n+1). Perturbed bends are evaluated analytically, so theta may
    momentarily step outside [0, pi] during differencing.
    """
    return task_jacobian_vec(config_vector(state), model, step)


def task_jacobian_vec(vec: np.ndarray, model: RobotModel, step: float = 1e-6) -> np.ndarray:
    """task_jacobian on a raw configuration vector (no range clamping)."""
    dim = vec.shape[0]
    batch = np.repeat(vec[None, :], 2 * dim, axis=0)
    idx = np.arange(dim)
    batch[2 * idx, idx] += step
    batch[2 * idx + 1, idx] -= step
    tips = tip_batch(batch, model)
    return ((tips[0::2] - tips[1::2]) / (2.0 * step)).T


def bending_moments(configs: Sequence[SegmentConfig], model: RobotModel) -> MomentState:
    """Own and resultant bending moment magnitude per segment.

    Each segment's own moment is stiffness * theta, directed along its bending
    plane; resultants accumulate tip-to-base as planar vector sums.
    """
    n = len(configs)
    own_vecs = []
    for cfg, geom in zip(configs, model.segments):
        m = geom.stiffness * cfg.theta
        own_vecs.append(np.array([m * math.cos(cfg.phi), m * math.sin(cfg.phi)]))
    resultant_vecs = [np.zeros(2)] * n
    acc = np.zeros(2)
    for k in range(n - 1, -1, -1):
        acc = acc + own_vecs[k]
        resultant_vecs[k] = acc.copy()
    return MomentState(
        own=tuple(float(np.linalg.norm(v)) for v in own_vecs),
        resultant=tuple(float(np.linalg.norm(v)) for v in resultant_vecs),
    )


def coupled_configuration(
    configs: Sequence[SegmentConfig],
    model: RobotModel,
    include_phi_offset: bool = True,
) -> list[tuple[float, float]]:
    """Effective (theta, phi) per segment once distal bending moments act on it.

    The distal stack pushes back on each proximal segment: its resultant moment
    vector, flipped by pi, adds to the segment's own moment vector; the sum's
    magnitude over stiffness is the effective bend, its direction the effective
    plane angle. The distal-most segment is unaffected. `include_phi_offset`
    keeps the quarter-turn added to the effective plane angle; set False to
    report the raw direction of the combined moment.
    """
    n = len(configs)
    if n < 2:
        raise ValueError("moment coupling needs at least 2 segments")
    if len(model.segments) != n:
        raise ValueError("configs and model disagree on segment count")
    own_vecs = []
    for cfg, geom in zip(configs, model.segments):
        m = geom.stiffness * cfg.theta
        own_vecs.append(np.array([m * math.cos(cfg.phi), m * math.sin(cfg.phi)]))
    # distal_sum[k] = resultant of segments k+1 .. n-1 (what pushes back on k)
    distal_sum = [np.zeros(2)] * n
    acc = np.zeros(2)
    for k in range(n - 1, -1, -1):
        distal_sum[k] = acc.copy()
        acc = acc + own_vecs[k]

    offset = 0.5 * math.pi if include_phi_offset else 0.0
    out: list[tuple[float, float]] = []
    for k in range(n):
        if k == n - 1:
            out.append((configs[k].theta, configs[k].phi))
            continue
        v = own_vecs[k] - distal_sum[k]
        theta_eff = float(np.linalg.norm(v)) / model.segments[k].stiffness
        phi_eff = wrap_angle(offset + math.atan2(v[1], v[0]))
        out.append((theta_eff, phi_eff))
    return out
