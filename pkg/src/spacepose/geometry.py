"""Pinhole camera model and rigid-body pose utilities.

Quaternions are always stored scalar-first, ``(w, x, y, z)``. A :class:`Pose`
maps body-frame points into the camera frame: ``p_cam = R(q) @ p_body + t``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BehindCameraError,
    DegenerateGroundTruthError,
    InvalidInputError,
)

DEPTH_EPS = 1e-6
_UNIT_TOL = 1e-3


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise InvalidInputError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise InvalidInputError(
                f"principal point ({self.cx}, {self.cy}) outside {self.width}x{self.height} image"
            )

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @classmethod
    def from_fov(cls, size: int, fov_deg: float) -> "CameraIntrinsics":
        """Square image with a centred principal point and the given horizontal FOV."""
        f = 0.5 * size / np.tan(np.deg2rad(fov_deg) / 2)
        return cls(fx=f, fy=f, cx=size / 2, cy=size / 2, width=size, height=size)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("fx", "fy", "cx", "cy", "width", "height")}

    @classmethod
    def from_dict(cls, d: dict) -> "CameraIntrinsics":
        return cls(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]),
                   int(d["width"]), int(d["height"]))


def quat_normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if not np.isfinite(n) or n < 1e-12:
        raise InvalidInputError(f"cannot normalize quaternion {q!r}")
    return q / n


@dataclass(frozen=True)
class Pose:
    """Body-to-camera rigid transform (R_bc from ``q``, T_bc = ``t``)."""

    q: np.ndarray
    t: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "q", quat_normalize(self.q))
        t = np.asarray(self.t, dtype=float).reshape(3)
        if not np.all(np.isfinite(t)):
            raise InvalidInputError("translation must be finite")
        object.__setattr__(self, "t", t)

    @property
    def R(self) -> np.ndarray:
        return quat_to_matrix(self.q)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.array([1.0, 0, 0, 0]), np.zeros(3))

    def transform(self, p_body) -> np.ndarray:
        return transform_points(self, p_body)

    def to_dict(self) -> dict:
        return {"q": [float(v) for v in self.q], "t": [float(v) for v in self.t]}

    @classmethod
    def from_dict(cls, d: dict) -> "Pose":
        return cls(np.array(d["q"], dtype=float), np.array(d["t"], dtype=float))


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = quat_normalize(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def matrix_to_quat(R) -> np.ndarray:
    """Rotation matrix to unit quaternion with non-negative scalar part (Shepperd's method)."""
    R = np.asarray(R, dtype=float)
    tr = np.trace(R)
    diag = np.array([tr, R[0, 0], R[1, 1], R[2, 2]])
    k = int(np.argmax(diag))
    if k == 0:
        s = 2.0 * np.sqrt(1.0 + tr)
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif k == 1:
        s = 2.0 * np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif k == 2:
        s = 2.0 * np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
    else:
        s = 2.0 * np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    q = quat_normalize(q)
    return -q if q[0] < 0 else q


def quat_multiply(a, b) -> np.ndarray:
    """Hamilton product ``a * b`` (apply ``b`` first, then ``a``)."""
    w1, x1, y1, z1 = a
    w2, x2, y2, z2 = b
    return np.array([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ])


def quat_conjugate(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n == 0:
        return np.array([1.0, 0.0, 0.0, 0.0])
    axis = axis / n
    return np.concatenate([[np.cos(angle / 2)], np.sin(angle / 2) * axis])


def random_quaternion(rng: np.random.Generator) -> np.ndarray:
    """Uniformly distributed unit quaternion (Shoemake's subgroup algorithm)."""
    u1, u2, u3 = rng.random(3)
    a, b = np.sqrt(1 - u1), np.sqrt(u1)
    q = np.array([
        b * np.cos(2 * np.pi * u3),
        a * np.sin(2 * np.pi * u2),
        a * np.cos(2 * np.pi * u2),
        b * np.sin(2 * np.pi * u3),
    ])
    return q / np.linalg.norm(q)


def geodesic_angle(q1, q2) -> float:
    """Rotation angle between two unit quaternions, in [0, pi]."""
    d = abs(float(np.dot(q1, q2)))
    return 2.0 * float(np.arccos(min(1.0, d)))


def transform_points(pose: Pose, p_body) -> np.ndarray:
    p = np.asarray(p_body, dtype=float)
    return p @ pose.R.T + pose.t


def project(K: CameraIntrinsics, pose: Pose, p_body) -> np.ndarray:
    """Project body-frame point(s) to pixel coordinates.

    Accepts a single ``(3,)`` point or an ``(n, 3)`` array and returns ``(2,)``
    or ``(n, 2)`` accordingly. Raises :class:`BehindCameraError` when any
    camera-frame depth is at or below ``DEPTH_EPS``.
    """
    pc = transform_points(pose, p_body)
    z = pc[..., 2]
    if np.any(z <= DEPTH_EPS):
        raise BehindCameraError(f"point(s) behind camera, min depth {np.min(z):.3g} m")
    u = K.fx * pc[..., 0] / z + K.cx
    v = K.fy * pc[..., 1] / z + K.cy
    return np.stack([u, v], axis=-1)


def pose_error_translation(pred, gt) -> float:
    """Mean relative translation error over samples."""
    pred = np.atleast_2d(np.asarray(pred, dtype=float))
    gt = np.atleast_2d(np.asarray(gt, dtype=float))
    if pred.shape != gt.shape or pred.shape[0] == 0 or pred.shape[1] != 3:
        raise InvalidInputError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    norms = np.linalg.norm(gt, axis=1)
    if np.any(norms == 0):
        raise DegenerateGroundTruthError("ground-truth translation has zero norm")
    return float(np.mean(np.linalg.norm(pred - gt, axis=1) / norms))


def pose_error_rotation(pred, gt) -> float:
    """Mean geodesic angle ``2 arccos |<q, q_gt>|`` in radians."""
    pred = np.atleast_2d(np.asarray(pred, dtype=float))
    gt = np.atleast_2d(np.asarray(gt, dtype=float))
    if pred.shape != gt.shape or pred.shape[0] == 0 or pred.shape[1] != 4:
        raise InvalidInputError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    for arr in (pred, gt):
        if np.any(np.abs(np.linalg.norm(arr, axis=1) - 1.0) > _UNIT_TOL):
            raise InvalidInputError("quaternions must be unit norm")
    dots = np.clip(np.abs(np.sum(pred * gt, axis=1)), -1.0, 1.0)
    return float(np.mean(2.0 * np.arccos(dots)))
