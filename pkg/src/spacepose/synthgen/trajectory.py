"""Tumbling-target pose sequences."""
from __future__ import annotations

import numpy as np

from ..errors import SpecError
from ..geometry import (
    CameraIntrinsics,
    Pose,
    project,
    quat_from_axis_angle,
    quat_multiply,
    random_quaternion,
)
from .render import in_frame
from .satellites import SatelliteModel

MIN_IN_FRAME = 0.6


def _unit(rng):
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def check_feasible(K: CameraIntrinsics, radius: float, d_min: float) -> None:
    if d_min <= radius:
        raise SpecError(f"distance_range minimum {d_min} m does not clear target radius {radius:.3f} m")
    half = min(K.cx, K.cy, K.width - K.cx, K.height - K.cy)
    extent = max(K.fx, K.fy) * radius / (d_min - radius)
    if extent > half:
        raise SpecError(
            f"target of radius {radius:.3f} m spans {extent:.0f} px at {d_min} m, frame half-size is {half:.0f} px"
        )


def sample_trajectory(n_frames: int, model: SatelliteModel, K: CameraIntrinsics, rng: np.random.Generator,
                      distance_range=(12.0, 30.0), angular_speed_range=(0.005, 0.03),
                      drift_speed: float = 0.01, max_tries: int = 50) -> list[Pose]:
    """Constant-angular-velocity tumble with slow linear drift.

    The first orientation is uniform on SO(3); rotation advances by a fixed
    angle about a fixed random axis each frame. Every frame keeps at least 60%
    of keypoints inside the image.
    """
    radius = model.bounding_radius
    d_lo, d_hi = distance_range
    check_feasible(K, radius, d_lo)
    q0 = random_quaternion(rng)
    axis = _unit(rng)
    omega = rng.uniform(*angular_speed_range)
    step = quat_from_axis_angle(axis, omega)

    qs = [q0]
    for _ in range(n_frames - 1):
        qs.append(quat_multiply(step, qs[-1]))

    for attempt in range(max_tries + 1):
        z0 = rng.uniform(d_lo, d_hi)
        # lateral room that keeps the bounding sphere inside the frustum
        room_x = max(0.0, (min(K.cx, K.width - K.cx) * (z0 - radius) / K.fx) - radius)
        room_y = max(0.0, (min(K.cy, K.height - K.cy) * (z0 - radius) / K.fy) - radius)
        t0 = np.array([rng.uniform(-room_x, room_x), rng.uniform(-room_y, room_y), z0])
        drift = _unit(rng) * drift_speed if attempt < max_tries else np.zeros(3)
        poses = [Pose(q, t0 + k * drift) for k, q in enumerate(qs)]
        ok = True
        for pose in poses:
            if pose.t[2] - radius <= 1e-3:
                ok = False
                break
            frac = in_frame(project(K, pose, model.keypoints3d), K).mean()
            if frac < MIN_IN_FRAME:
                ok = False
                break
        if ok:
            return poses
    raise SpecError("could not place a trajectory that keeps the target in frame")
