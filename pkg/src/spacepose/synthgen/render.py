"""Minimal painter's-algorithm rasterizer with keypoint visibility tests."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry import DEPTH_EPS, CameraIntrinsics, Pose, project, transform_points
from .satellites import SatelliteModel


@dataclass
class Lighting:
    direction: tuple = (0.35, 0.45, 0.82)  # camera frame, points from light toward the scene
    ambient: float = 0.15
    diffuse: float = 0.85
    noise_sigma: float = 0.02  # additive Gaussian noise, in [0, 1] intensity units
    star_density: float = 0.002
    occluder_shade: float = 0.3

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def _pixel_grid(K: CameraIntrinsics):
    return np.meshgrid(np.arange(K.width, dtype=float), np.arange(K.height, dtype=float))


def _fill_convex(canvas, uu, vv, poly, value):
    # edge functions against pixel centres; orientation-agnostic
    x0, y0 = np.floor(poly.min(axis=0)).astype(int)
    x1, y1 = np.ceil(poly.max(axis=0)).astype(int)
    h, w = canvas.shape
    x0, y0 = max(x0, 0), max(y0, 0)
    x1, y1 = min(x1, w - 1), min(y1, h - 1)
    if x0 > x1 or y0 > y1:
        return
    U = uu[y0:y1 + 1, x0:x1 + 1]
    V = vv[y0:y1 + 1, x0:x1 + 1]
    pos = np.ones(U.shape, dtype=bool)
    neg = np.ones(U.shape, dtype=bool)
    n = len(poly)
    for k in range(n):
        ax, ay = poly[k]
        bx, by = poly[(k + 1) % n]
        e = (bx - ax) * (V - ay) - (by - ay) * (U - ax)
        pos &= e >= 0
        neg &= e <= 0
    mask = pos | neg
    canvas[y0:y1 + 1, x0:x1 + 1][mask] = value


def _draw_segment(canvas, uu, vv, a, b, width, value):
    x0, y0 = np.floor(np.minimum(a, b) - width).astype(int)
    x1, y1 = np.ceil(np.maximum(a, b) + width).astype(int)
    h, w = canvas.shape
    x0, y0 = max(x0, 0), max(y0, 0)
    x1, y1 = min(x1, w - 1), min(y1, h - 1)
    if x0 > x1 or y0 > y1:
        return
    U = uu[y0:y1 + 1, x0:x1 + 1]
    V = vv[y0:y1 + 1, x0:x1 + 1]
    d = b - a
    L2 = float(d @ d)
    s = np.zeros_like(U) if L2 == 0 else np.clip(((U - a[0]) * d[0] + (V - a[1]) * d[1]) / L2, 0, 1)
    dist2 = (U - a[0] - s * d[0]) ** 2 + (V - a[1] - s * d[1]) ** 2
    canvas[y0:y1 + 1, x0:x1 + 1][dist2 <= (width / 2) ** 2] = value


def in_frame(points2d, K: CameraIntrinsics) -> np.ndarray:
    u, v = points2d[:, 0], points2d[:, 1]
    return (u >= -0.5) & (u < K.width - 0.5) & (v >= -0.5) & (v < K.height - 0.5)


def ray_occluded(model: SatelliteModel, pose: Pose) -> np.ndarray:
    """True where a quad strictly nearer than the keypoint crosses its camera ray."""
    P = transform_points(pose, model.keypoints3d)
    hidden = np.zeros(len(P), dtype=bool)
    for prim in model.primitives:
        if prim.kind != "quad":
            continue
        V = transform_points(pose, prim.vertices)
        n = np.cross(V[1] - V[0], V[2] - V[0])
        denom = P @ n
        with np.errstate(divide="ignore", invalid="ignore"):
            s = (V[0] @ n) / denom
        cand = (np.abs(denom) > 1e-12) & (s > 0) & (s < 1 - 1e-6)
        for i in np.flatnonzero(cand):
            X = s[i] * P[i]
            inside = True
            for k in range(len(V)):
                e = np.cross(V[(k + 1) % len(V)] - V[k], X - V[k]) @ n
                if e < -1e-12 * (n @ n):
                    inside = False
                    break
            hidden[i] |= inside
    return hidden


def rasterize(model: SatelliteModel, pose: Pose, K: CameraIntrinsics, lighting: Lighting | None = None,
              seed: int = 0, occluder=None):
    """Render an 8-bit grayscale image of ``model`` at ``pose``.

    ``occluder`` is an optional ``(u0, v0, u1, v1)`` pixel rectangle drawn in
    front of everything. Returns ``(image, keypoints2d, visible)``.
    """
    lighting = lighting or Lighting()
    rng = np.random.default_rng(seed)
    uu, vv = _pixel_grid(K)
    canvas = np.zeros((K.height, K.width))
    stars = rng.random(canvas.shape) < lighting.star_density
    canvas[stars] = rng.uniform(0.3, 1.0, size=int(stars.sum()))

    light = -np.asarray(lighting.direction, dtype=float)
    light /= np.linalg.norm(light)
    drawn = []
    for prim in model.primitives:
        Vc = transform_points(pose, prim.vertices)
        if np.any(Vc[:, 2] <= DEPTH_EPS):
            continue
        shade = prim.albedo
        if prim.kind == "quad":
            n = np.cross(Vc[1] - Vc[0], Vc[2] - Vc[0])
            n /= np.linalg.norm(n)
            facing = n @ Vc.mean(axis=0)
            if facing > 0:
                if not prim.two_sided:
                    continue
                n = -n
            shade = prim.albedo * (lighting.ambient + lighting.diffuse * max(0.0, float(n @ light)))
        drawn.append((float(Vc[:, 2].mean()), prim, shade))
    drawn.sort(key=lambda item: -item[0])
    for _, prim, shade in drawn:
        uv = project(K, pose, prim.vertices)
        if prim.kind == "quad":
            _fill_convex(canvas, uu, vv, uv, shade)
        else:
            _draw_segment(canvas, uu, vv, uv[0], uv[1], prim.width, shade)

    kp2d = project(K, pose, model.keypoints3d)
    visible = in_frame(kp2d, K) & ~ray_occluded(model, pose)
    if occluder is not None:
        u0, v0, u1, v1 = occluder
        _fill_convex(canvas, uu, vv, np.array([[u0, v0], [u1, v0], [u1, v1], [u0, v1]], dtype=float),
                     lighting.occluder_shade)
        covered = (kp2d[:, 0] >= u0) & (kp2d[:, 0] <= u1) & (kp2d[:, 1] >= v0) & (kp2d[:, 1] <= v1)
        visible &= ~covered
    if lighting.noise_sigma > 0:
        canvas = canvas + rng.normal(0.0, lighting.noise_sigma, canvas.shape)
    image = np.clip(np.round(canvas * 255), 0, 255).astype(np.uint8)
    return image, kp2d, visible
