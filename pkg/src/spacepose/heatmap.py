"""Gaussian heatmap codec and keypoint RMSE.

Heatmap pixel ``(w, h)`` corresponds to image location ``(lam * w, lam * h)``
where ``lam`` is the input/heatmap resolution ratio.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

DEFAULT_SIGMA = 2.0


@dataclass
class Keypoints2D:
    points: np.ndarray  # (N, 2) as (u, v)
    visible: np.ndarray  # (N,) bool
    confidence: np.ndarray | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 2)
        if self.visible is None:
            self.visible = np.ones(len(self.points), dtype=bool)
        self.visible = np.asarray(self.visible, dtype=bool).reshape(-1)
        if len(self.visible) != len(self.points):
            raise InvalidInputError("visibility length does not match point count")
        if not np.all(np.isfinite(self.points)):
            raise InvalidInputError("keypoint coordinates must be finite")

    def __len__(self):
        return len(self.points)


@dataclass
class Heatmap:
    values: np.ndarray  # (N, H, W)
    lam: float

    def __post_init__(self):
        if self.lam <= 0:
            raise InvalidInputError(f"scale ratio must be positive, got {self.lam}")


def _as_points(k) -> np.ndarray:
    return k.points if isinstance(k, Keypoints2D) else np.asarray(k, dtype=float).reshape(-1, 2)


def encode(keypoints, height: int, width: int, lam: float, sigma: float = DEFAULT_SIGMA) -> Heatmap:
    """Render one Gaussian channel per keypoint with peak value 1.

    Keypoints whose scaled centre does not round onto the map give an
    all-zero channel.
    """
    if sigma <= 0:
        raise InvalidInputError(f"sigma must be positive, got {sigma}")
    pts = _as_points(keypoints) / lam
    ws = np.arange(width, dtype=float)
    hs = np.arange(height, dtype=float)
    out = np.zeros((len(pts), height, width))
    for i, (mu_w, mu_h) in enumerate(pts):
        if not (-0.5 <= mu_w < width - 0.5 and -0.5 <= mu_h < height - 0.5):
            continue
        gx = np.exp(-((ws - mu_w) ** 2) / (2 * sigma**2))
        gy = np.exp(-((hs - mu_h) ** 2) / (2 * sigma**2))
        g = gy[:, None] * gx[None, :]
        out[i] = g / g.max()
    return Heatmap(out, float(lam))


def argmax_coords(values: np.ndarray, subpixel: bool = True):
    """Per-channel argmax over the last two axes, in heatmap pixels.

    Returns ``(coords, peak)`` with ``coords[..., :] = (w, h)``. Ties resolve to
    the first maximum in row-major order. With ``subpixel`` the location moves
    a quarter pixel toward the larger neighbour along each axis.
    """
    values = np.asarray(values, dtype=float)
    *lead, H, W = values.shape
    flat = values.reshape(-1, H * W)
    idx = np.argmax(flat, axis=1)
    peak = flat[np.arange(len(flat)), idx]
    hh, ww = np.divmod(idx, W)
    x = ww.astype(float)
    y = hh.astype(float)
    if subpixel:
        maps = values.reshape(-1, H, W)
        r = np.arange(len(flat))
        inner_w = (ww > 0) & (ww < W - 1)
        inner_h = (hh > 0) & (hh < H - 1)
        dx = np.zeros_like(x)
        dy = np.zeros_like(y)
        dx[inner_w] = np.sign(maps[r[inner_w], hh[inner_w], ww[inner_w] + 1]
                              - maps[r[inner_w], hh[inner_w], ww[inner_w] - 1])
        dy[inner_h] = np.sign(maps[r[inner_h], hh[inner_h] + 1, ww[inner_h]]
                              - maps[r[inner_h], hh[inner_h] - 1, ww[inner_h]])
        x += 0.25 * dx
        y += 0.25 * dy
    # all-zero channels fall back to the map centre
    empty = ~np.any(flat != 0, axis=1)
    x[empty] = (W - 1) / 2
    y[empty] = (H - 1) / 2
    coords = np.stack([x, y], axis=-1).reshape(*lead, 2)
    return coords, peak.reshape(lead), (~empty).reshape(lead)


def decode(heatmap: Heatmap, subpixel: bool = True) -> Keypoints2D:
    """Keypoints at the per-channel maxima, scaled back to image pixels.

    ``visible`` is False for channels with no signal (flagged low confidence).
    """
    values = np.asarray(heatmap.values)
    if values.ndim != 3 or values.size == 0:
        raise InvalidInputError(f"expected non-empty (N, H, W) heatmap, got {values.shape}")
    coords, peak, ok = argmax_coords(values, subpixel=subpixel)
    return Keypoints2D(heatmap.lam * coords, ok, confidence=peak)


def rmse(k, k_ref) -> float:
    a = _as_points(k)
    b = _as_points(k_ref)
    if a.shape != b.shape or len(a) == 0:
        raise InvalidInputError(f"keypoint count mismatch: {a.shape} vs {b.shape}")
    return float(np.sqrt(np.mean(np.sum((a - b) ** 2, axis=1))))
