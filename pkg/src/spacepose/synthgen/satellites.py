"""Procedural spacecraft models: body-frame keypoints, skeleton edges, render primitives."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidInputError

KINDS = ("boxsat", "panelsat", "antennasat")

# corner index = 4*(x>0) + 2*(y>0) + (z>0)
_BOX_EDGES = [(0, 1), (2, 3), (4, 5), (6, 7), (0, 2), (1, 3), (4, 6), (5, 7), (0, 4), (1, 5), (2, 6), (3, 7)]
_BOX_FACES = [  # outward-wound quads (counter-clockwise seen from outside)
    (0, 1, 3, 2),  # -x
    (4, 6, 7, 5),  # +x
    (0, 4, 5, 1),  # -y
    (2, 3, 7, 6),  # +y
    (0, 2, 6, 4),  # -z
    (1, 5, 7, 3),  # +z
]


@dataclass
class Primitive:
    kind: str  # "quad" | "segment"
    vertices: np.ndarray
    albedo: float
    two_sided: bool = False
    width: float = 1.5  # segment width in pixels

    def to_dict(self) -> dict:
        return {"kind": self.kind, "vertices": self.vertices.tolist(), "albedo": self.albedo,
                "two_sided": self.two_sided, "width": self.width}

    @classmethod
    def from_dict(cls, d: dict) -> "Primitive":
        return cls(d["kind"], np.asarray(d["vertices"], dtype=float), float(d["albedo"]),
                   bool(d["two_sided"]), float(d["width"]))


@dataclass
class SatelliteModel:
    name: str
    keypoints3d: np.ndarray
    edges: list
    primitives: list = field(default_factory=list)

    def __post_init__(self):
        self.keypoints3d = np.asarray(self.keypoints3d, dtype=float)
        self.edges = [tuple(int(v) for v in e) for e in self.edges]
        if len(self.keypoints3d) < 10:
            raise InvalidInputError(f"{self.name}: need at least 10 keypoints")
        centred = self.keypoints3d - self.keypoints3d.mean(axis=0)
        s = np.linalg.svd(centred, compute_uv=False)
        if s[-1] < 1e-6 * s[0]:
            raise InvalidInputError(f"{self.name}: keypoints are coplanar")

    @property
    def n_keypoints(self) -> int:
        return len(self.keypoints3d)

    @property
    def bounding_radius(self) -> float:
        pts = [self.keypoints3d] + [p.vertices for p in self.primitives]
        return float(np.max(np.linalg.norm(np.vstack(pts), axis=1)))

    def to_dict(self) -> dict:
        return {"name": self.name, "keypoints3d": self.keypoints3d.tolist(),
                "edges": [list(e) for e in self.edges],
                "primitives": [p.to_dict() for p in self.primitives]}

    @classmethod
    def from_dict(cls, d: dict) -> "SatelliteModel":
        return cls(d["name"], np.asarray(d["keypoints3d"], dtype=float), [tuple(e) for e in d["edges"]],
                   [Primitive.from_dict(p) for p in d["primitives"]])


def _box(a, b, c, offset=(0.0, 0.0, 0.0)):
    corners = np.array([[sx * a, sy * b, sz * c] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)])
    corners += np.asarray(offset)
    quads = [Primitive("quad", corners[list(f)], 0.75) for f in _BOX_FACES]
    return corners, quads


def _boxsat(rng):
    j = 1 + 0.08 * (rng.random(5) - 0.5)
    a, b, c = 0.55 * j[0], 0.42 * j[1], 0.36 * j[2]
    corners, prims = _box(a, b, c)
    gap = 0.1
    long_, short = 1.7 * j[3], 1.05 * j[4]
    # +y panel: longer, slightly raised; -y panel: shorter, lowered, shifted in x
    p_pos = np.array([[-0.30, b + gap, 0.08], [0.42, b + gap, 0.08],
                      [0.42, b + gap + long_, 0.08], [-0.30, b + gap + long_, 0.08]])
    p_neg = np.array([[-0.38, -b - gap, -0.1], [-0.38, -b - gap - short, -0.1],
                      [0.30, -b - gap - short, -0.1], [0.30, -b - gap, -0.1]])
    prims += [Primitive("quad", p_pos, 0.45, two_sided=True), Primitive("quad", p_neg, 0.45, two_sided=True)]
    kps = np.vstack([corners, p_pos[2], p_pos[3], p_neg[1], p_neg[2]])
    edges = list(_BOX_EDGES) + [(8, 9), (10, 11), (8, 6), (9, 2), (10, 0), (11, 4)]
    return kps, edges, prims


def _panelsat(rng):
    j = 1 + 0.08 * (rng.random(3) - 0.5)
    a = c = 0.45 * j[0]
    b = 0.45 * j[0]
    gap = 0.15 * j[1]
    span, half_w = 2.3 * j[2], 0.5
    corners, prims = _box(a, b, c)
    y0 = b + gap
    hinge_pos = np.array([0.0, y0, 0.0])
    hinge_neg = np.array([0.0, -y0, 0.0])
    p_pos = np.array([[-half_w, y0, 0], [half_w, y0, 0], [half_w, y0 + span, 0], [-half_w, y0 + span, 0]])
    p_neg = p_pos * np.array([1, -1, 1])
    prims += [Primitive("quad", p_pos, 0.45, two_sided=True), Primitive("quad", p_neg[::-1].copy(), 0.45, two_sided=True),
              Primitive("segment", np.array([[0, b, 0], hinge_pos]), 0.9),
              Primitive("segment", np.array([[0, -b, 0], hinge_neg]), 0.9)]
    # 8 corners, +y outer corners (8, 9), -y outer corners (10, 11), hinges (12, 13)
    kps = np.vstack([corners, p_pos[2], p_pos[3], p_neg[2], p_neg[3], hinge_pos, hinge_neg])
    edges = list(_BOX_EDGES) + [(8, 9), (10, 11), (12, 8), (12, 9), (13, 10), (13, 11),
                                (12, 2), (12, 3), (12, 6), (12, 7), (13, 0), (13, 1), (13, 4), (13, 5)]
    return kps, edges, prims


def _antennasat(rng):
    j = 1 + 0.08 * (rng.random(4) - 0.5)
    a, b, c = 0.5 * j[0], 0.45 * j[1], 0.6 * j[2]
    corners, prims = _box(a, b, c)
    zd = c + 1.1 * j[3]
    r = 0.55
    dish = np.array([[-r, -r, zd], [r, -r, zd], [r, r, zd], [-r, r, zd]])
    center = np.array([0.0, 0.0, zd])
    prims += [Primitive("segment", np.array([[0, 0, c], center]), 0.9, width=2.0),
              Primitive("quad", dish, 0.95, two_sided=True)]
    kps = np.vstack([corners, center, dish[0], dish[2]])
    edges = list(_BOX_EDGES) + [(8, 9), (8, 10), (8, 1), (8, 3), (8, 5), (8, 7), (9, 1), (10, 7)]
    return kps, edges, prims


def make_satellite(kind: str, seed: int = 0) -> SatelliteModel:
    """Deterministic procedural model for ``kind`` in ``KINDS``; ``seed`` jitters proportions."""
    builders = {"boxsat": _boxsat, "panelsat": _panelsat, "antennasat": _antennasat}
    if kind not in builders:
        raise InvalidInputError(f"unknown satellite kind {kind!r}; choose from {KINDS}")
    rng = np.random.default_rng([int(seed), KINDS.index(kind)])
    kps, edges, prims = builders[kind](rng)
    return SatelliteModel(kind, kps, edges, prims)
