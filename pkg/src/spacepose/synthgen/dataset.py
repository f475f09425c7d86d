"""On-disk dataset generation and loading.

Layout::

    root/meta.json
    root/model.json
    root/{train,val,test}/seq_XXXX/frame_XXXXXX.png
    root/{train,val,test}/seq_XXXX/annotations.jsonl
"""
from __future__ import annotations

import json
import logging
import shutil
import tempfile
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from PIL import Image

from ..errors import SpecError
from ..geometry import CameraIntrinsics, Pose, project
from .render import Lighting, rasterize
from .satellites import SatelliteModel
from .trajectory import check_feasible, sample_trajectory

log = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")
FORMAT_VERSION = 1


@dataclass
class DatasetSpec:
    n_sequences: int = 300
    frames_per_sequence: int = 300
    image_size: int = 1024
    fov_deg: float = 40.0
    distance_range: tuple = (12.0, 30.0)
    angular_speed_range: tuple = (0.005, 0.03)
    drift_speed: float = 0.01
    noise_sigma: float = 0.02
    ambient: float = 0.15
    diffuse: float = 0.85
    star_density: float = 0.002
    occluder_prob: float = 0.0
    occluder_size: tuple = (0.3, 0.6)
    split_ratio: tuple = (3, 1, 1)
    seed: int = 0

    def __post_init__(self):
        for name in ("distance_range", "angular_speed_range", "occluder_size", "split_ratio"):
            setattr(self, name, tuple(getattr(self, name)))
        self.validate()

    def validate(self):
        def bad(name, why):
            raise SpecError(f"{name}: {why}")

        if not isinstance(self.n_sequences, int) or self.n_sequences < 1:
            bad("n_sequences", "must be a positive integer")
        if not isinstance(self.frames_per_sequence, int) or self.frames_per_sequence < 1:
            bad("frames_per_sequence", "must be a positive integer")
        if not isinstance(self.image_size, int) or self.image_size < 8:
            bad("image_size", "must be an integer >= 8")
        if not 1 < self.fov_deg < 170:
            bad("fov_deg", "must lie in (1, 170) degrees")
        if len(self.distance_range) != 2 or not 0 < self.distance_range[0] <= self.distance_range[1]:
            bad("distance_range", "must be [min, max] with 0 < min <= max")
        if len(self.angular_speed_range) != 2 or not 0 <= self.angular_speed_range[0] <= self.angular_speed_range[1]:
            bad("angular_speed_range", "must be [min, max] with 0 <= min <= max")
        if self.drift_speed < 0 or self.noise_sigma < 0:
            bad("drift_speed" if self.drift_speed < 0 else "noise_sigma", "must be non-negative")
        if not 0 <= self.occluder_prob <= 1:
            bad("occluder_prob", "must lie in [0, 1]")
        if len(self.occluder_size) != 2 or not 0 < self.occluder_size[0] <= self.occluder_size[1]:
            bad("occluder_size", "must be [min, max] fractions of the keypoint box")
        if len(self.split_ratio) != 3 or min(self.split_ratio) < 0 or sum(self.split_ratio) <= 0:
            bad("split_ratio", "must be three non-negative weights")

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSpec":
        names = {f.name for f in fields(cls)}
        for key in d:
            if key not in names:
                raise SpecError(f"{key}: unknown dataset spec field")
        try:
            return cls(**d)
        except TypeError as exc:
            raise SpecError(str(exc)) from exc

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self).items()}

    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics.from_fov(self.image_size, self.fov_deg)


@dataclass
class SampleRecord:
    keypoints2d: np.ndarray
    visible: np.ndarray
    pose: Pose
    intrinsics: CameraIntrinsics
    frame: int
    sequence: int
    image_path: Path | None = None
    image: np.ndarray | None = field(default=None, repr=False)

    def load_image(self) -> np.ndarray:
        if self.image is None:
            with Image.open(self.image_path) as im:
                return np.asarray(im.convert("L"))
        return self.image


def split_sequences(n: int, ratio, seed: int) -> dict:
    """Seeded sequence-level partition into train/val/test following ``ratio``."""
    order = np.random.default_rng([int(seed), 7919]).permutation(n)
    total = float(sum(ratio))
    n_train = int(round(n * ratio[0] / total))
    n_val = int(round(n * ratio[1] / total))
    n_val = min(n_val, n - n_train)
    parts = np.split(order, [n_train, n_train + n_val])
    return {name: sorted(int(i) for i in part) for name, part in zip(SPLITS, parts)}


def child_seed(*keys) -> int:
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


def _occluder(rng, kp2d, size_range):
    lo, hi = kp2d.min(axis=0), kp2d.max(axis=0)
    box = np.maximum(hi - lo, 1.0)
    size = box * rng.uniform(size_range[0], size_range[1], size=2)
    start = lo + rng.random(2) * (box - size)  # also covers the box when size >= box
    return tuple(float(v) for v in (*start, *(start + size)))


def render_sequence(spec: DatasetSpec, model: SatelliteModel, seq: int):
    """Yield ``(frame, image, kp2d, visible, pose, occluder)`` for one sequence."""
    K = spec.intrinsics()
    rng = np.random.default_rng([int(spec.seed), int(seq)])
    poses = sample_trajectory(spec.frames_per_sequence, model, K, rng, spec.distance_range,
                              spec.angular_speed_range, spec.drift_speed)
    light_dir = np.array([0.35, 0.45, 0.82]) + 0.5 * rng.normal(size=3)
    light_dir[2] = max(light_dir[2], 0.2)  # keep the sun behind the camera
    lighting = Lighting(direction=tuple(light_dir / np.linalg.norm(light_dir)), ambient=spec.ambient,
                        diffuse=spec.diffuse, noise_sigma=spec.noise_sigma, star_density=spec.star_density)
    for k, pose in enumerate(poses):
        frng = np.random.default_rng(child_seed(spec.seed, seq, k))
        occ = None
        if frng.random() < spec.occluder_prob:
            occ = _occluder(frng, project(K, pose, model.keypoints3d), spec.occluder_size)
        image, kp2d, visible = rasterize(model, pose, K, lighting, seed=child_seed(spec.seed, seq, k, 1),
                                         occluder=occ)
        yield k, image, kp2d, visible, pose, occ


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def generate_dataset(spec: DatasetSpec, model: SatelliteModel, root) -> Path:
    """Render every sequence of ``spec`` under ``root``; replaces an existing directory.

    Output is assembled in a sibling temporary directory and moved into
    place only on success, so failures leave no partial dataset behind.
    """
    root = Path(root)
    K = spec.intrinsics()
    check_feasible(K, model.bounding_radius, spec.distance_range[0])
    splits = split_sequences(spec.n_sequences, spec.split_ratio, spec.seed)
    root.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{root.name}.", dir=root.parent))
    try:
        meta = {
            "version": FORMAT_VERSION,
            "intrinsics": K.to_dict(),
            "spec": spec.to_dict(),
            "model": model.name,
            "n_keypoints": model.n_keypoints,
            "edges": [list(e) for e in model.edges],
            "seed": spec.seed,
            "splits": splits,
        }
        _write_json(tmp / "meta.json", meta)
        _write_json(tmp / "model.json", model.to_dict())
        for split, seqs in splits.items():
            (tmp / split).mkdir()
            for seq in seqs:
                seq_dir = tmp / split / f"seq_{seq:04d}"
                seq_dir.mkdir()
                lines = []
                for k, image, kp2d, visible, pose, occ in render_sequence(spec, model, seq):
                    name = f"frame_{k:06d}.png"
                    Image.fromarray(image).save(seq_dir / name, format="PNG")
                    lines.append(json.dumps({
                        "frame": k,
                        "image": name,
                        "keypoints": [[float(u), float(v), int(vis)] for (u, v), vis in zip(kp2d, visible)],
                        "pose": pose.to_dict(),
                        "occluder": None if occ is None else list(occ),
                    }, sort_keys=True))
                (seq_dir / "annotations.jsonl").write_text("\n".join(lines) + "\n")
            log.info("wrote %s split: %d sequences", split, len(seqs))
        if root.exists():
            shutil.rmtree(root)
        tmp.rename(root)
    except OSError as exc:
        shutil.rmtree(tmp, ignore_errors=True)
        raise OSError(f"dataset generation failed under {root}: {exc}") from exc
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return root


class Dataset:
    """Read-only view of a generated dataset; images load lazily."""

    def __init__(self, root):
        self.root = Path(root)
        meta_path = self.root / "meta.json"
        if not meta_path.is_file():
            raise FileNotFoundError(f"no dataset at {self.root} (missing meta.json)")
        self.meta = json.loads(meta_path.read_text())
        self.model = SatelliteModel.from_dict(json.loads((self.root / "model.json").read_text()))
        self.intrinsics = CameraIntrinsics.from_dict(self.meta["intrinsics"])
        self._cache: dict = {}

    @property
    def edges(self):
        return [tuple(e) for e in self.meta["edges"]]

    def split(self, name: str) -> list[SampleRecord]:
        if name not in SPLITS:
            raise ValueError(f"unknown split {name!r}")
        if name not in self._cache:
            records = []
            for seq in self.meta["splits"][name]:
                seq_dir = self.root / name / f"seq_{seq:04d}"
                for line in (seq_dir / "annotations.jsonl").read_text().splitlines():
                    rec = json.loads(line)
                    kp = np.asarray(rec["keypoints"], dtype=float)
                    records.append(SampleRecord(
                        keypoints2d=kp[:, :2], visible=kp[:, 2].astype(bool),
                        pose=Pose.from_dict(rec["pose"]), intrinsics=self.intrinsics,
                        frame=int(rec["frame"]), sequence=int(seq), image_path=seq_dir / rec["image"],
                    ))
            self._cache[name] = records
        return self._cache[name]
