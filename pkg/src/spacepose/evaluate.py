"""Keypoint and pose evaluation over dataset splits."""
from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, EmptySplitError, SpacePoseError
from .geometry import pose_error_rotation, pose_error_translation
from .heatmap import DEFAULT_SIGMA, argmax_coords, encode
from .nnet import GraphKeypointNet, ModelConfig
from .pnpsolve import PnPOptions, solve
from .trainer import PreparedSplit, predict_heatmaps, split_rmse


class ModelDetector:
    def __init__(self, model: GraphKeypointNet):
        self.model = model
        self.config = model.config

    def heatmaps(self, prepared: PreparedSplit) -> np.ndarray:
        return predict_heatmaps(self.model, prepared)


class OracleDetector:
    """Emits the ground-truth Gaussian heatmaps; upper bound set by the codec alone."""

    def __init__(self, config: ModelConfig, sigma: float = DEFAULT_SIGMA):
        self.config = config
        self.sigma = sigma

    def heatmaps(self, prepared: PreparedSplit) -> np.ndarray:
        H = self.config.heatmap_size
        return np.stack([
            encode(prepared.item(i)[2], H, H, self.config.lam, self.sigma).values for i in range(len(prepared))
        ])


class GroundTruthDetector:
    """Returns the annotated keypoints themselves, bypassing heatmaps entirely."""

    def __init__(self, config: ModelConfig):
        self.config = config

    def keypoints(self, prepared: PreparedSplit):
        pts = np.stack([prepared.item(i)[2] for i in range(len(prepared))])
        return pts, np.ones(pts.shape[:2])


@dataclass
class EvalReport:
    split: str
    n_samples: int
    config_digest: str
    rmse: float | None = None
    e_t: float | None = None
    e_q: float | None = None
    n_pose_ok: int | None = None
    n_pose_failed: int | None = None
    failures: list = field(default_factory=list)
    seconds: float = 0.0

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def table(self) -> str:
        rows = [("split", self.split), ("samples", self.n_samples)]
        if self.rmse is not None:
            rows.append(("keypoint RMSE [px]", f"{self.rmse:.4f}"))
        if self.e_t is not None or self.n_pose_ok is not None:
            rows.append(("E_t", "n/a" if self.e_t is None else f"{self.e_t:.6g}"))
            rows.append(("E_q [rad]", "n/a" if self.e_q is None else f"{self.e_q:.6g}"))
            rows.append(("pose solved / failed", f"{self.n_pose_ok} / {self.n_pose_failed}"))
        rows.append(("config digest", self.config_digest))
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{width}}  {v}" for k, v in rows)


@dataclass
class Predictions:
    """Decoded keypoints for every frame of a split, network-input frame."""

    pred: np.ndarray  # (n, N, 2)
    gt: np.ndarray  # (n, N, 2)
    confidence: np.ndarray  # (n, N)
    records: list

    def dump_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["sequence", "frame", "keypoint", "pred_u", "pred_v", "gt_u", "gt_v", "confidence"])
            for rec, p, g, c in zip(self.records, self.pred, self.gt, self.confidence):
                for k in range(len(p)):
                    w.writerow([rec.sequence, rec.frame, k, repr(float(p[k, 0])), repr(float(p[k, 1])),
                                repr(float(g[k, 0])), repr(float(g[k, 1])), repr(float(c[k]))])


def rmse_from_csv(path) -> float:
    """Recompute the split RMSE from a predictions dump."""
    frames: dict = {}
    with open(path) as fh:
        for row in csv.DictReader(fh):
            key = (int(row["sequence"]), int(row["frame"]))
            d2 = (float(row["pred_u"]) - float(row["gt_u"])) ** 2 + (float(row["pred_v"]) - float(row["gt_v"])) ** 2
            frames.setdefault(key, []).append(d2)
    return float(np.mean([np.sqrt(np.mean(v)) for v in frames.values()]))


def predict_split(detector, prepared: PreparedSplit, subpixel: bool = True) -> Predictions:
    cfg = detector.config
    if cfg.n_keypoints != prepared.cfg.n_keypoints:
        raise ConfigError(f"detector predicts {cfg.n_keypoints} keypoints, split has {prepared.cfg.n_keypoints}")
    gt = np.stack([prepared.item(i)[2] for i in range(len(prepared))])
    if hasattr(detector, "keypoints"):
        pred, conf = detector.keypoints(prepared)
        return Predictions(pred, gt, conf, prepared.records)
    coords, peak, _ = argmax_coords(detector.heatmaps(prepared), subpixel=subpixel)
    return Predictions(coords * cfg.lam, gt, peak, prepared.records)


def evaluate_keypoints(detector, records, split: str = "test", margin: float = 0.1) -> tuple[EvalReport, Predictions]:
    if len(records) == 0:
        raise EmptySplitError(f"split {split!r} is empty")
    t0 = time.perf_counter()
    prepared = PreparedSplit(records, detector.config, margin)
    preds = predict_split(detector, prepared)
    report = EvalReport(split, len(records), detector.config.digest(), rmse=split_rmse(preds.pred, preds.gt))
    report.seconds = time.perf_counter() - t0
    return report, preds


def evaluate_pose(detector, records, keypoints3d, split: str = "test", margin: float = 0.1,
                  visible_only: bool = False, weight_by_confidence: bool = False,
                  pnp_options: PnPOptions | None = None) -> tuple[EvalReport, Predictions, list]:
    """Detect, map back to image pixels through the crop transform, solve PnP per frame.

    Frames where the solver fails are counted in ``n_pose_failed`` with the
    reason, and excluded from the E_t/E_q means.
    """
    if len(records) == 0:
        raise EmptySplitError(f"split {split!r} is empty")
    t0 = time.perf_counter()
    prepared = PreparedSplit(records, detector.config, margin)
    preds = predict_split(detector, prepared)
    keypoints3d = np.asarray(keypoints3d, dtype=float)
    est, ref_t, ref_q, est_t, est_q, failures = [], [], [], [], [], []
    for i, rec in enumerate(records):
        tf = prepared.item(i)[3]
        uv = tf.inverse(preds.pred[i])
        mask = rec.visible if visible_only else np.ones(len(uv), dtype=bool)
        w = preds.confidence[i][mask] if weight_by_confidence else None
        try:
            res = solve(keypoints3d[mask], rec.intrinsics, pnp_options, points2d=uv[mask], weights=w)
        except SpacePoseError as exc:
            failures.append({"sequence": rec.sequence, "frame": rec.frame, "reason": f"{type(exc).__name__}: {exc}"})
            est.append(None)
            continue
        est.append(res.pose)
        ref_t.append(rec.pose.t)
        ref_q.append(rec.pose.q)
        est_t.append(res.pose.t)
        est_q.append(res.pose.q)
    report = EvalReport(split, len(records), detector.config.digest(), rmse=split_rmse(preds.pred, preds.gt),
                        n_pose_ok=len(est_t), n_pose_failed=len(failures), failures=failures)
    if est_t:
        report.e_t = pose_error_translation(est_t, ref_t)
        report.e_q = pose_error_rotation(est_q, ref_q)
    report.seconds = time.perf_counter() - t0
    return report, preds, est


def write_report(report: EvalReport, out) -> None:
    Path(out).write_text(report.to_json() + "\n")
