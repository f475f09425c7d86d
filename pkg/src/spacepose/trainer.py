"""Training: keypoint-box cropping, cosine-annealed Adam, checkpoints, metrics log."""
from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import scipy.ndimage as ndi
import torch

from .errors import ConfigError, EmptySplitError, InvalidInputError, TrainingDivergedError
from .heatmap import DEFAULT_SIGMA, argmax_coords, encode
from .nnet import GraphKeypointNet, ModelConfig, load_checkpoint, mse_loss, save_checkpoint

log = logging.getLogger(__name__)

MIN_CROP_PX = 32.0
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


@dataclass
class TrainConfig:
    batch_size: int = 16
    epochs: int = 80
    lr0: float = 0.01
    cosine_period_epochs: float = 16
    cosine_restarts: bool = True
    crop_margin_fraction: float = 0.1
    sigma: float = DEFAULT_SIGMA
    seed: int = 0
    use_gcn: bool = True
    checkpoint_interval: int = 1

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if not self.lr0 > 0:
            raise ConfigError("lr0 must be positive")
        if not self.cosine_period_epochs > 0:
            raise ConfigError("cosine_period_epochs must be positive")
        if self.epochs % self.cosine_period_epochs:
            warnings.warn(f"{self.epochs} epochs is not a whole number of {self.cosine_period_epochs}-epoch "
                          "cosine cycles", stacklevel=2)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown train config field(s): {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


# -- cropping ---------------------------------------------------------------

@dataclass(frozen=True)
class CropTransform:
    """``net = scale * (orig - origin)``; maps image pixels to network-input pixels."""

    scale: float
    x0: float
    y0: float

    def forward(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return self.scale * (pts - np.array([self.x0, self.y0]))

    def inverse(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return pts / self.scale + np.array([self.x0, self.y0])


def crop_box(keypoints, margin: float):
    """Square box ``(x0, y0, side)`` around the keypoints, grown by ``margin`` per side."""
    pts = np.asarray(keypoints, dtype=float)
    if len(pts) == 0 or not np.all(np.isfinite(pts)):
        raise InvalidInputError("crop needs at least one finite keypoint")
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    size = (hi - lo) * (1 + 2 * margin)
    side = max(float(size.max()), MIN_CROP_PX)
    centre = (lo + hi) / 2
    return centre[0] - side / 2, centre[1] - side / 2, side


def crop_and_resize(image, keypoints, input_size: int, margin: float = 0.1):
    """Crop the keypoint box, pad to a square with zeros, resize to ``input_size``.

    Returns ``(input, keypoints_net, transform)`` with ``input`` as float32 in
    [0, 1]. Bilinear sampling; pixel centres sit at integer coordinates.
    """
    x0, y0, side = crop_box(keypoints, margin)
    tf = CropTransform(input_size / side, x0, y0)
    img = np.asarray(image, dtype=np.float32) / 255.0
    inv = 1.0 / tf.scale
    out = ndi.affine_transform(img, np.diag([inv, inv]), offset=(y0, x0),
                               output_shape=(input_size, input_size), order=1, mode="constant", cval=0.0)
    return out.astype(np.float32), tf.forward(keypoints), tf


class PreparedSplit:
    """Network-ready inputs and heatmap targets for a list of sample records."""

    def __init__(self, records, model_config: ModelConfig, margin: float = 0.1, sigma: float = DEFAULT_SIGMA,
                 cache: bool | None = None):
        if len(records) == 0:
            raise EmptySplitError("split has no samples")
        self.records = list(records)
        self.cfg = model_config
        self.margin = margin
        self.sigma = sigma
        S, H, N = model_config.input_size, model_config.heatmap_size, model_config.n_keypoints
        if cache is None:
            cache = len(self.records) * 4 * (S * S + N * H * H) < 1 << 30
        self._cache = {} if cache else None

    def __len__(self):
        return len(self.records)

    def item(self, i: int):
        if self._cache is not None and i in self._cache:
            return self._cache[i]
        rec = self.records[i]
        if len(rec.keypoints2d) != self.cfg.n_keypoints:
            raise ConfigError(f"sample has {len(rec.keypoints2d)} keypoints, model expects {self.cfg.n_keypoints}")
        x, kp, tf = crop_and_resize(rec.load_image(), rec.keypoints2d, self.cfg.input_size, self.margin)
        hm = encode(kp, self.cfg.heatmap_size, self.cfg.heatmap_size, self.cfg.lam, self.sigma).values
        out = (x, hm.astype(np.float32), kp, tf)
        if self._cache is not None:
            self._cache[i] = out
        return out

    def batch(self, indices, dtype=torch.float32):
        items = [self.item(int(i)) for i in indices]
        x = torch.from_numpy(np.stack([it[0] for it in items])[:, None]).to(dtype)
        y = torch.from_numpy(np.stack([it[1] for it in items])).to(dtype)
        return x, y


# -- optimisation -----------------------------------------------------------

def cosine_lr(progress: float, lr0: float = 0.01, period: float = 16, restarts: bool = True) -> float:
    """Cosine annealing from ``lr0`` to 0 over ``period`` epochs.

    With ``restarts`` the cycle repeats; otherwise the rate stays 0 after the
    first period.
    """
    if progress < 0:
        raise InvalidInputError("progress must be non-negative")
    if restarts:
        phase = math.fmod(progress, period)
    elif progress >= period:
        return 0.0
    else:
        phase = progress
    return max(0.0, lr0 * (1 + math.cos(math.pi * phase / period)) / 2)


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0
    betas: tuple = ADAM_BETAS
    eps: float = ADAM_EPS

    @classmethod
    def for_params(cls, params: dict) -> "AdamState":
        return cls({k: torch.zeros_like(p) for k, p in params.items()},
                   {k: torch.zeros_like(p) for k, p in params.items()})


@torch.no_grad()
def adam_step(params: dict, grads: dict, state: AdamState, lr: float) -> None:
    """Bias-corrected Adam update applied in place to ``params`` and ``state``."""
    for name, g in grads.items():
        if g is not None and not torch.all(torch.isfinite(g)):
            raise TrainingDivergedError(f"non-finite gradient in {name} at step {state.step + 1}")
    state.step += 1
    b1, b2 = state.betas
    c1 = 1 - b1**state.step
    c2 = 1 - b2**state.step
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = torch.zeros_like(p)
        if g.shape != p.shape:
            raise InvalidInputError(f"gradient shape {tuple(g.shape)} != parameter shape {tuple(p.shape)} for {name}")
        m, v = state.m[name], state.v[name]
        m.mul_(b1).add_(g, alpha=1 - b1)
        v.mul_(b2).addcmul_(g, g, value=1 - b2)
        p.sub_(lr * (m / c1) / ((v / c2).sqrt() + state.eps))


def train_step(model: GraphKeypointNet, state: AdamState, x, y, lr: float) -> float:
    params = dict(model.named_parameters())
    for p in params.values():
        p.grad = None
    loss = mse_loss(model(x), y)
    if not torch.isfinite(loss):
        raise TrainingDivergedError(f"loss became {loss.item()} at step {state.step + 1}")
    loss.backward()
    adam_step(params, {k: p.grad for k, p in params.items()}, state, lr)
    return float(loss.item())


def epoch_order(n: int, seed: int, epoch: int) -> np.ndarray:
    return np.random.default_rng([int(seed), int(epoch)]).permutation(n)


@torch.no_grad()
def predict_heatmaps(model: GraphKeypointNet, prepared: PreparedSplit, batch_size: int = 64) -> np.ndarray:
    model.eval()
    dtype = next(model.parameters()).dtype
    chunks = []
    for start in range(0, len(prepared), batch_size):
        x, _ = prepared.batch(range(start, min(start + batch_size, len(prepared))), dtype=dtype)
        chunks.append(model(x).cpu().numpy())
    return np.concatenate(chunks)


def split_rmse(pred_kp: np.ndarray, gt_kp: np.ndarray) -> float:
    """Mean over frames of per-frame keypoint RMSE."""
    per_frame = np.sqrt(np.mean(np.sum((pred_kp - gt_kp) ** 2, axis=-1), axis=-1))
    return float(np.mean(per_frame))


def evaluate_rmse(model: GraphKeypointNet, prepared: PreparedSplit) -> float:
    heat = predict_heatmaps(model, prepared)
    coords, _, _ = argmax_coords(heat)
    pred = coords * model.config.lam
    gt = np.stack([prepared.item(i)[2] for i in range(len(prepared))])
    return split_rmse(pred, gt)


# -- training loop ----------------------------------------------------------

@dataclass
class TrainResult:
    final_checkpoint: Path
    best_checkpoint: Path
    log_path: Path
    rows: list


def _adam_arrays(state: AdamState) -> dict:
    out = {}
    for k in state.m:
        out[f"adam_m/{k}"] = state.m[k].cpu().numpy()
        out[f"adam_v/{k}"] = state.v[k].cpu().numpy()
    return out


def _save(path, model, state, epoch, train_cfg, rows):
    meta = {"train_config": train_cfg.to_dict(), "epoch": epoch, "adam_step": state.step, "log": rows}
    save_checkpoint(path, model, extra_arrays=_adam_arrays(state), extra_meta=meta)


def _write_log(path: Path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "lr", "train_loss", "val_rmse"])
        for r in rows:
            w.writerow([r["epoch"], repr(r["lr"]), repr(r["train_loss"]), repr(r["val_rmse"])])


def train(dataset, model_config: ModelConfig, train_config: TrainConfig, out_dir, resume=None) -> TrainResult:
    """Fit a model on ``dataset.split('train')``; select on validation RMSE.

    Writes ``last.npz`` (full optimiser state, resumable), ``best.npz`` and
    ``train_log.csv`` into ``out_dir``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tc = train_config
    train_recs, val_recs = dataset.split("train"), dataset.split("val")
    if not train_recs:
        raise EmptySplitError("training split is empty")
    if not val_recs:
        raise EmptySplitError("validation split is empty")
    if model_config.n_keypoints != dataset.model.n_keypoints:
        raise ConfigError(f"model expects {model_config.n_keypoints} keypoints, dataset has "
                          f"{dataset.model.n_keypoints}")
    train_set = PreparedSplit(train_recs, model_config, tc.crop_margin_fraction, tc.sigma)
    val_set = PreparedSplit(val_recs, model_config, tc.crop_margin_fraction, tc.sigma)

    last_path, best_path, log_path = out_dir / "last.npz", out_dir / "best.npz", out_dir / "train_log.csv"
    if resume is not None:
        model, meta, extra = load_checkpoint(resume)
        if model.config != model_config:
            raise ConfigError("resume checkpoint model config differs from requested config")
        state = AdamState.for_params(dict(model.named_parameters()))
        for k in state.m:
            state.m[k] = torch.from_numpy(extra[f"adam_m/{k}"].copy())
            state.v[k] = torch.from_numpy(extra[f"adam_v/{k}"].copy())
        state.step = int(meta["adam_step"])
        start_epoch = int(meta["epoch"]) + 1
        rows = list(meta["log"])
    else:
        model = GraphKeypointNet(model_config)
        state = AdamState.for_params(dict(model.named_parameters()))
        start_epoch, rows = 0, []
    best = min((r["val_rmse"] for r in rows), default=math.inf)

    n = len(train_set)
    n_batches = math.ceil(n / tc.batch_size)
    for epoch in range(start_epoch, tc.epochs):
        model.train()
        order = epoch_order(n, tc.seed, epoch)
        total, lr = 0.0, tc.lr0
        for b in range(n_batches):
            idx = order[b * tc.batch_size:(b + 1) * tc.batch_size]
            lr = cosine_lr(epoch + b / n_batches, tc.lr0, tc.cosine_period_epochs, tc.cosine_restarts)
            x, y = train_set.batch(idx)
            try:
                total += train_step(model, state, x, y, lr) * len(idx)
            except TrainingDivergedError as exc:
                raise TrainingDivergedError(str(exc), last_checkpoint=last_path if last_path.exists() else None)
        val = evaluate_rmse(model, val_set)
        rows.append({"epoch": epoch, "lr": lr, "train_loss": total / n, "val_rmse": val})
        log.info("epoch %d lr %.3g loss %.4g val_rmse %.3f", epoch, lr, total / n, val)
        if val < best:
            best = val
            _save(best_path, model, state, epoch, tc, rows)
        if (epoch + 1) % tc.checkpoint_interval == 0 or epoch == tc.epochs - 1:
            _save(last_path, model, state, epoch, tc, rows)
        _write_log(log_path, rows)
    if not best_path.exists():
        _save(best_path, model, state, tc.epochs - 1, tc, rows)
    return TrainResult(last_path, best_path, log_path, rows)


def load_train_config_file(path) -> dict:
    """Read a JSON training config ``{"dataset": ..., "model": {...}, "train": {...}}``."""
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
