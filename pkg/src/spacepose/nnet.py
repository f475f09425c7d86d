"""Graph-augmented heatmap keypoint network.

Layout: a five-stage downsampling encoder produces the bottleneck feature F.
Two decoders read F in parallel:

* the upsampling branch, bilinear resize of F to heatmap resolution followed by
  a 3x3 convolution to one channel per keypoint;
* the graph branch, which flattens F, projects it to per-keypoint node
  features and runs ``gcn_blocks`` graph convolutions ``relu(A_norm X W^T)``,
  each followed by a per-node linear layer.

Node features are mapped to H*W maps, added to the upsampled maps, and a 1x1
convolution mixes the keypoint channels into the output heatmaps.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .errors import ConfigError, ShapeError
from .kpgraph import KeypointGraph

CHECKPOINT_VERSION = 1
N_DOWNSAMPLE = 5


@dataclass
class ModelConfig:
    n_keypoints: int
    input_size: int = 256
    heatmap_size: int = 32
    base_channels: int = 16
    max_channels: int = 128
    gcn_blocks: int = 3
    c_in: int = 64
    c_out: int = 64
    use_gcn: bool = True
    seed: int = 0
    edges: tuple = ()

    def __post_init__(self):
        self.edges = tuple(tuple(int(v) for v in e) for e in self.edges)
        if self.input_size % 2**N_DOWNSAMPLE:
            raise ConfigError(f"input_size must be divisible by {2**N_DOWNSAMPLE}, got {self.input_size}")
        if self.heatmap_size < 1 or self.input_size % self.heatmap_size:
            raise ConfigError("heatmap_size must divide input_size")
        if self.n_keypoints < 4:
            raise ConfigError(f"n_keypoints must be >= 4, got {self.n_keypoints}")
        if self.gcn_blocks < 1:
            raise ConfigError("gcn_blocks must be >= 1")
        KeypointGraph.from_edges(self.n_keypoints, self.edges)

    @property
    def lam(self) -> float:
        return self.input_size / self.heatmap_size

    @property
    def stage_channels(self) -> list[int]:
        return [min(self.base_channels * 2**i, self.max_channels) for i in range(N_DOWNSAMPLE)]

    @property
    def bottleneck_size(self) -> int:
        return self.input_size // 2**N_DOWNSAMPLE

    def to_dict(self) -> dict:
        d = asdict(self)
        d["edges"] = [list(e) for e in self.edges]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config field(s): {sorted(unknown)}")
        return cls(**d)

    def digest(self) -> str:
        import hashlib

        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


class EncoderStage(nn.Module):
    def __init__(self, c_in, c_out):
        super().__init__()
        self.conv1 = nn.Conv2d(c_in, c_out, 3, padding=1)
        self.conv2 = nn.Conv2d(c_out, c_out, 3, padding=1)

    def forward(self, x):
        x = F.relu(self.conv1(x))
        x = F.relu(self.conv2(x))
        return F.avg_pool2d(x, 2)


class GCNBlock(nn.Module):
    """``relu(A_norm @ X @ W_adj^T)`` followed by a per-node linear layer."""

    def __init__(self, c_in, c_out):
        super().__init__()
        self.w_adj = nn.Parameter(torch.empty(c_out, c_in))
        self.linear = nn.Linear(c_out, c_out)

    def forward(self, x, a_norm):
        if x.shape[-1] != self.w_adj.shape[1] or a_norm.shape[0] != x.shape[-2]:
            raise ShapeError(f"gcn block got features {tuple(x.shape)} and adjacency {tuple(a_norm.shape)}")
        h = F.relu(torch.matmul(a_norm, x) @ self.w_adj.T)
        return self.linear(h)


class GraphKeypointNet(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        cfg = config
        chans = cfg.stage_channels
        self.encoder = nn.ModuleList(
            EncoderStage(c0, c1) for c0, c1 in zip([1] + chans[:-1], chans)
        )
        self.up_conv = nn.Conv2d(chans[-1], cfg.n_keypoints, 3, padding=1)
        self.head = nn.Conv2d(cfg.n_keypoints, cfg.n_keypoints, 1)
        if cfg.use_gcn:
            flat = chans[-1] * cfg.bottleneck_size**2
            self.node_proj = nn.Linear(flat, cfg.n_keypoints * cfg.c_in)
            widths = [cfg.c_in] + [cfg.c_out] * cfg.gcn_blocks
            self.gcn = nn.ModuleList(GCNBlock(a, b) for a, b in zip(widths[:-1], widths[1:]))
            self.node_to_map = nn.Linear(cfg.c_out, cfg.heatmap_size**2)
        graph = KeypointGraph.from_edges(cfg.n_keypoints, cfg.edges)
        self.register_buffer("a_norm", torch.tensor(graph.A_norm, dtype=torch.float32))
        self.reset_parameters(cfg.seed)

    @torch.no_grad()
    def reset_parameters(self, seed: int):
        gen = torch.Generator().manual_seed(int(seed))
        for name, p in self.named_parameters():
            if name.endswith("bias"):
                p.zero_()
            else:
                fan_in = p[0].numel()
                bound = math.sqrt(6.0 / fan_in)
                p.copy_(torch.rand(p.shape, generator=gen, dtype=p.dtype) * 2 * bound - bound)

    def graph_parameter_names(self) -> list[str]:
        prefixes = ("node_proj.", "gcn.", "node_to_map.")
        return [n for n, _ in self.named_parameters() if n.startswith(prefixes)]

    def encode(self, image):
        cfg = self.config
        if image.ndim != 4 or image.shape[1:] != (1, cfg.input_size, cfg.input_size):
            raise ShapeError(
                f"expected (B, 1, {cfg.input_size}, {cfg.input_size}) input, got {tuple(image.shape)}"
            )
        x = image
        for stage in self.encoder:
            x = stage(x)
        return x

    def upsample_branch(self, feat):
        cfg = self.config
        if feat.shape[1] != self.up_conv.in_channels:
            raise ShapeError(f"bottleneck has {feat.shape[1]} channels, expected {self.up_conv.in_channels}")
        up = F.interpolate(feat, size=(cfg.heatmap_size, cfg.heatmap_size), mode="bilinear",
                           align_corners=False)
        return self.up_conv(up)

    def graph_decoder(self, feat):
        cfg = self.config
        nodes = self.node_proj(feat.flatten(1)).view(-1, cfg.n_keypoints, cfg.c_in)
        a_norm = self.a_norm.to(nodes.dtype)
        for block in self.gcn:
            nodes = block(nodes, a_norm)
        return nodes

    def fuse_and_head(self, up_maps, nodes=None):
        cfg = self.config
        x = up_maps
        if nodes is not None:
            if nodes.shape[1:] != (cfg.n_keypoints, cfg.c_out):
                raise ShapeError(f"node features have shape {tuple(nodes.shape)}")
            x = x + self.node_to_map(nodes).view(-1, cfg.n_keypoints, cfg.heatmap_size, cfg.heatmap_size)
        return self.head(x)

    def forward(self, image, use_gcn: bool | None = None):
        use_gcn = self.config.use_gcn if use_gcn is None else use_gcn
        feat = self.encode(image)
        up_maps = self.upsample_branch(feat)
        nodes = self.graph_decoder(feat) if use_gcn else None
        return self.fuse_and_head(up_maps, nodes)


def mse_loss(pred, target):
    """Pixel-wise squared error, averaged over every element of the batch."""
    if pred.shape != target.shape:
        raise ShapeError(f"loss shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    return ((pred - target) ** 2).mean()


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


def save_checkpoint(path, model: GraphKeypointNet, extra_arrays: dict | None = None,
                    extra_meta: dict | None = None) -> None:
    """Write an ``.npz`` container holding every parameter array next to a JSON header."""
    meta = {"version": CHECKPOINT_VERSION, "model_config": model.config.to_dict()}
    meta.update(extra_meta or {})
    arrays = {"__meta__": np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)}
    for name, p in model.state_dict().items():
        arrays[f"param/{name}"] = p.detach().cpu().numpy()
    for name, arr in (extra_arrays or {}).items():
        arrays[name] = np.asarray(arr)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path, dtype=torch.float32):
    """Return ``(model, meta, extra_arrays)``; rejects version or shape mismatches."""
    with np.load(path) as z:
        meta = json.loads(bytes(z["__meta__"]).decode())
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ConfigError(f"unsupported checkpoint version {meta.get('version')}")
        cfg = ModelConfig.from_dict(meta["model_config"])
        model = GraphKeypointNet(cfg).to(dtype)
        state = model.state_dict()
        loaded = {}
        extra = {}
        for key in z.files:
            if key.startswith("param/"):
                loaded[key[len("param/"):]] = z[key]
            elif key != "__meta__":
                extra[key] = z[key]
    if set(loaded) != set(state):
        raise ShapeError(f"checkpoint parameters {sorted(set(loaded) ^ set(state))} do not match config")
    for name, arr in loaded.items():
        if tuple(arr.shape) != tuple(state[name].shape):
            raise ShapeError(f"parameter {name}: checkpoint {arr.shape} vs model {tuple(state[name].shape)}")
        state[name] = torch.from_numpy(arr.copy())
    model.load_state_dict(state)
    return model, meta, extra
