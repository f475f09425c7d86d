"""Command-line entry point: ``spacepose <command> [options]``.

Usage and configuration errors exit with status 2; runtime or numerical failures exit with 3.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from .errors import ConfigError, EmptySplitError, SpecError, SpacePoseError, TrainingDivergedError
from .evaluate import (
    GroundTruthDetector,
    ModelDetector,
    OracleDetector,
    evaluate_keypoints,
    evaluate_pose,
    predict_split,
    write_report,
)
from .nnet import ModelConfig, load_checkpoint
from .pnpsolve import PnPOptions
from .synthgen import Dataset, DatasetSpec, KINDS, generate_dataset, make_satellite
from .trainer import PreparedSplit, TrainConfig, train

log = logging.getLogger("spacepose")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 2, 3


class UsageError(Exception):
    pass


def _read_json(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})")
    if not isinstance(data, dict):
        raise UsageError(f"{path}: top level must be an object")
    return data


def _config(args) -> dict:
    return _read_json(args.config) if args.config else {}


def _open_dataset(path) -> Dataset:
    if path is None:
        raise UsageError("no dataset path given (use --dataset or the config's \"dataset\" key)")
    try:
        return Dataset(path)
    except FileNotFoundError as exc:
        raise UsageError(str(exc))


# -- gen --------------------------------------------------------------------

def cmd_gen(args) -> int:
    cfg = _config(args)
    if args.spec:
        cfg.update(_read_json(args.spec))
    kind = cfg.pop("model", args.model)
    model_seed = cfg.pop("model_seed", 0)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if kind not in KINDS:
        raise UsageError(f"model: unknown satellite kind {kind!r}; choose from {', '.join(KINDS)}")
    try:
        spec = DatasetSpec.from_dict(cfg)
    except SpecError as exc:
        raise UsageError(f"invalid dataset spec: {exc}")
    out = Path(args.out or "dataset")
    generate_dataset(spec, make_satellite(kind, model_seed), out)
    meta = json.loads((out / "meta.json").read_text())
    counts = {k: len(v) for k, v in meta["splits"].items()}
    print(f"wrote {out}: sequences train/val/test = {counts['train']}/{counts['val']}/{counts['test']}")
    return EXIT_OK


# -- train / ablate ---------------------------------------------------------

def _train_configs(args, ds: Dataset, cfg: dict):
    model_d = dict(cfg.get("model", {}))
    train_d = dict(cfg.get("train", {}))
    if args.seed is not None:
        model_d["seed"] = train_d["seed"] = args.seed
    for key, attr in (("epochs", "epochs"), ("batch_size", "batch_size"), ("lr0", "lr")):
        if getattr(args, attr, None) is not None:
            train_d[key] = getattr(args, attr)
    if getattr(args, "no_gcn", False):
        model_d["use_gcn"] = train_d["use_gcn"] = False
    model_d.setdefault("use_gcn", train_d.get("use_gcn", True))
    train_d["use_gcn"] = model_d["use_gcn"]
    model_d["n_keypoints"] = ds.model.n_keypoints
    model_d["edges"] = ds.edges
    try:
        return ModelConfig.from_dict(model_d), TrainConfig.from_dict(train_d)
    except (ConfigError, TypeError) as exc:
        raise UsageError(f"invalid training config: {exc}")


def cmd_train(args) -> int:
    cfg = _config(args)
    ds = _open_dataset(args.dataset or cfg.get("dataset"))
    mc, tc = _train_configs(args, ds, cfg)
    out = Path(args.out or "run")
    res = train(ds, mc, tc, out, resume=args.resume)
    last = res.rows[-1]
    print(f"trained {len(res.rows)} epochs; final train_loss {last['train_loss']:.6g}, "
          f"val_rmse {last['val_rmse']:.4f}; checkpoints in {out}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = _config(args)
    ds = _open_dataset(args.dataset or cfg.get("dataset"))
    out = Path(args.out or "ablation")
    results = {}
    for label, no_gcn in (("gcn", False), ("no_gcn", True)):
        args.no_gcn = no_gcn
        mc, tc = _train_configs(args, ds, cfg)
        res = train(ds, mc, tc, out / label)
        model, _, _ = load_checkpoint(res.best_checkpoint)
        report, _ = evaluate_keypoints(ModelDetector(model), ds.split(args.split), args.split,
                                       tc.crop_margin_fraction)
        results[label] = report.rmse
    comparison = {"split": args.split, "rmse_gcn": results["gcn"], "rmse_no_gcn": results["no_gcn"],
                  "gcn_not_worse": results["gcn"] <= results["no_gcn"]}
    (out / "ablation.json").write_text(json.dumps(comparison, indent=1, sort_keys=True) + "\n")
    print(f"{'variant':<10}{'RMSE [px]':>12}")
    print(f"{'GCN':<10}{results['gcn']:>12.4f}")
    print(f"{'w/o GCN':<10}{results['no_gcn']:>12.4f}")
    return EXIT_OK


# -- evaluation -------------------------------------------------------------

def _detector(args, ds: Dataset, cfg: dict):
    if args.oracle:
        model_d = dict(cfg.get("model", {}))
        if args.input_size:
            model_d["input_size"] = args.input_size
        if args.heatmap_size:
            model_d["heatmap_size"] = args.heatmap_size
        model_d.update(n_keypoints=ds.model.n_keypoints, edges=ds.edges)
        try:
            config = ModelConfig.from_dict(model_d)
            return GroundTruthDetector(config) if args.oracle == "keypoints" else OracleDetector(config)
        except ConfigError as exc:
            raise UsageError(str(exc))
    if not args.checkpoint:
        raise UsageError("give --checkpoint or --oracle")
    try:
        model, _, _ = load_checkpoint(args.checkpoint)
    except FileNotFoundError:
        raise UsageError(f"checkpoint not found: {args.checkpoint}")
    if model.config.n_keypoints != ds.model.n_keypoints:
        raise ConfigError(f"checkpoint predicts {model.config.n_keypoints} keypoints, dataset has "
                          f"{ds.model.n_keypoints}")
    return ModelDetector(model)


def _emit(report, preds, args) -> None:
    print(report.table())
    out = Path(args.out) if args.out else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
        write_report(report, out / "report.json")
        preds.dump_csv(out / "predictions.csv")


def cmd_eval_kp(args) -> int:
    cfg = _config(args)
    ds = _open_dataset(args.dataset or cfg.get("dataset"))
    det = _detector(args, ds, cfg)
    report, preds = evaluate_keypoints(det, ds.split(args.split), args.split)
    _emit(report, preds, args)
    return EXIT_OK


def cmd_eval_pose(args) -> int:
    cfg = _config(args)
    ds = _open_dataset(args.dataset or cfg.get("dataset"))
    det = _detector(args, ds, cfg)
    opts = PnPOptions(robust=args.robust, seed=args.seed or 0)
    report, preds, _ = evaluate_pose(det, ds.split(args.split), ds.model.keypoints3d, args.split,
                                     visible_only=args.visible_only,
                                     weight_by_confidence=args.weight_by_confidence, pnp_options=opts)
    _emit(report, preds, args)
    return EXIT_OK


# -- overlay ----------------------------------------------------------------

GT_COLOR = (0, 220, 0)
PRED_COLOR = (255, 40, 40)
EDGE_COLOR = (80, 140, 255)


def render_overlay(image, gt_uv, pred_uv, edges, scale: int = 1) -> Image.Image:
    """RGB overlay: skeleton on predictions, ``x`` at ground truth, filled square at predictions."""
    im = Image.fromarray(np.asarray(image, dtype=np.uint8)).convert("RGB")
    if scale > 1:
        im = im.resize((im.width * scale, im.height * scale), Image.NEAREST)
    draw = ImageDraw.Draw(im)
    s = float(scale)
    P = np.round(np.asarray(pred_uv) * s).astype(int)
    G = np.round(np.asarray(gt_uv) * s).astype(int)
    for i, j in edges:
        draw.line([tuple(P[i]), tuple(P[j])], fill=EDGE_COLOR, width=1)
    r = max(2, scale)
    for u, v in G:
        draw.line([(u - r, v - r), (u + r, v + r)], fill=GT_COLOR)
        draw.line([(u - r, v + r), (u + r, v - r)], fill=GT_COLOR)
    h = max(1, scale // 2)
    for u, v in P:
        draw.rectangle([u - h, v - h, u + h, v + h], fill=PRED_COLOR)
    return im


def cmd_overlay(args) -> int:
    cfg = _config(args)
    ds = _open_dataset(args.dataset or cfg.get("dataset"))
    det = _detector(args, ds, cfg)
    records = ds.split(args.split)
    if args.frames:
        wanted = []
        for token in args.frames.split(","):
            seq, frame = (int(v) for v in token.split(":"))
            match = [r for r in records if r.sequence == seq and r.frame == frame]
            if not match:
                log.warning("frame %s not in split %s; skipped", token, args.split)
                continue
            wanted.extend(match)
    else:
        wanted = records[:args.count]
    out = Path(args.out or "overlays")
    out.mkdir(parents=True, exist_ok=True)
    written = 0
    for rec in wanted:
        try:
            image = rec.load_image()
        except OSError as exc:
            log.warning("cannot read %s: %s", rec.image_path, exc)
            continue
        prepared = PreparedSplit([rec], det.config)
        preds = predict_split(det, prepared)
        pred_uv = prepared.item(0)[3].inverse(preds.pred[0])
        scale = args.scale or max(1, 512 // image.shape[1])
        im = render_overlay(image, rec.keypoints2d, pred_uv, ds.edges, scale)
        im.save(out / f"overlay_seq{rec.sequence:04d}_frame{rec.frame:06d}.png", format="PNG")
        written += 1
    print(f"wrote {written} overlay(s) to {out}")
    return EXIT_OK if written else EXIT_RUNTIME


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spacepose", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seed", type=int, help="override every seed in the config")
    p.add_argument("--out", help="output path (dataset root, run directory or report directory)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="render a synthetic dataset")
    g.add_argument("--spec", help="JSON dataset spec (fields of DatasetSpec plus model, model_seed)")
    g.add_argument("--model", default="boxsat", help=f"satellite kind: {', '.join(KINDS)}")
    g.set_defaults(func=cmd_gen)

    for name, func, help_ in (("train", cmd_train, "train a keypoint network"),
                              ("ablate", cmd_ablate, "train with and without the graph branch and compare")):
        t = sub.add_parser(name, help=help_)
        t.add_argument("--dataset")
        t.add_argument("--epochs", type=int)
        t.add_argument("--batch-size", type=int)
        t.add_argument("--lr", type=float)
        if name == "train":
            t.add_argument("--no-gcn", action="store_true", help="drop the graph-based decoder")
            t.add_argument("--resume", help="continue from a last.npz checkpoint")
        else:
            t.add_argument("--split", default="test")
        t.set_defaults(func=func)

    evals = (("eval-kp", cmd_eval_kp, "keypoint RMSE on a split"),
             ("eval-pose", cmd_eval_pose, "PnP pose errors on a split"),
             ("overlay", cmd_overlay, "draw predicted and true keypoints on frames"))
    for name, func, help_ in evals:
        e = sub.add_parser(name, help=help_)
        e.add_argument("--dataset")
        e.add_argument("--checkpoint")
        e.add_argument("--oracle", nargs="?", const="heatmap", choices=("heatmap", "keypoints"),
                       help="replace the network by ground-truth heatmaps (default) or exact keypoints")
        e.add_argument("--input-size", type=int, help="oracle network input size")
        e.add_argument("--heatmap-size", type=int, help="oracle heatmap size")
        e.add_argument("--split", default="test")
        if name == "eval-pose":
            e.add_argument("--visible-only", action="store_true", help="solve PnP on annotated-visible keypoints only")
            e.add_argument("--weight-by-confidence", action="store_true")
            e.add_argument("--robust", action="store_true", help="RANSAC over 6-point samples")
        if name == "overlay":
            e.add_argument("--frames", help="comma list of seq:frame")
            e.add_argument("--count", type=int, default=3)
            e.add_argument("--scale", type=int, help="integer upscaling of the frame")
        e.set_defaults(func=func)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    threads = os.environ.get("SPACEPOSE_THREADS")
    if threads:
        import torch

        torch.set_num_threads(int(threads))
    try:
        return args.func(args)
    except (UsageError, ConfigError, SpecError, EmptySplitError) as exc:
        print(f"spacepose {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingDivergedError, SpacePoseError, OSError, ArithmeticError) as exc:
        print(f"spacepose {args.command}: failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
