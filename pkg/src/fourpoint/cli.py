"""``fourpoint`` command line: warp, roundtrip, synth, train, eval.

Exit codes: 0 success, 1 runtime failure, 2 usage error.  Every JSON report
carries the effective run configuration under ``"config"``.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from .config import DEFAULTS, RunConfig, load_config, parse_config_text
from .data.dataset import read_dataset, write_dataset
from .data.io import read_png, to_uint8, write_png
from .data.synth import OCCLUDERS, SynthSpec, synth_generate
from .errors import InvalidArgumentError, InvalidCheckpointError
from .geometry import BoundingBox
from .loss_metrics import ConfusionCounts, confusion_counts, f1_report
from .micronet.checkpoint import read_checkpoint, write_checkpoint
from .micronet.model import NetConfig, init_params
from .micronet.train import TrainConfig, json_logger, train
from .pipeline import augmenting_sampler, make_transform, predict_restored, smooth_noise_image, warp_dataset
from .resample import write_grid_dump

log = logging.getLogger("fourpoint")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Bad flag combination or value detected after argparse."""


def parse_box(text: str) -> BoundingBox:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"box must be x_min,y_min,x_max,y_max, got {text!r}")
    if len(vals) != 4:
        raise argparse.ArgumentTypeError(f"box needs 4 comma-separated numbers, got {len(vals)}")
    try:
        return BoundingBox(*vals)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _bool_flag(text: str) -> bool:
    t = text.lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected true/false, got {text!r}")


# (flag, config key, type, help) for every RunConfig field
_CONFIG_FLAGS = [
    ("--warp-size", "warp_size", int, "warped canvas side in pixels"),
    ("--zoom", "zoom", float, "box-to-RoI expansion factor (>= 1)"),
    ("--norm-mode", "norm_mode", str, "normalization radius: constant or elliptic"),
    ("--partition-mode", "partition_mode", str, "chart coverage: full or quadrant"),
    ("--roi-only", "roi_only", _bool_flag, "restrict charts to the RoI (true/false)"),
    ("--anchor", "anchor", str, "chart origins on the box or roi corners"),
    ("--alpha", "alpha", float, "occlusion penalty weight"),
    ("--base-lr", "base_lr", float, "initial learning rate of the poly schedule"),
    ("--epochs", "epochs", int, "training epochs"),
    ("--batch-size", "batch_size", int, "samples per step"),
    ("--max-iter", "max_iter", int, "total steps; overrides epochs when set"),
    ("--seed", "seed", int, "seed for init, batching and augmentation"),
    ("--augment", "augment", _bool_flag, "random rotation/scale during training (true/false)"),
    ("--empty-fallback", "empty_fallback", str,
     "boundary distance when only one map has boundaries: zero or diagonal"),
]


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("run configuration (flags override --config)")
    g.add_argument("--config", type=Path, help="file of key = value lines, # comments")
    for flag, key, typ, text in _CONFIG_FLAGS:
        g.add_argument(flag, dest=key, type=typ, default=None,
                       help=f"{text} (default: {getattr(DEFAULTS, key)})")


def _effective_config(args, base: dict | None = None) -> RunConfig:
    """Layering, lowest first: defaults, ``base``, the --config file, explicit flags."""
    values = dict(base or {})
    if args.config is not None:
        values.update(_file_values(args.config))
    values.update({key: getattr(args, key) for _, key, _, _ in _CONFIG_FLAGS
                   if getattr(args, key) is not None})
    return load_config(None, values)


def _file_values(path: Path) -> dict:
    try:
        text = path.read_text()
    except OSError as exc:
        raise InvalidArgumentError(f"cannot read config {path}: {exc.strerror}") from exc
    return parse_config_text(text, str(path))


def _emit(report: dict, out: Path | None) -> None:
    text = json.dumps(report, indent=2)
    if out is None:
        print(text)
    else:
        out.write_text(text + "\n")


def cmd_warp(args) -> int:
    cfg = _effective_config(args)
    img = read_png(args.input)
    t = make_transform(img.shape[:2], args.box, cfg)
    warped = t.warp(img)
    write_png(warped, args.out)
    if args.viz is not None:
        side = np.asarray(Image.fromarray(to_uint8(img)).resize(cfg.out_size[::-1], Image.BILINEAR))
        canvas = to_uint8(warped)
        if side.ndim != canvas.ndim:
            side = np.repeat(side[..., None], 3, axis=2) if side.ndim == 2 else side
            canvas = np.repeat(canvas[..., None], 3, axis=2) if canvas.ndim == 2 else canvas
        Image.fromarray(np.concatenate([side, canvas], axis=1)).save(args.viz, format="PNG")
    if args.grid_dump is not None:
        write_grid_dump(t.grid, args.grid_dump)
    _emit({"out": str(args.out), "size": list(cfg.out_size), "config": cfg.as_dict()}, args.report)
    return EXIT_OK


def cmd_roundtrip(args) -> int:
    cfg = _effective_config(args)
    if (args.input is None) == (args.random is None):
        raise UsageError("give exactly one of --in or --random")
    img = read_png(args.input) if args.input is not None else smooth_noise_image(args.random, cfg.seed)
    if args.box is None:
        raise UsageError("--box is required")
    t = make_transform(img.shape[:2], args.box, cfg)
    back = t.restore(t.warp(img))
    err = np.abs(back - img)
    if err.ndim == 3:
        err = err.mean(axis=2)
    b = args.box
    h, w = err.shape
    ys, xs = np.mgrid[0:h, 0:w]
    in_box = (xs + 0.5 > b.x_min) & (xs + 0.5 < b.x_max) & (ys + 0.5 > b.y_min) & (ys + 0.5 < b.y_max)
    mae_roi = float(err[in_box].mean()) if in_box.any() else 0.0
    report = {
        "mae_in_roi": mae_roi,
        "mae_global": float(err.mean()),
        "coverage": float(t.coverage.mean()),
        "threshold": args.threshold,
        "passed": mae_roi <= args.threshold,
        "config": cfg.as_dict(),
    }
    _emit(report, args.out)
    return EXIT_OK if report["passed"] else EXIT_FAIL


def cmd_synth(args) -> int:
    occ = {k: args.occlusion for k in OCCLUDERS}
    for item in args.occluder or ():
        kind, _, prob = item.partition("=")
        try:
            if kind not in OCCLUDERS:
                raise ValueError
            occ[kind] = float(prob)
        except ValueError:
            raise UsageError(f"--occluder expects KIND=P with KIND in {list(OCCLUDERS)}, got {item!r}") from None
    spec = SynthSpec(seed=args.seed, count=args.count, size=args.size, occlusion=occ)
    write_dataset(args.out, synth_generate(spec))
    _emit({"out": str(args.out), "count": args.count, "size": args.size, "seed": args.seed,
           "occlusion": occ}, None)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _effective_config(args)
    samples, palette = read_dataset(args.data)
    net = NetConfig(num_classes=len(palette), input_size=cfg.out_size)
    tcfg = TrainConfig(base_lr=cfg.base_lr, alpha=cfg.alpha, batch_size=cfg.batch_size, epochs=cfg.epochs,
                       max_iter=cfg.max_iter, seed=cfg.seed, empty_fallback=cfg.empty_fallback)
    images, labels = warp_dataset(samples, cfg, palette)
    sampler = augmenting_sampler(samples, cfg, palette) if cfg.augment else None
    params = init_params(net, cfg.seed)
    if args.log is None:
        history = train(params, images, labels, net, tcfg, palette, sample_fn=sampler)
    else:
        with open(args.log, "w") as fh:
            history = train(params, images, labels, net, tcfg, palette, log=json_logger(fh), sample_fn=sampler)
    write_checkpoint(args.out, params, net, extra=cfg.as_dict())
    _emit({"checkpoint": str(args.out), "steps": len(history), "final": history[-1],
           "config": cfg.as_dict()}, args.report)
    return EXIT_OK


def cmd_eval(args) -> int:
    params, net, meta = read_checkpoint(args.checkpoint, return_meta=True)
    cfg = _effective_config(args, base=meta.get("run"))
    samples, palette = read_dataset(args.data)
    if net.num_classes != len(palette):
        raise InvalidCheckpointError(
            f"{args.checkpoint}: network predicts {net.num_classes} classes, dataset palette has {len(palette)}")
    if tuple(net.input_size) != cfg.out_size:
        raise InvalidCheckpointError(
            f"{args.checkpoint}: network input {tuple(net.input_size)} differs from warp size {cfg.out_size}")
    k = len(palette)
    counts = ConfusionCounts(np.zeros(k, np.int64), np.zeros(k, np.int64), np.zeros(k, np.int64))
    if args.viz_dir is not None:
        args.viz_dir.mkdir(parents=True, exist_ok=True)
    for i, (img, lab, box) in enumerate(samples):
        pred = predict_restored(params, net, img, box, cfg)
        counts = counts + confusion_counts(pred, lab, k)
        if args.viz_dir is not None:
            Image.fromarray(palette.colorize(pred)).save(args.viz_dir / f"{i:05d}.png", format="PNG")
    report = f1_report(counts, palette)
    report.update({"samples": len(samples), "checkpoint": str(args.checkpoint), "config": cfg.as_dict()})
    _emit(report, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fourpoint", description="Four-point Tanh-polar warping and toy occlusion-aware face parsing.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("warp", help="four-point warp of one image")
    p.add_argument("--in", dest="input", type=Path, required=True, help="input PNG")
    p.add_argument("--box", type=parse_box, required=True, help="x_min,y_min,x_max,y_max")
    p.add_argument("--out", type=Path, required=True, help="warped PNG")
    p.add_argument("--viz", type=Path, help="side-by-side input/warped PNG")
    p.add_argument("--grid-dump", type=Path, help="binary FPWG sampling grid")
    p.add_argument("--report", type=Path, help="write the JSON report here instead of stdout")
    _add_config_flags(p)
    p.set_defaults(func=cmd_warp)

    p = sub.add_parser("roundtrip", help="warp then restore and measure the error")
    p.add_argument("--in", dest="input", type=Path, help="input PNG")
    p.add_argument("--random", type=int, metavar="SIZE", help="use a seeded smooth-noise SIZE x SIZE image")
    p.add_argument("--box", type=parse_box, help="x_min,y_min,x_max,y_max")
    p.add_argument("--threshold", type=float, default=2.0 / 255.0,
                   help="fail (exit 1) when the in-box MAE exceeds this (default: 2/255)")
    p.add_argument("--out", type=Path, help="JSON report path (default: stdout)")
    _add_config_flags(p)
    p.set_defaults(func=cmd_roundtrip)

    p = sub.add_parser("synth", help="generate a synthetic occluded-face dataset")
    p.add_argument("--out", type=Path, required=True, help="dataset directory")
    p.add_argument("--count", type=int, default=8, help="number of samples (default: 8)")
    p.add_argument("--size", type=int, default=64, help="image side in pixels (default: 64)")
    p.add_argument("--seed", type=int, default=0, help="generator seed (default: 0)")
    p.add_argument("--occlusion", type=float, default=0.0,
                   help="probability for every occluder type (default: 0)")
    p.add_argument("--occluder", action="append", metavar="KIND=P", help="per-type probability override")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train the toy network on a dataset")
    p.add_argument("--data", type=Path, required=True, help="dataset directory")
    p.add_argument("--out", type=Path, required=True, help="checkpoint path")
    p.add_argument("--log", type=Path, help="per-step JSON lines log")
    p.add_argument("--report", type=Path, help="write the JSON summary here instead of stdout")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="F1 report for a checkpoint on a dataset")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True, help="dataset directory")
    p.add_argument("--out", type=Path, help="JSON report path (default: stdout)")
    p.add_argument("--viz-dir", type=Path, help="directory for colorized predictions")
    _add_config_flags(p)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with status 2 on bad usage
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, InvalidArgumentError) as exc:
        parser.print_usage(sys.stderr)
        print(f"fourpoint {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, FloatingPointError) as exc:
        print(f"fourpoint {args.command}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
