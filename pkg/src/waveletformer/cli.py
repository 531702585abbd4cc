"""``wfnet``: synthesize data, train, infer, evaluate and self-verify.

Exit status is 0 on success, 1 when a command fails at run time and 2 for
invalid arguments, configuration or inputs.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .checkpoint import CheckpointError, load_checkpoint
from .config import ConfigError, RunConfig, load_config
from .data import DEPTH_KINDS, ImageFormatError, load_image, load_pairs, save_image, write_synthetic_set
from .metrics import MetricsReport
from .network import ABLATIONS, build
from .optim import TrainingError, fit, pair_progress
from .tensor import no_grad
from .verify import EXTRA_SUITES, SUITES, run_suite


class UsageError(Exception):
    """Bad user input; reported with exit status 2."""


def _parse_size(text: str) -> tuple[int, int]:
    try:
        h, w = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise UsageError(f"size must look like HxW, got {text!r}") from None
    if h < 2 or w < 2 or h % 2 or w % 2:
        raise UsageError(f"size {h}x{w} is invalid: both extents must be even and at least 2")
    return h, w


def _parse_range(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in text.split(".."))
    except ValueError:
        raise UsageError(f"range must look like a..b, got {text!r}") from None
    if lo < 0 or hi < lo:
        raise UsageError(f"invalid range {lo}..{hi}: need 0 <= a <= b")
    return lo, hi


def cmd_synth(args) -> int:
    h, w = _parse_size(args.size)
    lo, hi = _parse_range(args.beta_range)
    if args.count < 1:
        raise UsageError("--count must be positive")
    manifest = write_synthetic_set(args.out, args.count, h, w, args.depth, (lo, hi), args.seed)
    print(f"wrote {len(manifest)} pairs to {args.out}")
    return 0


def _run_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.ablate:
        cfg = cfg.apply_ablation(args.ablate)
    cfg.data = str(args.data)
    cfg.out = str(args.out)
    cfg.validate()
    return cfg


def cmd_train(args) -> int:
    cfg = _run_config(args)
    pairs = load_pairs(cfg.data)
    for p in pairs:
        if min(p.hazy.shape[1:]) < cfg.crop:
            raise UsageError(f"pair {p.id} ({p.hazy.shape[1]}x{p.hazy.shape[2]}) is smaller than crop {cfg.crop}")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "FAILED").unlink(missing_ok=True)
    cfg.write(out / "config.resolved")
    model = build(cfg.network(), cfg.init_seed)
    try:
        state = fit(model, pairs, cfg.train_config())
    except (TrainingError, KeyboardInterrupt) as exc:
        (out / "FAILED").write_text(f"{exc}\n")
        raise
    print(f"trained {state.step} steps")
    for pid, (first, last) in sorted(pair_progress(state.history).items()):
        print(f"  pair {pid}: psnr {first:.2f} -> {last:.2f} dB")
    print(f"outputs in {out}")
    return 0


def cmd_infer(args) -> int:
    model = load_checkpoint(args.ckpt)
    img = load_image(args.input)
    try:
        model.cfg.check_extents(*img.shape[1:])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    with no_grad():
        out = model(img[None].astype(model.cfg.dtype)).data[0]
    save_image(np.clip(out, 0.0, 1.0), args.output)
    return 0


_IMAGE_SUFFIXES = (".ppm", ".png")


def _ids(directory: Path) -> dict[str, Path]:
    files = sorted(p for p in directory.iterdir() if p.suffix.lower() in _IMAGE_SUFFIXES)
    gts = [p for p in files if p.stem.endswith("_gt")]
    chosen = gts or [p for p in files if not p.stem.endswith("_hazy")]
    return {(p.stem[:-3] if p.stem.endswith("_gt") else p.stem): p for p in chosen}


def _find_pred(pred_dir: Path, pid: str, gt_path: Path) -> Path:
    names = [pid + s for s in _IMAGE_SUFFIXES] + [f"{pid}_pred{s}" for s in _IMAGE_SUFFIXES] + [gt_path.name]
    for name in names:
        if (pred_dir / name).exists():
            return pred_dir / name
    raise UsageError(f"no prediction for {pid!r} in {pred_dir} (tried {', '.join(names)})")


def cmd_eval(args) -> int:
    pred_dir, gt_dir = Path(args.pred), Path(args.gt)
    for d in (pred_dir, gt_dir):
        if not d.is_dir():
            raise UsageError(f"{d} is not a directory")
    gts = _ids(gt_dir)
    if not gts:
        raise UsageError(f"no ground-truth images in {gt_dir}")
    report = MetricsReport()
    for pid, gt_path in gts.items():
        pred = load_image(_find_pred(pred_dir, pid, gt_path))
        gt = load_image(gt_path)
        if pred.shape != gt.shape:
            raise UsageError(f"{pid}: prediction {pred.shape} and ground truth {gt.shape} differ in shape")
        report.add(pid, pred, gt)
    report.write(args.report)
    print(report.lines()[-1])
    return 0


def cmd_verify(args) -> int:
    checks = run_suite(args.suite)
    for c in checks:
        print(c.line())
    failed = [c for c in checks if not c.passed]
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wfnet", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write synthetic hazy/clean pairs")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=4)
    p.add_argument("--size", default="64x64", help="HxW, both even")
    p.add_argument("--depth", default="blocks", choices=DEPTH_KINDS)
    p.add_argument("--beta-range", default="0.5..1.5", help="a..b")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train on a directory of pairs")
    p.add_argument("--config", help="key = value run configuration")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--ablate", choices=[k for k in ABLATIONS if k != "full"])
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="dehaze one image with a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="score predictions against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("verify", help="run numerical self-checks")
    p.add_argument("--suite", default="all", choices=SUITES + EXTRA_SUITES + ("all",))
    p.set_defaults(func=cmd_verify)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError, ImageFormatError, FileNotFoundError) as exc:
        print(f"wfnet {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (CheckpointError, TrainingError, ValueError, OSError) as exc:
        print(f"wfnet {args.command}: failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
