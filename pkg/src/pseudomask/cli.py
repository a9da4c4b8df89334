"""Batch command-line frontend.

Subcommands: gen, eval, multicrop, pus, cycle, crf-bench.  Directories
are joined by file stem (name without extension).  All reports are
JSON/JSONL so downstream tooling in any ecosystem can parse them.

Exit codes: 0 = all inputs processed; 2 = bad inputs or a broken
contract (missing pairs, malformed files, failed predictor).
"""

from __future__ import annotations

import argparse
import json
import os
import shlex
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .config import load_config
from .crf import mean_field_exact, mean_field_fast
from .cycle import CommandPredictor, CycleState, load_state, run_cycle, save_state
from .evaluation import evaluate_directories
from .exceptions import PseudomaskError
from .io import decode_mask_png, encode_mask_png, load_cam_tensor, load_image
from .multicrop import CropProposal, generate_crops, label_crop, \
    resize_mask_nearest, resized_dims, sample_crops
from .pus import PUS_MODES, PretendedUnderfitLoss, pus_loss
from .validation import check_loss_map

__all__ = ["main"]


def _write_report(payload: dict, out: str | None) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def _atomic_mask_write(labels: np.ndarray, path: Path) -> None:
    tmp = path.with_name(path.name + ".tmp")
    encode_mask_png(labels, tmp)
    os.replace(tmp, path)


def cmd_gen(args, cfg) -> int:
    cam_dir, image_dir = Path(args.cams), Path(args.images)
    out_dir = Path(args.out)
    cam_paths = {p.stem: p for p in sorted(cam_dir.glob("*.npy"))}
    image_paths = {}
    for ext in ("*.png", "*.ppm"):
        for p in sorted(image_dir.glob(ext)):
            image_paths.setdefault(p.stem, p)
    if not cam_paths:
        print(f"no inputs: no CAM tensors in {cam_dir}", file=sys.stderr)
        return 2
    missing = sorted(set(cam_paths) ^ set(image_paths))
    if missing:
        print(f"unpaired stems (CAM without image or image without CAM): "
              f"{missing}", file=sys.stderr)
        return 2

    out_dir.mkdir(parents=True, exist_ok=True)
    if args.mode == "ppmg":
        generator = cfg.ppmg_generator(strict_crf=args.strict_crf)
    else:
        generator = cfg.baseline_generator(strict_crf=args.strict_crf)

    stems = sorted(cam_paths)

    def work(stem: str) -> dict:
        cam = load_cam_tensor(cam_paths[stem])
        image = load_image(image_paths[stem])
        labels = generator.predict(cam, image)
        _atomic_mask_write(labels, out_dir / f"{stem}.png")
        values, counts = np.unique(labels, return_counts=True)
        return {"stem": stem,
                "pixels": {int(v): int(c) for v, c in zip(values, counts)}}

    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as ex:
        records = list(ex.map(work, stems))

    per_class: dict[int, int] = {}
    for rec in records:
        for label, count in rec["pixels"].items():
            per_class[label] = per_class.get(label, 0) + count
    summary = {
        "mode": args.mode,
        "num_images": len(records),
        "images": {r["stem"]: {"pixels": {str(k): v for k, v in r["pixels"].items()},
                               "labels": sorted(r["pixels"])}
                   for r in records},
        "per_class_pixels": {str(k): per_class[k] for k in sorted(per_class)},
    }
    summary_path = Path(args.summary) if args.summary else out_dir / "summary.json"
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return 0


def cmd_eval(args, cfg) -> int:
    score, ious, n = evaluate_directories(args.pred, args.gt,
                                          args.num_classes or cfg.num_classes)
    payload = {
        "miou": score,
        "num_images": n,
        "per_class_iou": {str(i): (None if np.isnan(v) else float(v))
                          for i, v in enumerate(ious)},
    }
    _write_report(payload, args.out)
    return 0


def cmd_multicrop(args, cfg) -> int:
    if args.image:
        dims = load_image(args.image).shape[:2]
    elif args.height and args.width:
        dims = (args.height, args.width)
    else:
        print("multicrop needs --image or both --height and --width",
              file=sys.stderr)
        return 2
    spec = cfg.crop_spec
    proposals = generate_crops(dims, spec)
    if args.base_mask:
        base = decode_mask_png(args.base_mask)
        resized = {s: resize_mask_nearest(base, *resized_dims(dims, s))
                   for s in spec.scales}
        proposals = [
            CropProposal(p.scale, p.window,
                         frozenset(label_crop(p, resized[p.scale], spec)))
            for p in proposals
        ]
    if args.sample is not None:
        proposals = sample_crops(proposals, args.sample, args.seed)
    lines = [json.dumps({"scale": p.scale, "window": list(p.window),
                         "labels": sorted(p.labels)})
             for p in proposals]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def _stats(values: np.ndarray, mask: np.ndarray) -> dict:
    vals = values[mask]
    return {"mean": float(vals.mean()), "min": float(vals.min()),
            "max": float(vals.max()), "valid_pixels": int(mask.sum())}


def cmd_pus(args, cfg) -> int:
    values = np.load(args.loss, allow_pickle=False)
    valid = None
    if args.valid_mask:
        valid = np.load(args.valid_mask, allow_pickle=False).astype(bool)
    elif args.labels:
        valid = decode_mask_png(args.labels) != 255
    values, mask = check_loss_map(values, valid)
    mode = args.mode or cfg.pus.mode
    beta = cfg.pus.beta if args.beta is None else args.beta
    kappa = cfg.pus.kappa if args.kappa is None else args.kappa
    loss = pus_loss(values, mode=mode, beta=beta, kappa=kappa, valid_mask=mask)
    plain = float(values[mask].mean())
    gate_fired = mode != "none" and plain < beta
    if gate_fired:
        reducer = PretendedUnderfitLoss(mode=mode, beta=beta, kappa=kappa)
        after_map = reducer.transform_map(values, mask)
    else:
        after_map = values
    payload = {
        "mode": mode, "beta": beta, "kappa": kappa,
        "gate_fired": gate_fired,
        "before": _stats(values, mask),
        "after": _stats(after_map, mask),
        "loss": loss,
    }
    _write_report(payload, args.out)
    return 0


def cmd_cycle(args, cfg) -> int:
    workdir = Path(args.workdir)
    state_path = workdir / "state.json"
    if state_path.exists():
        state = load_state(state_path)
    else:
        if not args.masks:
            print("first cycle call needs --masks (initial pseudo-mask dir)",
                  file=sys.stderr)
            return 2
        state = CycleState(mask_dir=str(args.masks))
    predictor = CommandPredictor(shlex.split(args.predictor))
    state, manifest = run_cycle(
        state, predictor, args.train_images, args.val_images, args.val_gt,
        workdir=workdir,
        num_classes=args.num_classes or cfg.num_classes,
        eps=args.eps if args.eps is not None else cfg.cycle_eps,
        max_rounds=(args.max_rounds if args.max_rounds is not None
                    else cfg.cycle_max_rounds),
        force_update=args.force_update,
    )
    save_state(state, state_path)
    _write_report(manifest, args.out)
    return 0


def cmd_crf_bench(args, cfg) -> int:
    size, k = args.size, args.labels
    if size * size > 4096:
        print(f"exact backend is guarded to 4096 pixels; --size {size} "
              f"gives {size * size}", file=sys.stderr)
        return 2
    rng = np.random.default_rng(args.seed)
    image = rng.integers(0, 256, (size, size, 3), dtype=np.uint8)
    probs = rng.uniform(0.05, 1.0, (k, size, size))
    probs /= probs.sum(axis=0)
    params = cfg.crf.get_params()
    params.pop("strict", None)
    if args.iterations is not None:
        params["iterations"] = args.iterations

    t0 = time.perf_counter()
    q_exact = mean_field_exact(probs, image, **params)
    exact_s = time.perf_counter() - t0
    t0 = time.perf_counter()
    q_fast = mean_field_fast(probs, image, **params)
    fast_s = time.perf_counter() - t0

    payload = {
        "size": size, "labels": k, "iterations": params["iterations"],
        "exact_seconds": exact_s, "fast_seconds": fast_s,
        "speedup": exact_s / fast_s if fast_s > 0 else float("inf"),
        "max_abs_diff": float(np.abs(q_exact - q_fast).max()),
        "argmax_agreement": float(
            (q_exact.argmax(0) == q_fast.argmax(0)).mean()),
    }
    _write_report(payload, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pmask",
        description="CAM-to-pseudo-mask generation and utilization toolkit.",
    )
    parser.add_argument("--config", help="TOML configuration file")
    parser.add_argument("--jobs", type=int, default=1,
                        help="parallel workers for per-image work")
    parser.add_argument("--seed", type=int, default=0,
                        help="seed for every random choice (crop sampling, bench)")
    parser.add_argument("--strict-crf", action="store_true",
                        help="use the exact CRF backend where the size guard allows")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate pseudo-masks for a dataset directory")
    p.add_argument("--cams", required=True, help="directory of <stem>.npy + <stem>.json")
    p.add_argument("--images", required=True, help="directory of <stem>.png/.ppm")
    p.add_argument("--out", required=True, help="output mask directory")
    p.add_argument("--mode", choices=("baseline", "ppmg"), default="ppmg")
    p.add_argument("--summary", help="summary JSON path (default <out>/summary.json)")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("eval", help="mIoU of prediction PNGs vs ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--num-classes", type=int)
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("multicrop", help="emit crop proposals as JSON lines")
    p.add_argument("--image", help="take dimensions from this image")
    p.add_argument("--height", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--base-mask", help="label crops from this base mask PNG")
    p.add_argument("--sample", type=int, help="emit a seeded sample of N proposals")
    p.add_argument("--out")
    p.set_defaults(func=cmd_multicrop)

    p = sub.add_parser("pus", help="apply the under-fitting transform to a loss map")
    p.add_argument("--loss", required=True, help="NPY file of per-pixel losses")
    p.add_argument("--valid-mask", help="NPY boolean validity mask")
    p.add_argument("--labels", help="mask PNG; 255 pixels are invalid")
    p.add_argument("--mode", choices=PUS_MODES)
    p.add_argument("--beta", type=float)
    p.add_argument("--kappa", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_pus)

    p = sub.add_parser("cycle", help="one cyclic pseudo-mask update step")
    p.add_argument("--workdir", required=True)
    p.add_argument("--masks", help="initial pseudo-mask directory (first call)")
    p.add_argument("--predictor", required=True,
                   help="command invoked as <cmd> --images DIR --out DIR")
    p.add_argument("--train-images", required=True)
    p.add_argument("--val-images", required=True)
    p.add_argument("--val-gt", help="validation ground-truth masks")
    p.add_argument("--force-update", action="store_true",
                   help="swap masks without a validation score")
    p.add_argument("--max-rounds", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--num-classes", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_cycle)

    p = sub.add_parser("crf-bench", help="time the exact vs fast CRF backends")
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--labels", type=int, default=3)
    p.add_argument("--iterations", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_crf_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except PseudomaskError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
