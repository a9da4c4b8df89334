"""Cyclic pseudo-mask updates driven by an external predictor.

A trained segmentation model usually beats its own supervision, so the
loop lets predictions replace the training masks: each call evaluates
the round's model on a validation set, and, on strict improvement over
the best historical score, regenerates the training masks from the
model's own predictions.

The predictor is an external contract, not a model object: anything
with ``run(images_dir, out_dir)`` that leaves one indexed PNG per
input stem.  :class:`CommandPredictor` adapts an executable invoked as
``<cmd> --images <dir> --out <dir>``.

Mask swaps are atomic: predictions land in a staging directory that is
renamed into place only after the output contract is verified, so a
crashed or incomplete cycle leaves the previous round's masks intact.
A refused update ends the loop (drivers should not call again), which
keeps history rounds consecutive.
"""

from __future__ import annotations

import json
import os
import subprocess
from dataclasses import dataclass, field, replace
from pathlib import Path

from .evaluation import evaluate_directories
from .exceptions import PredictorError, ValidationError

__all__ = [
    "CycleState",
    "CommandPredictor",
    "should_update",
    "run_cycle",
    "save_state",
    "load_state",
    "IMAGE_SUFFIXES",
]

IMAGE_SUFFIXES = (".png", ".ppm")


@dataclass(frozen=True)
class CycleState:
    """Where the loop stands: current masks, swap count, and val scores."""

    mask_dir: str
    round: int = 0
    history: tuple = field(default_factory=tuple)  # (round, val_miou) pairs


class CommandPredictor:
    """External executable predictor.

    Runs ``argv + [--images <dir>, --out <dir>]``; a nonzero exit code
    is a broken contract.
    """

    def __init__(self, argv):
        self.argv = [str(a) for a in argv]
        if not self.argv:
            raise ValidationError("predictor command is empty")

    def run(self, images_dir, out_dir) -> None:
        cmd = [*self.argv, "--images", str(images_dir), "--out", str(out_dir)]
        proc = subprocess.run(cmd)
        if proc.returncode != 0:
            raise PredictorError(
                f"predictor exited with {proc.returncode}: {' '.join(cmd)}"
            )


def should_update(history_mious, new_miou: float, eps: float = 0.0) -> bool:
    """Strict improvement over the best historical validation score."""
    prev = [m for m in history_mious if m is not None]
    if not prev:
        return True
    return new_miou > max(prev) + eps


def _image_stems(images_dir: Path) -> list[str]:
    stems = sorted(p.stem for p in images_dir.iterdir()
                   if p.suffix.lower() in IMAGE_SUFFIXES)
    if not stems:
        raise ValidationError(f"no images in {images_dir}")
    return stems


def _check_outputs(out_dir: Path, stems) -> None:
    missing = [s for s in stems if not (out_dir / f"{s}.png").exists()]
    if missing:
        raise PredictorError(
            f"predictor left no mask for stems {missing[:10]}"
            + ("..." if len(missing) > 10 else "")
        )


def run_cycle(
    state: CycleState,
    predictor,
    train_images,
    val_images,
    val_gt=None,
    *,
    workdir,
    num_classes: int = 21,
    eps: float = 0.0,
    max_rounds: int = 2,
    force_update: bool = False,
) -> tuple[CycleState, dict]:
    """One evaluate-and-maybe-swap step.

    Evaluates the current round's model on the validation images; if
    the score strictly beats everything in history (or ``force_update``
    is set, the escape hatch for runs without validation ground truth) and
    the swap budget ``max_rounds`` is not exhausted, the predictor is
    run on the training images and its outputs become the current
    masks.  Returns the new state and the manifest that was written to
    ``workdir/manifest.json``.
    """
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    train_images, val_images = Path(train_images), Path(val_images)

    val_pred_dir = workdir / f"val_preds_r{state.round}"
    val_pred_dir.mkdir(exist_ok=True)
    predictor.run(val_images, val_pred_dir)
    _check_outputs(val_pred_dir, _image_stems(val_images))

    if val_gt is None:
        if not force_update:
            raise ValidationError(
                "no validation ground truth: pass force_update to swap anyway"
            )
        val_miou = None
    else:
        val_miou, _, _ = evaluate_directories(val_pred_dir, val_gt, num_classes)

    improved = force_update or (
        val_miou is not None
        and should_update([m for _, m in state.history], val_miou, eps)
    )
    updated = improved and state.round < max_rounds
    history = state.history + ((state.round, val_miou),)

    if updated:
        final = workdir / f"masks_r{state.round + 1}"
        if final.exists():
            raise ValidationError(f"{final} already exists; refusing to overwrite")
        staging = workdir / f"masks_r{state.round + 1}.staging"
        staging.mkdir(exist_ok=True)
        train_stems = _image_stems(train_images)
        predictor.run(train_images, staging)
        _check_outputs(staging, train_stems)
        os.replace(staging, final)
        new_state = CycleState(mask_dir=str(final), round=state.round + 1,
                               history=history)
    else:
        new_state = replace(state, history=history)

    manifest = {
        "round": state.round,
        "val_miou": val_miou,
        "updated": updated,
        "pus_enabled": new_state.round == 0,
        "mask_dir": new_state.mask_dir,
    }
    (workdir / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return new_state, manifest


def save_state(state: CycleState, path) -> None:
    payload = {"mask_dir": state.mask_dir, "round": state.round,
               "history": [list(h) for h in state.history]}
    Path(path).write_text(json.dumps(payload, indent=2))


def load_state(path) -> CycleState:
    payload = json.loads(Path(path).read_text())
    return CycleState(
        mask_dir=payload["mask_dir"],
        round=int(payload["round"]),
        history=tuple((int(r), m) for r, m in payload["history"]),
    )
