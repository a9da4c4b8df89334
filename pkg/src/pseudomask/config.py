"""TOML run configuration.

Sections and keys form the stable wire format:

    [crf]        iterations, w1, theta_alpha, theta_beta, w2,
                 theta_gamma, unary_eps
    [gen]        alpha, fg_threshold, tie_break
    [gen.cvs]    t, s, exponent_floor
    [gen.crf]    same keys as [crf]; overrides it for mask generation
    [pus]        mode, beta, kappa
    [multicrop]  scales, crop_size, stride, fg_cover_frac, crop_area_frac
    [cycle]      eps, max_rounds, num_classes
    [paths]      cams, images, masks, out

Unknown sections or keys are rejected, and every default mirrors the
library defaults, so an empty file is a valid configuration.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .crf import DenseCrf
from .exceptions import FormatError, ValidationError
from .masks import BaselineMaskGenerator, ProportionalMaskGenerator
from .multicrop import CropSpec
from .pus import PretendedUnderfitLoss

__all__ = ["RunConfig", "load_config", "dumps_config"]

_CRF_KEYS = ("iterations", "w1", "theta_alpha", "theta_beta", "w2",
             "theta_gamma", "unary_eps")
_SCHEMA = {
    "crf": {k: None for k in _CRF_KEYS},
    "gen": {
        "alpha": None, "fg_threshold": None, "tie_break": None,
        "cvs": {"t": None, "s": None, "exponent_floor": None},
        "crf": {k: None for k in _CRF_KEYS},
    },
    "pus": {"mode": None, "beta": None, "kappa": None},
    "multicrop": {"scales": None, "crop_size": None, "stride": None,
                  "fg_cover_frac": None, "crop_area_frac": None},
    "cycle": {"eps": None, "max_rounds": None, "num_classes": None},
    "paths": {"cams": None, "images": None, "masks": None, "out": None},
}


@dataclass
class RunConfig:
    """Materialized configuration: estimators plus plain option groups."""

    crf: DenseCrf = field(default_factory=DenseCrf)
    gen_crf: DenseCrf | None = None  # None -> use `crf` for generation too
    alpha: float = 11.0
    fg_threshold: float = 0.05
    tie_break: str = "lowest-class-id"
    cvs_t: float = 0.05
    cvs_s: float = 0.3
    cvs_exponent_floor: float = 0.05
    pus: PretendedUnderfitLoss = field(default_factory=PretendedUnderfitLoss)
    crop_spec: CropSpec = field(default_factory=CropSpec)
    cycle_eps: float = 0.0
    cycle_max_rounds: int = 2
    num_classes: int = 21
    paths: dict = field(default_factory=dict)

    def generation_crf(self, strict: bool = False) -> DenseCrf:
        base = self.gen_crf if self.gen_crf is not None else self.crf
        return DenseCrf(**{**base.get_params(), "strict": strict})

    def baseline_generator(self, strict_crf: bool = False) -> BaselineMaskGenerator:
        return BaselineMaskGenerator(alpha=self.alpha,
                                     crf=self.generation_crf(strict_crf))

    def ppmg_generator(self, strict_crf: bool = False) -> ProportionalMaskGenerator:
        return ProportionalMaskGenerator(
            alpha=self.alpha, fg_threshold=self.fg_threshold,
            cvs_threshold=self.cvs_t, cvs_scale=self.cvs_s,
            cvs_exponent_floor=self.cvs_exponent_floor,
            crf=self.generation_crf(strict_crf), tie_break=self.tie_break,
        )


def _reject_unknown(data: dict, tree: dict = _SCHEMA, prefix: str = "") -> None:
    for key, value in data.items():
        where = f"{prefix}{key}"
        if key not in tree:
            raise ValidationError(f"unknown configuration key {where!r}")
        sub = tree[key]
        if isinstance(value, dict):
            if not isinstance(sub, dict):
                raise ValidationError(f"configuration key {where!r} is not a table")
            _reject_unknown(value, sub, where + ".")
        elif isinstance(sub, dict):
            raise ValidationError(f"configuration key {where!r} must be a table")


def _crf_from(table: dict, base: DenseCrf | None = None) -> DenseCrf:
    params = (base.get_params() if base is not None else DenseCrf().get_params())
    params.pop("strict", None)
    for key in _CRF_KEYS:
        if key in table:
            params[key] = table[key]
    return DenseCrf(**params)


def load_config(path=None) -> RunConfig:
    """Parse a TOML file into a RunConfig; None means all defaults."""
    if path is None:
        return RunConfig()
    try:
        with open(Path(path), "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise FormatError(f"{path} is not valid TOML: {exc}") from exc
    _reject_unknown(data)

    cfg = RunConfig()
    if "crf" in data:
        cfg.crf = _crf_from(data["crf"])
    gen = data.get("gen", {})
    cfg.alpha = float(gen.get("alpha", cfg.alpha))
    cfg.fg_threshold = float(gen.get("fg_threshold", cfg.fg_threshold))
    cfg.tie_break = gen.get("tie_break", cfg.tie_break)
    cvs = gen.get("cvs", {})
    cfg.cvs_t = float(cvs.get("t", cfg.cvs_t))
    cfg.cvs_s = float(cvs.get("s", cfg.cvs_s))
    cfg.cvs_exponent_floor = float(cvs.get("exponent_floor",
                                           cfg.cvs_exponent_floor))
    if "crf" in gen:
        cfg.gen_crf = _crf_from(gen["crf"], cfg.crf)
    pus = data.get("pus", {})
    cfg.pus = PretendedUnderfitLoss(
        mode=pus.get("mode", "clamp"),
        beta=float(pus.get("beta", 0.5)),
        kappa=float(pus.get("kappa", 0.5)),
    ).fit()
    mc = data.get("multicrop", {})
    defaults = CropSpec()
    cfg.crop_spec = CropSpec(
        scales=tuple(mc.get("scales", defaults.scales)),
        crop_size=int(mc.get("crop_size", defaults.crop_size)),
        stride=int(mc.get("stride", defaults.stride)),
        fg_cover_frac=float(mc.get("fg_cover_frac", defaults.fg_cover_frac)),
        crop_area_frac=float(mc.get("crop_area_frac", defaults.crop_area_frac)),
    )
    cyc = data.get("cycle", {})
    cfg.cycle_eps = float(cyc.get("eps", cfg.cycle_eps))
    cfg.cycle_max_rounds = int(cyc.get("max_rounds", cfg.cycle_max_rounds))
    cfg.num_classes = int(cyc.get("num_classes", cfg.num_classes))
    cfg.paths = {k: str(v) for k, v in data.get("paths", {}).items()}
    return cfg


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise ValidationError(f"cannot serialize {type(v).__name__} to TOML")


def _emit(section: str, table: dict) -> str:
    lines = [f"[{section}]"]
    lines += [f"{k} = {_toml_value(v)}" for k, v in table.items()]
    return "\n".join(lines) + "\n"


def dumps_config(cfg: RunConfig) -> str:
    """Serialize a RunConfig back to its TOML wire format."""
    crf_params = {k: v for k, v in cfg.crf.get_params().items() if k != "strict"}
    out = [_emit("crf", crf_params)]
    out.append(_emit("gen", {"alpha": cfg.alpha, "fg_threshold": cfg.fg_threshold,
                             "tie_break": cfg.tie_break}))
    out.append(_emit("gen.cvs", {"t": cfg.cvs_t, "s": cfg.cvs_s,
                                 "exponent_floor": cfg.cvs_exponent_floor}))
    if cfg.gen_crf is not None:
        gen_crf = {k: v for k, v in cfg.gen_crf.get_params().items()
                   if k != "strict"}
        out.append(_emit("gen.crf", gen_crf))
    out.append(_emit("pus", {"mode": cfg.pus.mode, "beta": cfg.pus.beta,
                             "kappa": cfg.pus.kappa}))
    out.append(_emit("multicrop", {
        "scales": list(cfg.crop_spec.scales),
        "crop_size": cfg.crop_spec.crop_size,
        "stride": cfg.crop_spec.stride,
        "fg_cover_frac": cfg.crop_spec.fg_cover_frac,
        "crop_area_frac": cfg.crop_spec.crop_area_frac,
    }))
    out.append(_emit("cycle", {"eps": cfg.cycle_eps,
                               "max_rounds": cfg.cycle_max_rounds,
                               "num_classes": cfg.num_classes}))
    if cfg.paths:
        out.append(_emit("paths", cfg.paths))
    return "\n".join(out)
