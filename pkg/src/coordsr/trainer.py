"""End-to-end supervised training.

Each step draws a batch of random HR tiles at continuously sampled scales,
bicubically downsamples them to LR inputs, runs encoder + decoder, and
minimizes mean |pred - hr| + lambda * mean (pred - denoised_hr)^2 with Adam.
Training always runs the configured number of steps; early stopping is
realized as best-validation-checkpoint selection over the eval schedule.
Validation PSNR/VIF are evaluated on full validation images at the top of
the scale range and logged to a per-step curve.
"""

from __future__ import annotations

import json
import math
import shutil
import time
from collections import namedtuple
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import models
from .denoise import KINDS as DENOISER_KINDS
from .denoise import DenoiserSpec, cached_target
from .errors import ConfigurationError, NonFiniteError, UsageError
from .metrics import evaluate_images
from .mrisim import DatasetManifest, load_image
from .resample import make_lr_pair

CURVE_HEADER = "step,train_loss,val_psnr,val_vif,wall_ms"


class TrainingAborted(RuntimeError):
    """Raised when a run hits non-finite values; last good checkpoint is kept."""


@dataclass
class TrainConfig:
    model: str = "coord"
    scale_range: tuple = (1.0, 2.0)
    reg_lambda: float = 0.0
    sigma: float = 0.03
    denoiser: str = "block-dct"
    steps: int | None = None  # default: 1000 for coord, 100000 for conv
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    tile_hr: int = 48
    batch: int = 16
    seed: int = 0
    eval_every: int = 0  # 0 -> log-spaced schedule with `eval_points` points
    eval_points: int = 24
    d: int = 64
    blocks: int = 8
    mlp_layers: int = 5
    hidden: int = 256
    liif_mode: bool = False
    record_timing: bool = False

    def resolved_steps(self) -> int:
        if self.steps is not None:
            return int(self.steps)
        return 1000 if self.model == "coord" else 100000

    def conv_scale(self) -> int:
        return int(round(self.scale_range[0]))

    def validate(self) -> None:
        bad = []
        if self.model not in ("coord", "conv"):
            bad.append(f"model={self.model!r} (coord or conv)")
        try:
            s_min, s_max = float(self.scale_range[0]), float(self.scale_range[1])
            if not (1.0 <= s_min <= s_max):
                bad.append(f"scale_range={self.scale_range} (need 1 <= s_min <= s_max)")
            elif self.model == "conv":
                if s_min != s_max or s_min != int(s_min) or int(s_min) not in (2, 3, 4):
                    bad.append(
                        f"scale_range={self.scale_range} "
                        "(conv needs a fixed integer scale in {2, 3, 4})"
                    )
                elif self.tile_hr % int(s_min) != 0:
                    bad.append(f"tile_hr={self.tile_hr} (must be divisible by the conv scale)")
        except (TypeError, ValueError, IndexError):
            bad.append(f"scale_range={self.scale_range!r} (two floats)")
        if self.reg_lambda < 0:
            bad.append(f"reg_lambda={self.reg_lambda} (>= 0)")
        if self.sigma < 0:
            bad.append(f"sigma={self.sigma} (>= 0)")
        if self.denoiser not in DENOISER_KINDS:
            bad.append(f"denoiser={self.denoiser!r} (one of {DENOISER_KINDS})")
        if self.steps is not None and self.steps < 0:
            bad.append(f"steps={self.steps} (>= 0)")
        if self.lr <= 0:
            bad.append(f"lr={self.lr} (> 0)")
        if self.tile_hr < 8:
            bad.append(f"tile_hr={self.tile_hr} (>= 8)")
        if self.batch < 1:
            bad.append(f"batch={self.batch} (>= 1)")
        if self.eval_every < 0:
            bad.append(f"eval_every={self.eval_every} (>= 0)")
        if self.eval_points < 1:
            bad.append(f"eval_points={self.eval_points} (>= 1)")
        if self.d < 1 or self.blocks < 0 or self.mlp_layers < 2 or self.hidden < 1:
            bad.append(
                f"model dims d={self.d} blocks={self.blocks} "
                f"mlp_layers={self.mlp_layers} hidden={self.hidden}"
            )
        if bad:
            raise ConfigurationError("invalid training config: " + "; ".join(bad))

    def to_dict(self) -> dict:
        out = asdict(self)
        out["scale_range"] = list(self.scale_range)
        return out

    @classmethod
    def from_dict(cls, payload: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(payload) - known)
        if unknown:
            raise ConfigurationError(f"unknown config fields: {', '.join(unknown)}")
        cfg = cls(**payload)
        cfg.scale_range = tuple(float(s) for s in cfg.scale_range)
        cfg.validate()
        return cfg


@dataclass
class CurvePoint:
    step: int
    train_loss: float
    val_psnr: float
    val_vif: float
    wall_ms: int


@dataclass
class TrainResult:
    curve: list = field(default_factory=list)
    best_step: int = 0
    best_val_psnr: float = math.nan
    out_dir: Path | None = None


Sample = namedtuple("Sample", "x_lr x_hr d_hr s")


def eval_schedule(total_steps: int, every: int = 0, points: int = 24) -> list[int]:
    """Steps at which validation runs; log-spaced by default, final step always in."""
    if total_steps <= 0:
        return []
    if every > 0:
        steps = sorted(set(range(every, total_steps + 1, every)) | {total_steps})
        return steps
    raw = np.logspace(0.0, math.log10(total_steps), points)
    steps = sorted(set(int(round(v)) for v in raw) | {total_steps})
    return [s for s in steps if 1 <= s <= total_steps]


def sample_batch(train_images: list, cfg: TrainConfig, rng: np.random.Generator) -> list:
    """Draw `cfg.batch` (x_lr, x_hr, denoised_hr, s) tiles.

    Per sample: uniform image, s ~ U[scale_range], uniform valid HR offset.
    Images smaller than the tile are redrawn; 100 consecutive misses raise.
    """
    if not train_images:
        raise ConfigurationError("train split is empty")
    tile = cfg.tile_hr
    s_min, s_max = cfg.scale_range
    out = []
    misses = 0
    while len(out) < cfg.batch:
        hr_img, d_img = train_images[int(rng.integers(len(train_images)))]
        s = float(rng.uniform(s_min, s_max))
        h, w = hr_img.shape
        if h < tile or w < tile:
            misses += 1
            if misses >= 100:
                raise ConfigurationError(
                    f"tile_hr={tile} exceeds every drawn image after 100 redraws"
                )
            continue
        misses = 0
        oy = int(rng.integers(h - tile + 1))
        ox = int(rng.integers(w - tile + 1))
        hr = hr_img[oy:oy + tile, ox:ox + tile]
        den = d_img[oy:oy + tile, ox:ox + tile]
        x_lr, _ = make_lr_pair(hr, s)
        out.append(Sample(x_lr, hr, den, s))
    return out


def loss_terms(pred: ad.Tensor, x_hr: ad.Tensor, d_hr: ad.Tensor, lam: float):
    """(total, consistency, denoising) losses; means, so lambda is size-invariant."""
    if pred.shape != x_hr.shape or pred.shape != d_hr.shape:
        raise UsageError(
            f"loss: shape mismatch pred {pred.shape}, hr {x_hr.shape}, denoised {d_hr.shape}"
        )
    lc = ad.mean_(ad.abs_(ad.sub(pred, x_hr)))
    dd = ad.sub(pred, d_hr)
    ld = ad.mean_(ad.mul(dd, dd))
    total = lc if lam == 0.0 else ad.add(lc, ad.scale(ld, lam))
    return total, lc, ld


def _fmt(v: float) -> str:
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if math.isnan(v):
        return "nan"
    return f"{v:.8g}"


def _load_split(manifest: DatasetManifest, dataset_dir, split: str,
                spec: DenoiserSpec, with_denoised: bool):
    dataset_dir = Path(dataset_dir)
    out = []
    for item in manifest.split_items(split):
        img = load_image(dataset_dir / item.path)
        den = cached_target(dataset_dir, dataset_dir / item.path, spec) if with_denoised else img
        out.append((item.path, img, den))
    return out


class _Model:
    """Encoder + decoder pair built from a config (and rebuilt from checkpoints)."""

    def __init__(self, cfg: TrainConfig):
        self.kind = cfg.model
        enc_rng = np.random.default_rng([cfg.seed, 1])
        dec_rng = np.random.default_rng([cfg.seed, 2])
        self.encoder = models.Encoder(cfg.d, cfg.blocks, enc_rng)
        if self.kind == "coord":
            self.decoder = models.CoordDecoder(cfg.d, cfg.hidden, cfg.mlp_layers,
                                               cfg.liif_mode, dec_rng)
        else:
            self.decoder = models.ConvDecoder(cfg.d, cfg.conv_scale(), dec_rng)

    def params(self) -> list:
        ps = list(self.encoder.params().values())
        ps += list(self.decoder.params().values())
        return ps

    def predict_tile(self, x_lr: np.ndarray, tile: int) -> ad.Tensor:
        feat = models.encode(x_lr, self.encoder)
        if self.kind == "coord":
            return models.decode_image(feat, (tile, tile), self.decoder)
        return models.conv_decode(feat, self.decoder.scale, self.decoder)

    def infer(self, x_in: np.ndarray, target_dims) -> np.ndarray:
        return models.infer_arrays(self.kind, self.encoder, self.decoder, x_in, target_dims)

    def save(self, path, cfg: TrainConfig, step: int) -> None:
        models.save_checkpoint(path, self.kind, self.encoder, self.decoder,
                               step=step, seed=cfg.seed)


def _val_images_for(model: _Model, val_items: list) -> dict[str, np.ndarray]:
    """Ground-truth val images, cropped to a scale multiple for conv models."""
    out = {}
    for name, img, _ in val_items:
        if model.kind == "conv":
            s = model.decoder.scale
            h = (img.shape[0] // s) * s
            w = (img.shape[1] // s) * s
            img = img[:h, :w]
        out[name] = img
    return out


def train(manifest: DatasetManifest, cfg: TrainConfig, out_dir, dataset_dir) -> TrainResult:
    """Run `cfg.steps` Adam steps; write curve.csv, checkpoints, and config echo.

    Checkpoints land in <out_dir>/checkpoints/step_NNNNNN at every eval point
    (plus initialization), with the best-validation-PSNR one copied to
    checkpoints/best and the last one to checkpoints/final.
    """
    cfg.validate()
    out_dir = Path(out_dir)
    ckpt_root = out_dir / "checkpoints"
    ckpt_root.mkdir(parents=True, exist_ok=True)
    (out_dir / "resolved-config.json").write_text(
        json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n"
    )

    spec = DenoiserSpec(kind=cfg.denoiser, sigma=cfg.sigma)
    train_items = _load_split(manifest, dataset_dir, "train", spec, with_denoised=True)
    val_items = _load_split(manifest, dataset_dir, "val", spec, with_denoised=False)
    train_pairs = [(img, den) for _, img, den in train_items]

    model = _Model(cfg)
    params = model.params()
    state = ad.AdamState(params)
    batch_rng = np.random.default_rng([cfg.seed, 3])

    total_steps = cfg.resolved_steps()
    schedule = set(eval_schedule(total_steps, cfg.eval_every, cfg.eval_points))
    val_gt = _val_images_for(model, val_items)
    s_eval = cfg.scale_range[1]

    model.save(ckpt_root / "step_000000", cfg, 0)
    curve: list[CurvePoint] = []
    result = TrainResult(curve=curve, out_dir=out_dir)
    best_psnr = -math.inf
    best_step = 0
    last_good = 0
    t0 = time.monotonic()

    def write_curve():
        lines = [CURVE_HEADER]
        for p in curve:
            lines.append(
                f"{p.step},{_fmt(p.train_loss)},{_fmt(p.val_psnr)},{_fmt(p.val_vif)},{p.wall_ms}"
            )
        (out_dir / "curve.csv").write_text("\n".join(lines) + "\n")

    def finish(final_step: int):
        write_curve()
        final_src = ckpt_root / f"step_{final_step:06d}"
        if final_src.exists():
            _copy_checkpoint(final_src, ckpt_root / "final")
        best_src = ckpt_root / f"step_{best_step:06d}"
        if best_src.exists():
            _copy_checkpoint(best_src, ckpt_root / "best")
        summary = {
            "steps": final_step,
            "best_step": best_step,
            "best_val_psnr": None if math.isinf(best_psnr) and best_psnr < 0 else best_psnr,
        }
        (out_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")

    for step in range(1, total_steps + 1):
        samples = sample_batch(train_pairs, cfg, batch_rng)
        try:
            with ad.Tape() as tape:
                preds = []
                for smp in samples:
                    pred = model.predict_tile(smp.x_lr, cfg.tile_hr)
                    preds.append(ad.reshape(pred, (pred.size,)))
                pred_cat = ad.concat(preds)
                hr_cat = ad.Tensor(np.concatenate([s.x_hr.reshape(-1) for s in samples]))
                den_cat = ad.Tensor(np.concatenate([s.d_hr.reshape(-1) for s in samples]))
                total, lc, ld = loss_terms(pred_cat, hr_cat, den_cat, cfg.reg_lambda)
            loss_val = total.item()
            if not math.isfinite(loss_val):
                raise NonFiniteError(f"loss diverged at step {step}")
            tape.backward(total)
            ad.adam_step(params, [p.grad for p in params], state,
                         cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
        except NonFiniteError as err:
            finish(last_good)
            raise TrainingAborted(
                f"{err}; last good checkpoint is step {last_good}"
            ) from err

        if step in schedule:
            if val_gt:
                rep = evaluate_images(model.infer, val_gt, s_eval)
                vp, vv = rep.mean_psnr(), rep.mean_vif()
            else:
                vp, vv = math.nan, math.nan
            wall = int((time.monotonic() - t0) * 1000) if cfg.record_timing else 0
            curve.append(CurvePoint(step, loss_val, vp, vv, wall))
            model.save(ckpt_root / f"step_{step:06d}", cfg, step)
            last_good = step
            if vp > best_psnr:
                best_psnr = vp
                best_step = step

    result.best_step = best_step
    result.best_val_psnr = best_psnr if math.isfinite(best_psnr) else math.nan
    finish(total_steps if total_steps > 0 else 0)
    return result


def _copy_checkpoint(src: Path, dst: Path) -> None:
    if dst.exists():
        shutil.rmtree(dst)
    shutil.copytree(src, dst)


def infer(checkpoint_path, x_in, target_dims) -> np.ndarray:
    """Load a checkpoint directory and run full-image inference."""
    kind, encoder, decoder, _ = models.load_checkpoint(checkpoint_path)
    return models.infer_arrays(kind, encoder, decoder, x_in, target_dims)
