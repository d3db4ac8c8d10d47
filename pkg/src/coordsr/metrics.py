"""Quantitative image quality: PSNR and pixel-domain VIF.

VIF here is the pixel-domain variant with pinned parameters so results are
reproducible bit for bit: 4 scales on progressively 2x-downsampled pairs,
Gaussian windows of size 2^k + 1 and std 2^(k-1) * 0.5 at scale k, noise
floor sigma_n^2 = 2 in 0-255 intensity units (inputs on [0, 1] are scaled
by 255 internally). The score is the ratio of summed distorted-channel to
reference-channel information and equals 1 when the images are identical.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import DomainError, UsageError
from .resample import bicubic_resize, make_lr_pair

VIF_SCALES = 4
VIF_SIGMA_N_SQ = 2.0
_EPS = 1e-10


def psnr(distorted, reference, peak: float = 1.0) -> float:
    """10 * log10(peak^2 / MSE) in dB; +inf for identical images."""
    a = np.asarray(distorted, dtype=np.float64)
    b = np.asarray(reference, dtype=np.float64)
    if a.shape != b.shape:
        raise UsageError(f"psnr: shape mismatch {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def _gauss_window(k: int) -> np.ndarray:
    size = 2**k + 1
    std = 2 ** (k - 1) * 0.5
    half = size // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-(x**2) / (2 * std * std))
    win = np.outer(g, g)
    return win / win.sum()


def _filter(img: np.ndarray, win: np.ndarray) -> np.ndarray:
    # edge-replicate padding keeps all 4 scales defined down to 4x4 images
    return ndimage.correlate(img, win, mode="nearest")


def vif(distorted, reference) -> float:
    """Pixel-domain visual information fidelity of `distorted` vs `reference`."""
    dist = np.asarray(distorted, dtype=np.float64) * 255.0
    ref = np.asarray(reference, dtype=np.float64) * 255.0
    if dist.shape != ref.shape:
        raise UsageError(f"vif: shape mismatch {dist.shape} vs {ref.shape}")
    if min(ref.shape) < 32:
        raise DomainError(f"vif needs dims >= 32 for {VIF_SCALES} scales, got {ref.shape}")

    num = 0.0
    den = 0.0
    for k in range(1, VIF_SCALES + 1):
        win = _gauss_window(k)
        if k > 1:
            ref = _filter(ref, win)[::2, ::2]
            dist = _filter(dist, win)[::2, ::2]
        mu1 = _filter(ref, win)
        mu2 = _filter(dist, win)
        sigma1_sq = np.maximum(_filter(ref * ref, win) - mu1 * mu1, 0.0)
        sigma2_sq = np.maximum(_filter(dist * dist, win) - mu2 * mu2, 0.0)
        sigma12 = _filter(ref * dist, win) - mu1 * mu2

        g = sigma12 / (sigma1_sq + _EPS)
        sv_sq = sigma2_sq - g * sigma12

        g = np.where(sigma1_sq < _EPS, 0.0, g)
        sv_sq = np.where(sigma1_sq < _EPS, sigma2_sq, sv_sq)
        sv_sq = np.where(g < 0.0, sigma2_sq, sv_sq)
        g = np.maximum(g, 0.0)
        sv_sq = np.maximum(sv_sq, _EPS)

        num += float(np.log(1.0 + g * g * sigma1_sq / (sv_sq + VIF_SIGMA_N_SQ)).sum())
        den += float(np.log(1.0 + sigma1_sq / VIF_SIGMA_N_SQ).sum())
    if den == 0.0:
        # constant reference carries no information; identical output scores 1
        return 1.0 if num == 0.0 else 0.0
    return num / den


# ---------------------------------------------------------------------------
# batch evaluation


@dataclass
class MetricRow:
    item: str
    psnr_db: float
    vif: float


@dataclass
class MetricReport:
    """Per-item and mean scores plus an echo of the evaluation config."""

    rows: list[MetricRow] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def mean_psnr(self) -> float:
        return float(np.mean([r.psnr_db for r in self.rows])) if self.rows else math.nan

    def mean_vif(self) -> float:
        return float(np.mean([r.vif for r in self.rows])) if self.rows else math.nan

    def _fmt(self, v: float) -> str:
        return "inf" if math.isinf(v) else f"{v:.6f}"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["item", "psnr_db", "vif"])
        for r in self.rows:
            writer.writerow([r.item, self._fmt(r.psnr_db), self._fmt(r.vif)])
        writer.writerow(["mean", self._fmt(self.mean_psnr()), self._fmt(self.mean_vif())])
        return buf.getvalue()

    def to_json(self) -> str:
        payload = {
            "config": self.config,
            "items": [{"item": r.item, "psnr_db": r.psnr_db, "vif": r.vif} for r in self.rows],
            "mean": {"psnr_db": self.mean_psnr(), "vif": self.mean_vif()},
        }
        return json.dumps(payload, indent=2) + "\n"


def evaluate_images(infer_fn, images: dict[str, np.ndarray], scale: float,
                    config: dict | None = None) -> MetricReport:
    """Score `infer_fn` over named ground-truth images at one scale.

    Each image is bicubically downsampled by `scale`, `infer_fn(x_lr, dims)`
    reconstructs the original dims, and PSNR/VIF are computed against the
    ground truth. Items are processed in sorted order so reports are
    deterministic and independent of input ordering.
    """
    report = MetricReport(config=dict(config or {}))
    for name in sorted(images):
        img = images[name]
        x_lr, _ = make_lr_pair(img, scale)
        pred = infer_fn(x_lr, img.shape)
        report.rows.append(MetricRow(name, psnr(pred, img), vif(pred, img)))
    return report


def bicubic_infer(x_lr, target_dims) -> np.ndarray:
    """Baseline reconstruction: bicubic upsampling, clamped to [0, 1]."""
    return np.clip(bicubic_resize(x_lr, target_dims), 0.0, 1.0)
