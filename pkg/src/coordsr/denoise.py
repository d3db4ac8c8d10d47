"""Denoisers for the regularization target, behind a pluggable spec.

The default `block-dct` kind is an overlapping-block DCT hard-thresholding
filter: sliding blocks are transformed with an orthonormal 2-D DCT-II,
coefficients below `thresh_mult * sigma` are zeroed (DC always kept), and
the overlapped reconstructions are averaged with uniform weights. `gaussian`
is a plain Gaussian blur with kernel std proportional to sigma; `identity`
passes through. Denoised targets are cached per dataset item as FT1 files.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import ConfigurationError, DomainError
from .ft1 import read_ft1, write_ft1

KINDS = ("block-dct", "gaussian", "identity")

GAUSSIAN_STD_PER_SIGMA = 25.0  # kernel std in pixels per unit of denoiser strength


@dataclass(frozen=True)
class DenoiserSpec:
    """Denoiser kind and strength; sigma is in [0, 1] intensity-std units."""

    kind: str = "block-dct"
    sigma: float = 0.03
    block: int = 8
    stride: int = 4
    thresh_mult: float = 2.7

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown denoiser kind {self.kind!r}; choose from {KINDS}")
        if self.sigma < 0:
            raise DomainError(f"denoiser strength must be >= 0, got {self.sigma}")
        if self.block < 2 or self.stride < 1 or self.stride > self.block:
            raise ConfigurationError(
                f"need block >= 2 and 1 <= stride <= block, got block={self.block} "
                f"stride={self.stride}"
            )


def dct_matrix(n: int = 8) -> np.ndarray:
    """Orthonormal DCT-II matrix (rows are basis vectors)."""
    k = np.arange(n)[:, None]
    x = np.arange(n)[None, :]
    mat = np.cos(np.pi * (2 * x + 1) * k / (2 * n)) * np.sqrt(2.0 / n)
    mat[0] /= np.sqrt(2.0)
    return mat


_DCT8 = dct_matrix(8)


def _basis(n: int) -> np.ndarray:
    return _DCT8 if n == 8 else dct_matrix(n)


def dct2(block) -> np.ndarray:
    """Orthonormal 2-D DCT-II of a square block."""
    block = np.asarray(block, dtype=np.float64)
    d = _basis(block.shape[0])
    return d @ block @ d.T


def idct2(coeffs) -> np.ndarray:
    """Inverse of `dct2`."""
    coeffs = np.asarray(coeffs, dtype=np.float64)
    d = _basis(coeffs.shape[0])
    return d.T @ coeffs @ d


def _block_starts(extent: int, block: int, stride: int) -> np.ndarray:
    starts = list(range(0, extent - block + 1, stride))
    if starts[-1] != extent - block:
        starts.append(extent - block)
    return np.asarray(starts)


def _denoise_block_dct(img: np.ndarray, spec: DenoiserSpec) -> np.ndarray:
    b, stride = spec.block, spec.stride
    h, w = img.shape
    if h < b or w < b:
        raise ConfigurationError(f"image {img.shape} smaller than denoiser block {b}")
    ys = _block_starts(h, b, stride)
    xs = _block_starts(w, b, stride)
    d = _basis(b)
    thresh = spec.thresh_mult * spec.sigma

    windows = np.lib.stride_tricks.sliding_window_view(img, (b, b))
    blocks = windows[np.ix_(ys, xs)].astype(np.float64)  # [ny, nx, b, b]
    coeffs = np.einsum("ij,yxjk,lk->yxil", d, blocks, d, optimize=True)
    keep = np.abs(coeffs) >= thresh
    keep[:, :, 0, 0] = True
    coeffs *= keep
    recon = np.einsum("ji,yxjk,kl->yxil", d, coeffs, d, optimize=True)

    acc = np.zeros((h, w), dtype=np.float64)
    cnt = np.zeros((h, w), dtype=np.float64)
    for iy, y in enumerate(ys):
        for ix, x in enumerate(xs):
            acc[y:y + b, x:x + b] += recon[iy, ix]
            cnt[y:y + b, x:x + b] += 1.0
    return (acc / cnt).astype(np.float32)


def denoise(img, spec: DenoiserSpec) -> np.ndarray:
    """Apply the configured denoiser; sigma == 0 is an exact passthrough."""
    img = np.asarray(img, dtype=np.float32)
    if img.ndim != 2:
        raise ConfigurationError(f"expected a 2-D image, got shape {img.shape}")
    if spec.sigma == 0.0 or spec.kind == "identity":
        return img.copy()
    if spec.kind == "gaussian":
        std = GAUSSIAN_STD_PER_SIGMA * spec.sigma
        out = ndimage.gaussian_filter(img.astype(np.float64), std, truncate=3.0, mode="mirror")
        return out.astype(np.float32)
    return _denoise_block_dct(img, spec)


# ---------------------------------------------------------------------------
# denoised-target cache


def cache_dir(dataset_dir, sigma: float) -> Path:
    return Path(dataset_dir) / "denoised" / f"{sigma:g}"


def cached_target(dataset_dir, item_path, spec: DenoiserSpec) -> np.ndarray:
    """Denoised version of a dataset item, computed once and cached as FT1."""
    from .mrisim import load_image  # local import to avoid a cycle

    item_path = Path(item_path)
    cache_path = cache_dir(dataset_dir, spec.sigma) / (item_path.stem + ".ft1")
    if cache_path.exists():
        return read_ft1(cache_path)
    out = denoise(load_image(item_path), spec)
    write_ft1(cache_path, out)
    return out
