"""Continuous coordinate geometry over pixel grids.

Convention used everywhere in this package: an l x w grid lives on the unit
square with half-pixel centers, i.e. cell (i, j) is centered at
((j + 0.5) / w, (i + 0.5) / l) in (x, y). This makes identity resizes exact
and keeps low/high resolution grids aligned at every scale.

Provides the 4-neighbor bilinear ensemble weights used by the coordinate
decoder and arbitrary-scale Catmull-Rom bicubic resampling (a = -0.5,
reflect-101 borders) used for data generation and as the baseline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

CATROM_A = -0.5


@dataclass(frozen=True)
class EnsembleWeights:
    """Four surrounding cells (row, col per cell, clamped) and their weights."""

    neighbor_indices: np.ndarray  # [4, 2] int
    weights: np.ndarray  # [4] float

    def flat_indices(self, width: int) -> np.ndarray:
        return self.neighbor_indices[:, 0] * width + self.neighbor_indices[:, 1]


def _check_unit_square(xs: np.ndarray, ys: np.ndarray) -> None:
    if xs.size and (xs.min() < 0.0 or xs.max() > 1.0 or ys.min() < 0.0 or ys.max() > 1.0):
        raise DomainError("query coordinates must lie in [0, 1]^2")


def ensemble_weights_grid(xs, ys, grid_dims):
    """Vectorized 4-neighbor weights for arrays of query coordinates.

    Returns (indices [n, 4] flattened row-major cell ids, weights [n, 4]).
    Weights are the tensor-product linear interpolation coefficients of the
    query between the four surrounding cell centers; clamping the continuous
    coordinate to the center range handles boundaries, which concentrates
    weight on edge cells while keeping the partition of unity exact.
    """
    l, w = grid_dims
    if l < 1 or w < 1:
        raise DomainError(f"grid dims must be >= 1, got {grid_dims}")
    xs = np.asarray(xs, dtype=np.float64).reshape(-1)
    ys = np.asarray(ys, dtype=np.float64).reshape(-1)
    _check_unit_square(xs, ys)

    gx = np.clip(xs * w - 0.5, 0.0, w - 1.0)
    gy = np.clip(ys * l - 0.5, 0.0, l - 1.0)
    x0 = np.floor(gx).astype(np.intp)
    y0 = np.floor(gy).astype(np.intp)
    x0 = np.minimum(x0, w - 1)
    y0 = np.minimum(y0, l - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, l - 1)
    fx = gx - x0
    fy = gy - y0

    weights = np.stack([
        (1.0 - fy) * (1.0 - fx),
        (1.0 - fy) * fx,
        fy * (1.0 - fx),
        fy * fx,
    ], axis=1)
    indices = np.stack([
        y0 * w + x0,
        y0 * w + x1,
        y1 * w + x0,
        y1 * w + x1,
    ], axis=1)
    return indices, weights


def ensemble_weights(query, grid_dims) -> EnsembleWeights:
    """4-neighbor weights for a single (x, y) query in [0, 1]^2."""
    x, y = query
    idx, wts = ensemble_weights_grid([x], [y], grid_dims)
    _, w = grid_dims
    rows = idx[0] // w
    cols = idx[0] % w
    return EnsembleWeights(np.stack([rows, cols], axis=1), wts[0])


def output_grid_coords(out_dims):
    """Half-pixel-center (xs, ys) arrays for every pixel of an H' x W' output."""
    h, w = out_dims
    ys = (np.arange(h, dtype=np.float64) + 0.5) / h
    xs = (np.arange(w, dtype=np.float64) + 0.5) / w
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return xx.reshape(-1), yy.reshape(-1)


def catrom_kernel(t):
    """Catmull-Rom cubic kernel (a = -0.5), nonzero on |t| < 2."""
    a = CATROM_A
    t = np.abs(np.asarray(t, dtype=np.float64))
    t2 = t * t
    t3 = t2 * t
    near = (a + 2.0) * t3 - (a + 3.0) * t2 + 1.0
    far = a * t3 - 5.0 * a * t2 + 8.0 * a * t - 4.0 * a
    return np.where(t <= 1.0, near, np.where(t < 2.0, far, 0.0))


def _reflect_101(idx: np.ndarray, n: int) -> np.ndarray:
    """Map out-of-range indices by reflection about the edge pixels."""
    if n == 1:
        return np.zeros_like(idx)
    period = 2 * n - 2
    idx = np.mod(idx, period)
    return np.where(idx >= n, period - idx, idx)


def _axis_weight_matrix(n_out: int, n_in: int) -> np.ndarray:
    """Dense [n_out, n_in] matrix applying the 4-tap bicubic kernel per row."""
    out = np.zeros((n_out, n_in), dtype=np.float64)
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    base = np.floor(src).astype(np.intp)
    for tap in range(-1, 3):
        tap_idx = base + tap
        wts = catrom_kernel(src - tap_idx)
        cols = _reflect_101(tap_idx, n_in)
        np.add.at(out, (np.arange(n_out), cols), wts)
    return out


def bicubic_resize(img, out_dims) -> np.ndarray:
    """Resize to arbitrary (H', W') with the separable Catmull-Rom kernel.

    Half-pixel-center coordinate mapping and reflect-101 borders; supports
    non-integer scale factors in both directions, up and down.
    """
    img = np.asarray(img)
    if img.ndim != 2 or img.size == 0:
        raise DomainError(f"expected a non-empty 2-D image, got shape {img.shape}")
    h_out, w_out = int(out_dims[0]), int(out_dims[1])
    if h_out < 1 or w_out < 1:
        raise DomainError(f"output dims must be >= 1, got {out_dims}")
    wr = _axis_weight_matrix(h_out, img.shape[0])
    wc = _axis_weight_matrix(w_out, img.shape[1])
    out = wr @ img.astype(np.float64) @ wc.T
    return out.astype(np.float32)


def make_lr_pair(x_hr, s: float):
    """Produce the low-resolution counterpart of `x_hr` at scale `s` >= 1.

    Output dims are floor(dim / s) per axis; dims below 8 are rejected as
    too small to tile.
    """
    x_hr = np.asarray(x_hr)
    if s < 1.0:
        raise DomainError(f"scale must be >= 1, got {s}")
    h = int(np.floor(x_hr.shape[0] / s))
    w = int(np.floor(x_hr.shape[1] / s))
    if h < 8 or w < 8:
        raise DomainError(
            f"downsampling {x_hr.shape} by {s} gives {h}x{w}; dims below 8 are too small to tile"
        )
    return bicubic_resize(x_hr, (h, w)), s
