"""Synthetic MR-like data: k-space forward model, phantoms, dataset manifests.

Ground-truth images are produced by measuring a source image through the
multi-coil Fourier forward model with complex Gaussian noise added in
k-space, then reconstructing via root-sum-of-squares. Phantoms stand in for
clinical slices; 8-bit grayscale PNGs or FT1 tensors can be ingested instead.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ConfigurationError, DomainError
from .ft1 import read_ft1, write_ft1

SPLITS = ("train", "val", "test")


# ---------------------------------------------------------------------------
# Fourier transform pair (unitary; numpy's mixed-radix FFT, any dims >= 2)


def _check_dims(arr: np.ndarray) -> None:
    if arr.ndim != 2 or arr.shape[0] < 2 or arr.shape[1] < 2:
        raise ConfigurationError(f"expected a 2-D array with dims >= 2, got {arr.shape}")


def fft2(img) -> np.ndarray:
    """Unitary 2-D FFT (1/sqrt(N) both directions); returns complex64."""
    img = np.asarray(img)
    _check_dims(img)
    return np.fft.fft2(img, norm="ortho").astype(np.complex64)


def ifft2(kspace) -> np.ndarray:
    """Unitary 2-D inverse FFT; returns complex64."""
    kspace = np.asarray(kspace)
    _check_dims(kspace)
    return np.fft.ifft2(kspace, norm="ortho").astype(np.complex64)


def highfreq_energy_fraction(img, cutoff: float = 0.5) -> float:
    """Fraction of total spectral energy above `cutoff` x Nyquist (radial)."""
    img = np.asarray(img, dtype=np.float64)
    spec = np.abs(np.fft.fft2(img, norm="ortho")) ** 2
    fy = np.fft.fftfreq(img.shape[0])  # cycles/pixel, Nyquist = 0.5
    fx = np.fft.fftfreq(img.shape[1])
    r = np.sqrt(fy[:, None] ** 2 + fx[None, :] ** 2)
    total = spec.sum()
    if total == 0.0:
        return 0.0
    return float(spec[r > cutoff * 0.5].sum() / total)


# ---------------------------------------------------------------------------
# coil sensitivity maps


def make_coil_maps(n: int, coils: int, smoothness: float = 0.35, seed: int = 0) -> np.ndarray:
    """Synthetic smooth complex coil maps [coils, n, n], RSS-normalized to 1.

    Each magnitude is a Gaussian bump (width `smoothness` * n) centered on a
    ring around the FOV; phase varies slowly (linear plus one low-frequency
    sinusoid per coil).
    """
    if coils < 1:
        raise ConfigurationError(f"need at least one coil, got {coils}")
    rng = np.random.default_rng(seed)
    yy, xx = np.meshgrid(np.linspace(0, 1, n), np.linspace(0, 1, n), indexing="ij")
    maps = np.empty((coils, n, n), dtype=np.complex64)
    width = smoothness
    for c in range(coils):
        angle = 2 * np.pi * (c + rng.uniform(-0.1, 0.1)) / coils
        cy = 0.5 + 0.55 * np.sin(angle)
        cx = 0.5 + 0.55 * np.cos(angle)
        mag = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * width**2)) + 0.05
        slope = rng.uniform(-2.0, 2.0, size=2)
        ripple = rng.uniform(0.2, 0.6) * np.sin(
            2 * np.pi * (rng.uniform(0.5, 1.5) * yy + rng.uniform(0.5, 1.5) * xx)
        )
        phase = slope[0] * yy + slope[1] * xx + ripple
        maps[c] = (mag * np.exp(1j * phase)).astype(np.complex64)
    rss = np.sqrt((np.abs(maps) ** 2).sum(axis=0))
    maps /= rss[None, :, :]
    return maps


# ---------------------------------------------------------------------------
# forward model


def simulate_measurement(img, coil_maps=None, sigma_k: float = 0.0, seed: int = 0) -> np.ndarray:
    """Measure `img` through the noisy k-space forward model and reconstruct.

    Per coil: k_i = fft2(S_i * img) + complex Gaussian noise with std
    `sigma_k` per real/imag component. Reconstruction is root-sum-of-squares
    over the coil inverse transforms, clamped to [0, 1]. With unitary
    transforms, sigma_k is also the per-component image-domain noise std, so
    sigma_k ~ 0.03 yields pixel noise around 0.03 on [0, 1] images.
    """
    if sigma_k < 0:
        raise DomainError(f"sigma_k must be >= 0, got {sigma_k}")
    img = np.asarray(img, dtype=np.float32)
    _check_dims(img)
    if coil_maps is None:
        coil_maps = np.ones((1,) + img.shape, dtype=np.complex64)
    else:
        coil_maps = np.asarray(coil_maps)
        if coil_maps.ndim == 2:
            coil_maps = coil_maps[None]
        if coil_maps.shape[1:] != img.shape:
            raise ConfigurationError(
                f"coil maps {coil_maps.shape} do not match image {img.shape}"
            )
    rng = np.random.default_rng(seed)
    ncoils = coil_maps.shape[0]
    recon_sq = np.zeros(img.shape, dtype=np.float64)
    for c in range(ncoils):
        k = fft2(coil_maps[c] * img)
        if sigma_k > 0:
            noise = rng.standard_normal(img.shape) + 1j * rng.standard_normal(img.shape)
            k = k + (sigma_k * noise).astype(np.complex64)
        recon_sq += np.abs(ifft2(k)).astype(np.float64) ** 2
    recon = np.sqrt(recon_sq)
    return np.clip(recon, 0.0, 1.0).astype(np.float32)


# ---------------------------------------------------------------------------
# phantoms

_ELLIPSES = [
    # (intensity, semi-axis a, semi-axis b, center x, center y, angle deg)
    (0.85, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.35, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.15, 0.11, 0.31, 0.22, 0.0, -18.0),
    (-0.15, 0.16, 0.41, -0.22, 0.0, 18.0),
    (0.20, 0.21, 0.25, 0.0, 0.35, 0.0),
    (0.12, 0.046, 0.046, 0.0, 0.1, 0.0),
    (0.12, 0.046, 0.046, 0.0, -0.1, 0.0),
    (0.12, 0.046, 0.023, -0.08, -0.605, 0.0),
    (0.12, 0.023, 0.023, 0.0, -0.606, 0.0),
    (0.12, 0.023, 0.046, 0.06, -0.605, 0.0),
]


def _phantom_ellipses(n: int, rng: np.random.Generator) -> np.ndarray:
    """Soft-tissue-like ellipse phantom with seeded geometry jitter."""
    yy, xx = np.meshgrid(np.linspace(-1, 1, n), np.linspace(-1, 1, n), indexing="ij")
    img = np.zeros((n, n), dtype=np.float64)
    rot = rng.uniform(-10.0, 10.0)
    shift = rng.uniform(-0.05, 0.05, size=2)
    for inten, a, b, cx, cy, ang in _ELLIPSES:
        inten = inten * rng.uniform(0.9, 1.1)
        theta = np.deg2rad(ang + rot)
        dx = xx - (cx + shift[0])
        dy = yy - (cy + shift[1])
        u = np.cos(theta) * dx + np.sin(theta) * dy
        v = -np.sin(theta) * dx + np.cos(theta) * dy
        img += inten * ((u / a) ** 2 + (v / b) ** 2 <= 1.0)
    img = np.clip(img, 0.0, None)
    peak = img.max()
    if peak > 0:
        img /= peak
    return img


def _phantom_texture(n: int, rng: np.random.Generator) -> np.ndarray:
    """Bright trabecular-like texture on a dark background.

    A hard-saturated mid-band pattern gives crisp fine structure whose
    harmonics put well over 10% of the spectral energy above half-Nyquist,
    while staying largely predictable from the low frequencies (so
    super-resolution has signal to recover); a genuine 0.55-0.9 Nyquist
    band adds unstructured high-frequency texture on top.
    """
    from scipy import ndimage

    fy = np.fft.fftfreq(n)
    fx = np.fft.fftfreq(n)
    r = np.sqrt(fy[:, None] ** 2 + fx[None, :] ** 2) / 0.5  # in Nyquist units

    def band_noise(lo, hi):
        spec = np.fft.fft2(rng.standard_normal((n, n)))
        spec[~((r >= lo) & (r < hi))] = 0.0
        field = np.fft.ifft2(spec).real
        sd = field.std()
        return field / sd if sd > 0 else field

    yy, xx = np.meshgrid(np.linspace(-1, 1, n), np.linspace(-1, 1, n), indexing="ij")
    ax = rng.uniform(0.55, 0.8)
    ay = rng.uniform(0.7, 0.95)
    cx, cy = rng.uniform(-0.08, 0.08, size=2)
    mask = 1.2 - ((xx - cx) ** 2 / ax + (yy - cy) ** 2 / ay)
    mask = np.clip(ndimage.gaussian_filter((mask > 0.25).astype(np.float64), n / 64), 0, 1)

    fine = np.tanh(12.0 * band_noise(0.30, 0.55))
    high = band_noise(0.55, 0.90)
    img = ndimage.gaussian_filter(mask * (0.40 + 0.20 * fine), 0.27)
    img += 0.09 * high * mask
    return np.clip(img, 0.0, 1.0)


def _phantom_edges(n: int, rng: np.random.Generator) -> np.ndarray:
    """Ramps plus step edges at seeded orientations and offsets."""
    yy, xx = np.meshgrid(np.linspace(0, 1, n), np.linspace(0, 1, n), indexing="ij")
    gdir = rng.uniform(-1.0, 1.0, size=2)
    img = 0.35 + 0.3 * (gdir[0] * yy + gdir[1] * xx)
    for _ in range(6):
        theta = rng.uniform(0, np.pi)
        offset = rng.uniform(0.15, 0.85)
        step = rng.uniform(-0.3, 0.3)
        img += step * ((np.cos(theta) * xx + np.sin(theta) * yy) > offset)
    for _ in range(3):
        cy, cx = rng.uniform(0.2, 0.8, size=2)
        rad = rng.uniform(0.05, 0.2)
        img += rng.uniform(-0.25, 0.25) * (((yy - cy) ** 2 + (xx - cx) ** 2) < rad**2)
    lo, hi = img.min(), img.max()
    return (img - lo) / (hi - lo) if hi > lo else np.full_like(img, 0.5)


PHANTOM_KINDS = ("shepp-logan-like", "texture", "edges")


def make_phantom(kind: str, n: int, seed: int = 0) -> np.ndarray:
    """Deterministic phantom image in [0, 1], float32, n x n (n >= 32)."""
    if kind not in PHANTOM_KINDS:
        raise ConfigurationError(f"unknown phantom kind {kind!r}; choose from {PHANTOM_KINDS}")
    if n < 32:
        raise DomainError(f"phantom size must be >= 32, got {n}")
    rng = np.random.default_rng([hash_seed(kind), n, seed])
    if kind == "shepp-logan-like":
        img = _phantom_ellipses(n, rng)
    elif kind == "texture":
        img = _phantom_texture(n, rng)
    else:
        img = _phantom_edges(n, rng)
    return img.astype(np.float32)


def hash_seed(text: str) -> int:
    """Stable non-negative 32-bit seed derived from a string."""
    h = 2166136261
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * 16777619) & 0xFFFFFFFF
    return h


# ---------------------------------------------------------------------------
# dataset manifest


@dataclass
class ManifestItem:
    path: str
    group: str
    split: str


@dataclass
class DatasetManifest:
    items: list[ManifestItem] = field(default_factory=list)
    seed: int = 0
    sigma_k: float = 0.0
    source: str = "phantom"

    def split_items(self, split: str) -> list[ManifestItem]:
        if split not in SPLITS:
            raise ConfigurationError(f"unknown split {split!r}; choose from {SPLITS}")
        return [it for it in self.items if it.split == split]

    def to_json(self) -> str:
        payload = {
            "items": [{"path": i.path, "group": i.group, "split": i.split} for i in self.items],
            "seed": self.seed,
            "sigma_k": self.sigma_k,
            "source": self.source,
        }
        return json.dumps(payload, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        payload = json.loads(text)
        items = [ManifestItem(i["path"], i["group"], i["split"]) for i in payload["items"]]
        return cls(items, payload["seed"], payload["sigma_k"], payload.get("source", "ingested"))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        return cls.from_json(Path(path).read_text())


def build_manifest(entries, seed: int = 0, sigma_k: float = 0.0,
                   source: str = "phantom") -> DatasetManifest:
    """Split (path, group) entries 80/10/10 by a seeded shuffle of groups.

    Items sharing a group id never span two splits. Needs >= 10 items.
    Target counts are round(0.1 * n) for val and test (at least 1 each);
    groups are assigned greedily in shuffled order.
    """
    entries = [(str(p), str(g)) for p, g in entries]
    if len(entries) < 10:
        raise ConfigurationError(f"need at least 10 items to split, got {len(entries)}")
    groups: dict[str, list[str]] = {}
    for path, group in entries:
        groups.setdefault(group, []).append(path)
    order = sorted(groups)
    rng = np.random.default_rng(seed)
    order = [order[i] for i in rng.permutation(len(order))]

    n = len(entries)
    target_test = max(1, round(0.1 * n))
    target_val = max(1, round(0.1 * n))
    assignment: dict[str, str] = {}
    counts = {"test": 0, "val": 0}
    for gid in order:
        size = len(groups[gid])
        if counts["test"] < target_test:
            assignment[gid] = "test"
            counts["test"] += size
        elif counts["val"] < target_val:
            assignment[gid] = "val"
            counts["val"] += size
        else:
            assignment[gid] = "train"
    items = [ManifestItem(path, group, assignment[group]) for path, group in entries]
    if not any(i.split == "train" for i in items):
        raise ConfigurationError("split produced an empty train set; add more items")
    return DatasetManifest(items, seed, sigma_k, source)


# ---------------------------------------------------------------------------
# image IO (PNG ingestion and FT1 tensors)


def load_image(path) -> np.ndarray:
    """Read a grayscale image in [0, 1] from an 8-bit PNG or an FT1 file."""
    path = Path(path)
    if path.suffix == ".ft1":
        img = read_ft1(path)
        if img.ndim != 2:
            raise ConfigurationError(f"{path}: expected a rank-2 image tensor, got rank {img.ndim}")
        return img
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"), dtype=np.float32)
    return arr / 255.0


def save_image_ft1(path, img) -> None:
    write_ft1(path, np.asarray(img, dtype=np.float32))


def save_image_png(path, img) -> None:
    arr = np.clip(np.asarray(img, dtype=np.float32), 0.0, 1.0)
    data = np.round(arr * 255.0).astype(np.uint8)
    Image.fromarray(data, mode="L").save(path)
