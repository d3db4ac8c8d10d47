"""FT1 tensor file format.

Layout: magic bytes ``FT01``, u8 rank, rank x u32 little-endian extents,
then the raw little-endian float32 payload in row-major order. Used for
checkpoints, image tensors, and denoised-target caches.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ConfigurationError

MAGIC = b"FT01"
MAX_RANK = 4


def write_ft1(path, array) -> None:
    arr = np.asarray(array)
    if arr.ndim == 0 or arr.ndim > MAX_RANK:
        raise ConfigurationError(f"FT1 stores rank 1..{MAX_RANK} tensors, got rank {arr.ndim}")
    arr = np.ascontiguousarray(arr, dtype="<f4")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<B", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(arr.tobytes())


def read_ft1(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise ConfigurationError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        (rank,) = struct.unpack("<B", fh.read(1))
        if rank == 0 or rank > MAX_RANK:
            raise ConfigurationError(f"{path}: unsupported rank {rank}")
        shape = struct.unpack(f"<{rank}I", fh.read(4 * rank))
        count = int(np.prod(shape))
        payload = fh.read(4 * count)
        if len(payload) != 4 * count:
            raise ConfigurationError(f"{path}: truncated payload")
        extra = fh.read(1)
        if extra:
            raise ConfigurationError(f"{path}: trailing bytes after payload")
    return np.frombuffer(payload, dtype="<f4").reshape(shape).astype(np.float32)
