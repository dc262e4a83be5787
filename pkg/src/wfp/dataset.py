"""MNIST IDX parsing and unit-ball normalization.

IDX container layout (all integers big-endian):

* images: magic ``0x00000803`` (u32), count (u32), rows (u32), cols (u32),
  then ``count * rows * cols`` unsigned bytes, row-major per image;
* labels: magic ``0x00000801`` (u32), count (u32), then ``count`` bytes.

Both gzip-compressed and raw files are accepted; gzip is detected by the
``0x1f 0x8b`` prefix. Only the 28x28 digit layout is supported.

Feature vectors are images flattened row-major and scaled to unit L2 norm.
Pixel intensities are used as raw counts (no centering), which keeps every
dot product between vectors in [0, 1]. Normalized components are rounded
to float32 precision (held in float64) so that prototypes built from them
survive the 32-bit model file format bit-exactly.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    DimensionMismatch,
    LabelOutOfRange,
    TruncatedFile,
    ZeroVector,
)

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
IMAGE_SIDE = 28
VECTOR_DIM = IMAGE_SIDE * IMAGE_SIDE

_GZIP_PREFIX = b"\x1f\x8b"


@dataclass(frozen=True)
class Sample:
    """One labeled feature vector on the unit ball.

    ``x`` is a 784-float64 array with unit L2 norm and non-negative
    components; ``label`` is the digit class in [0, 9].
    """

    x: np.ndarray
    label: int


def _maybe_gunzip(data: bytes) -> bytes:
    if data[:2] == _GZIP_PREFIX:
        return gzip.decompress(data)
    return data


def parse_idx_images(data: bytes) -> np.ndarray:
    """Parse an IDX image container into a (count, 28, 28) uint8 array.

    Raises BadMagic, DimensionMismatch or TruncatedFile on malformed input.
    """
    data = _maybe_gunzip(bytes(data))
    if len(data) < 16:
        raise TruncatedFile(f"image header needs 16 bytes, got {len(data)}")
    magic, count, rows, cols = struct.unpack(">IIII", data[:16])
    if magic != IMAGE_MAGIC:
        raise BadMagic(f"expected image magic {IMAGE_MAGIC:#010x}, got {magic:#010x}")
    if rows != IMAGE_SIDE or cols != IMAGE_SIDE:
        raise DimensionMismatch(f"expected 28x28 images, got {rows}x{cols}")
    need = count * rows * cols
    if len(data) - 16 < need:
        raise TruncatedFile(
            f"header promises {count} images ({need} bytes), payload has {len(data) - 16}"
        )
    pixels = np.frombuffer(data, dtype=np.uint8, count=need, offset=16)
    return pixels.reshape(count, IMAGE_SIDE, IMAGE_SIDE).copy()


def parse_idx_labels(data: bytes) -> np.ndarray:
    """Parse an IDX label container into a (count,) int64 array.

    Raises BadMagic, TruncatedFile or LabelOutOfRange on malformed input.
    """
    data = _maybe_gunzip(bytes(data))
    if len(data) < 8:
        raise TruncatedFile(f"label header needs 8 bytes, got {len(data)}")
    magic, count = struct.unpack(">II", data[:8])
    if magic != LABEL_MAGIC:
        raise BadMagic(f"expected label magic {LABEL_MAGIC:#010x}, got {magic:#010x}")
    if len(data) - 8 < count:
        raise TruncatedFile(
            f"header promises {count} labels, payload has {len(data) - 8}"
        )
    labels = np.frombuffer(data, dtype=np.uint8, count=count, offset=8)
    if labels.size and labels.max() > 9:
        bad = int(labels.max())
        raise LabelOutOfRange(f"label {bad} outside [0, 9]")
    return labels.astype(np.int64)


def round_to_f32(x: np.ndarray) -> np.ndarray:
    """Round to float32 precision while keeping float64 storage.

    Model files hold 32-bit weights; vectors that are float32-representable
    from the start make serialization lossless.
    """
    return x.astype(np.float32).astype(np.float64)


def normalize(grid: np.ndarray) -> np.ndarray:
    """Flatten a 28x28 intensity grid row-major and scale to unit L2 norm.

    Raises ZeroVector for an all-zero image (nothing to project onto the
    unit ball; MNIST contains none, so this signals corrupt input).
    """
    flat = np.asarray(grid, dtype=np.float64).reshape(-1)
    if flat.size != VECTOR_DIM:
        raise DimensionMismatch(f"expected {VECTOR_DIM} pixels, got {flat.size}")
    norm = np.linalg.norm(flat)
    if norm == 0.0:
        raise ZeroVector("all-zero image has no direction on the unit ball")
    return round_to_f32(flat / norm)


def normalize_batch(grids: np.ndarray) -> np.ndarray:
    """Vectorized :func:`normalize` for a (N, 28, 28) stack of grids."""
    grids = np.asarray(grids, dtype=np.float64)
    flat = grids.reshape(grids.shape[0], -1)
    if flat.shape[1] != VECTOR_DIM:
        raise DimensionMismatch(f"expected {VECTOR_DIM} pixels, got {flat.shape[1]}")
    norms = np.linalg.norm(flat, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise ZeroVector(f"all-zero image at index {int(zero[0])}")
    return round_to_f32(flat / norms[:, None])


def load_images(path: str | Path) -> np.ndarray:
    """Read an image file (raw or gzipped) into a (N, 28, 28) uint8 array."""
    return parse_idx_images(Path(path).read_bytes())


def load_labels(path: str | Path) -> np.ndarray:
    """Read a label file (raw or gzipped) into a (N,) int64 array."""
    return parse_idx_labels(Path(path).read_bytes())


def load_dataset(images_path: str | Path, labels_path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Load and normalize a paired image/label file set.

    Returns ``(X, y)`` where ``X`` is (N, 784) float64 with unit-norm rows
    and ``y`` is (N,) int64.
    """
    grids = load_images(images_path)
    labels = load_labels(labels_path)
    if grids.shape[0] != labels.shape[0]:
        raise DimensionMismatch(
            f"{grids.shape[0]} images vs {labels.shape[0]} labels"
        )
    return normalize_batch(grids), labels


def iter_samples(X: np.ndarray, y: np.ndarray):
    """Yield :class:`Sample` views over a loaded dataset."""
    for i in range(X.shape[0]):
        yield Sample(x=X[i], label=int(y[i]))
