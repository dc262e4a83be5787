"""Pixel-shift / small-rotation transform banks and transform-max similarity.

A bank materializes every combination of integer pixel shifts up to
``max_shift`` and the listed rotation angles as sparse 784->784 linear
maps, so the hot evaluation loop never re-derives interpolation weights.
Similarity against a bank is the maximum dot product between a prototype
and any transformed copy of the input.

Conventions: shift ``(dx, dy)`` moves image content ``dx`` pixels right
and ``dy`` pixels down; pixels shifted out of the frame are dropped and
vacated pixels are zero. Rotation uses bilinear interpolation about the
(14.0, 14.0) grid center. Every transformed image is re-normalized to
unit L2 norm (shifting mass out of frame and interpolation both shrink
the norm); an image that becomes all-zero stays the zero vector with
similarity 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .errors import SpecOutOfRange

SIDE = 28
DIM = SIDE * SIDE
CENTER = 14.0
MAX_SHIFT_LIMIT = 3
MAX_ROTATION_DEG = 30.0


@dataclass(frozen=True)
class TransformSpec:
    """Shift radius and rotation angles spanning the invariance set.

    The generated bank has ``(2 * max_shift + 1)**2 * len(rotation_degrees)``
    members and always contains the identity, so ``rotation_degrees`` must
    include 0.
    """

    max_shift: int = 0
    rotation_degrees: tuple[float, ...] = (0.0,)


@dataclass(frozen=True)
class Transform:
    """One materialized map: rotate about the grid center, then shift."""

    matrix: sparse.csr_matrix
    dx: int
    dy: int
    angle: float
    is_identity: bool


@dataclass(frozen=True)
class TransformBank:
    spec: TransformSpec
    transforms: tuple[Transform, ...]
    identity_index: int = field(default=0)

    def __len__(self) -> int:
        return len(self.transforms)

    def apply_all(self, x: np.ndarray) -> np.ndarray:
        """Stack apply(t, x) for every member; shape (len(bank), 784)."""
        x = np.asarray(x, dtype=np.float64)
        out = np.empty((len(self.transforms), DIM))
        for i, t in enumerate(self.transforms):
            out[i] = apply(t, x)
        return out

    def apply_all_batch(self, X: np.ndarray) -> np.ndarray:
        """Batched :meth:`apply_all`; input (B, 784), output (B, len, 784)."""
        X = np.asarray(X, dtype=np.float64)
        out = np.empty((X.shape[0], len(self.transforms), DIM))
        for i, t in enumerate(self.transforms):
            if t.is_identity:
                out[:, i, :] = X
                continue
            Y = (t.matrix @ X.T).T
            norms = np.linalg.norm(Y, axis=1)
            norms[norms == 0.0] = 1.0
            out[:, i, :] = Y / norms[:, None]
        return out


def _rotation_shift_matrix(dx: int, dy: int, angle: float) -> sparse.csr_matrix:
    # Backward map: output pixel (r, c) samples the source at the inverse
    # shift followed by the inverse rotation about (CENTER, CENTER).
    rows = np.arange(SIDE)
    grid_r, grid_c = np.meshgrid(rows, rows, indexing="ij")
    out_idx = (grid_r * SIDE + grid_c).reshape(-1)
    r1 = (grid_r - dy).reshape(-1)
    c1 = (grid_c - dx).reshape(-1)

    if angle == 0.0:
        # Pure shift: exact pixel moves, no interpolation.
        inside = (r1 >= 0) & (r1 < SIDE) & (c1 >= 0) & (c1 < SIDE)
        data = np.ones(int(inside.sum()))
        return sparse.csr_matrix(
            (data, (out_idx[inside], r1[inside] * SIDE + c1[inside])),
            shape=(DIM, DIM),
        )

    rad = math.radians(angle)
    cos_a, sin_a = math.cos(rad), math.sin(rad)
    dr = r1 - CENTER
    dc = c1 - CENTER
    src_r = CENTER + cos_a * dr + sin_a * dc
    src_c = CENTER - sin_a * dr + cos_a * dc

    r0 = np.floor(src_r).astype(np.int64)
    c0 = np.floor(src_c).astype(np.int64)
    fr = src_r - r0
    fc = src_c - c0

    out_list, src_list, w_list = [], [], []
    for rr, cc, w in (
        (r0, c0, (1 - fr) * (1 - fc)),
        (r0, c0 + 1, (1 - fr) * fc),
        (r0 + 1, c0, fr * (1 - fc)),
        (r0 + 1, c0 + 1, fr * fc),
    ):
        keep = (rr >= 0) & (rr < SIDE) & (cc >= 0) & (cc < SIDE) & (w > 0)
        out_list.append(out_idx[keep])
        src_list.append(rr[keep] * SIDE + cc[keep])
        w_list.append(w[keep])
    return sparse.csr_matrix(
        (np.concatenate(w_list), (np.concatenate(out_list), np.concatenate(src_list))),
        shape=(DIM, DIM),
    )


def build_bank(spec: TransformSpec) -> TransformBank:
    """Materialize every shift x rotation combination as a sparse map.

    Raises SpecOutOfRange when the shift radius exceeds 3 pixels, an angle
    exceeds +/-30 degrees, or the angle list omits 0 (the identity member
    is mandatory).
    """
    if not 0 <= spec.max_shift <= MAX_SHIFT_LIMIT:
        raise SpecOutOfRange(f"max_shift {spec.max_shift} outside [0, {MAX_SHIFT_LIMIT}]")
    if not spec.rotation_degrees:
        raise SpecOutOfRange("rotation_degrees must not be empty")
    for a in spec.rotation_degrees:
        if abs(a) > MAX_ROTATION_DEG:
            raise SpecOutOfRange(f"rotation {a} outside [-30, +30] degrees")
    if 0.0 not in spec.rotation_degrees:
        raise SpecOutOfRange("rotation_degrees must include 0 (identity member)")

    transforms = []
    identity_index = -1
    s = spec.max_shift
    for dy in range(-s, s + 1):
        for dx in range(-s, s + 1):
            for angle in spec.rotation_degrees:
                is_identity = dx == 0 and dy == 0 and angle == 0.0
                if is_identity:
                    identity_index = len(transforms)
                transforms.append(
                    Transform(
                        matrix=_rotation_shift_matrix(dx, dy, angle),
                        dx=dx,
                        dy=dy,
                        angle=angle,
                        is_identity=is_identity,
                    )
                )
    return TransformBank(
        spec=spec, transforms=tuple(transforms), identity_index=identity_index
    )


def identity_bank() -> TransformBank:
    """The single-member bank whose only transform is the identity."""
    return build_bank(TransformSpec(max_shift=0, rotation_degrees=(0.0,)))


def apply(t: Transform, x: np.ndarray) -> np.ndarray:
    """Transform a 784-vector and re-normalize to unit L2 norm.

    The identity member returns the input bit-exactly (inputs are already
    unit-norm); an image transformed to all-zero stays the zero vector.
    """
    x = np.asarray(x, dtype=np.float64)
    if t.is_identity:
        return x.copy()
    y = t.matrix @ x
    norm = np.linalg.norm(y)
    if norm == 0.0:
        return y
    return y / norm


def max_similarity(v: np.ndarray, x: np.ndarray, bank: TransformBank) -> float:
    """max over the bank of v . apply(t, x); equals v . x for the identity bank."""
    variants = bank.apply_all(x)
    return float(np.max(variants @ np.asarray(v, dtype=np.float64)))
