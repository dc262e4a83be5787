"""Online training: greedy unit growth, then rank-scaled repulsion updates.

One pass works sample by sample: classify, and on a miss either append
the sample verbatim as a new unit (while below capacity) or push every
unit of the wrongly-predicted class away from it,

    v <- normalize(clamp(v - (alpha / k) * (v . x*) * x*))

where k is the unit's rank in its class's descending similarity order
and x* is the bank transform of x achieving that unit's max similarity
(x itself for the identity bank). Training is strictly sequential over
samples — each mutation changes what the next sample sees — and fully
deterministic for a fixed config and sample order.

The inner loop classifies speculative blocks of upcoming samples with
one matrix product and falls back to the block start whenever the model
mutates, which keeps results bit-identical to one-at-a-time processing
while spending most of its time in BLAS.

Model files: magic ``WFC1``, version u16, unit count u32, vector
dimension u32, series truncation u32 (0 = all terms), then per unit one
label byte plus 784 little-endian float32 weights, and a trailing CRC32
of the unit payload. All header integers are little-endian. Weight
vectors are kept at float32 granularity throughout training, so
serialization is lossless and a round-tripped model classifies every
input identically.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from .classifier import Model, Unit, class_scores_matrix
from .dataset import round_to_f32
from .errors import (
    BadMagic,
    ChecksumMismatch,
    ConfigError,
    DimensionMismatch,
    EmptyDataset,
    LabelOutOfRange,
    TruncatedFile,
    VersionMismatch,
)
from .perception import SeriesConfig
from .transforms import DIM, TransformBank, identity_bank

MODEL_MAGIC = b"WFC1"
MODEL_VERSION = 1
_HEADER = struct.Struct("<4sHIII")
_UNIT_DTYPE = np.dtype([("label", "u1"), ("v", "<f4", (DIM,))])

_MIN_BLOCK = 8
_MAX_BLOCK_IDENTITY = 512
_MAX_BLOCK_BANK = 64


@dataclass(frozen=True)
class TrainConfig:
    """Knobs of one training run; defaults follow the benchmark setup."""

    n_max: int
    alpha: float = 0.1
    epochs: int = 5
    train_bank: TransformBank | None = None
    shuffle_seed: int | None = None
    max_terms: int | None = None
    attract: bool = False
    allow_negative: bool = False
    update_top_k: int | None = None

    def validate(self) -> None:
        if self.n_max < 10:
            raise ConfigError(f"n_max must be >= 10, got {self.n_max}")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.update_top_k is not None and self.update_top_k < 1:
            raise ConfigError(f"update_top_k must be >= 1, got {self.update_top_k}")
        if self.max_terms is not None and self.max_terms < 1:
            raise ConfigError(f"max_terms must be >= 1, got {self.max_terms}")


@dataclass(frozen=True)
class EpochStats:
    train_error: float
    units_added: int
    update_count: int


@dataclass(frozen=True)
class TrainTrace:
    epochs: list[EpochStats] = field(default_factory=list)
    total_units: int = 0


def _rank_update(
    W: np.ndarray,
    X_star: np.ndarray,
    p: np.ndarray,
    alpha: float,
    ranks: np.ndarray,
    clamp: bool,
    step_sign: float = 1.0,
) -> np.ndarray:
    """Apply v <- normalize(clamp(v - sign*(alpha/rank)*p*x*)) row-wise.

    Rows with a zero step (p == 0) are left bit-exactly untouched, which
    realizes the fixed point of the update.
    """
    step = step_sign * (alpha / ranks) * p
    live = step != 0.0
    if not np.any(live):
        return W
    Wl = W[live] - step[live, None] * X_star[live]
    if clamp:
        np.maximum(Wl, 0.0, out=Wl)
    norms = np.linalg.norm(Wl, axis=1)
    norms[norms == 0.0] = 1.0
    W[live] = Wl / norms[:, None]
    return W


def update_units(
    units: list[Unit],
    x: np.ndarray,
    alpha: float,
    bank: TransformBank | None = None,
    *,
    clamp_nonneg: bool = True,
    top_k: int | None = None,
) -> list[Unit]:
    """Repel a ranked list of same-class units from a sample.

    ``units`` must already be sorted descending by similarity to ``x``
    (rank 1 first); the step size for rank k is alpha / k. Returns new
    Unit objects; inputs are not mutated.
    """
    if not units:
        return []
    x = np.asarray(x, dtype=np.float64)
    W = np.stack([np.asarray(u.v, dtype=np.float64) for u in units])
    m = len(units)
    if bank is None or len(bank) == 1:
        X_star = np.broadcast_to(x, W.shape)
        p = W @ x
    else:
        variants = bank.apply_all(x)
        S = W @ variants.T
        best = S.argmax(axis=1)
        X_star = variants[best]
        p = np.take_along_axis(S, best[:, None], axis=1)[:, 0]
    limit = m if top_k is None else min(top_k, m)
    ranks = np.arange(1, limit + 1, dtype=np.float64)
    W[:limit] = _rank_update(
        W[:limit].copy(), X_star[:limit], p[:limit], alpha, ranks, clamp_nonneg
    )
    return [Unit(v=W[i], label=u.label, id=u.id) for i, u in enumerate(units)]


def _update_for_miss(
    model: Model,
    x: np.ndarray,
    predicted: int,
    true_label: int,
    sims: np.ndarray,
    best_t: np.ndarray,
    variants: np.ndarray | None,
    cfg: TrainConfig,
) -> None:
    """Repel the predicted class's units; optionally attract the true class."""
    plans = [(predicted, 1.0)]
    if cfg.attract:
        plans.append((true_label, -1.0))
    for class_id, sign in plans:
        rows = model.class_rows(class_id)
        if rows.size == 0:
            continue
        p = sims[rows]
        order = np.argsort(-p, kind="stable")
        limit = order.size if cfg.update_top_k is None else min(cfg.update_top_k, order.size)
        rr = rows[order[:limit]]
        pp = p[order[:limit]]
        if variants is None:
            X_star = np.broadcast_to(x, (limit, DIM))
        else:
            X_star = variants[best_t[rr]]
        ranks = np.arange(1, limit + 1, dtype=np.float64)
        block = _rank_update(
            model.weights[rr].copy(),
            X_star,
            pp,
            cfg.alpha,
            ranks,
            clamp=not cfg.allow_negative,
            step_sign=sign,
        )
        model.update_rows(rr, round_to_f32(block))


def train(
    X: np.ndarray,
    y: np.ndarray,
    cfg: TrainConfig,
    on_epoch=None,
) -> tuple[Model, TrainTrace]:
    """Run the growth/repulsion loop over the samples for cfg.epochs passes.

    Returns the trained model plus a per-epoch trace of online training
    error, units added and update count. Sample order is the dataset
    order unless ``shuffle_seed`` asks for a per-epoch shuffled pass.
    An empty model counts as misclassifying, which seeds growth.
    ``on_epoch(index, stats)`` is called after each pass when given.
    """
    cfg.validate()
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n_samples = X.shape[0]
    if n_samples == 0:
        raise EmptyDataset("cannot train on an empty sample set")
    bank = cfg.train_bank if cfg.train_bank is not None else identity_bank()
    identity_only = len(bank) == 1
    max_block = _MAX_BLOCK_IDENTITY if identity_only else _MAX_BLOCK_BANK
    model = Model(n_max=cfg.n_max, series_cfg=SeriesConfig(cfg.max_terms))
    rng = np.random.default_rng(cfg.shuffle_seed) if cfg.shuffle_seed is not None else None

    stats: list[EpochStats] = []
    for _epoch in range(cfg.epochs):
        order = rng.permutation(n_samples) if rng is not None else np.arange(n_samples)
        errors = added = updates = 0
        i = 0
        block = _MIN_BLOCK
        while i < n_samples:
            if len(model) == 0:
                s = order[i]
                model.add_unit(X[s], int(y[s]))
                errors += 1
                added += 1
                i += 1
                continue
            idx = order[i : i + block]
            Xb = X[idx]
            W = model.weights
            if identity_only:
                variants = None
                best_t = None
                sims = W @ Xb.T
            else:
                variants = bank.apply_all_batch(Xb)
                S = (W @ variants.reshape(-1, DIM).T).reshape(
                    len(model), idx.size, len(bank)
                )
                best_t = S.argmax(axis=2)
                sims = np.take_along_axis(S, best_t[:, :, None], axis=2)[:, :, 0]
            preds = class_scores_matrix(model, sims).argmax(axis=0)
            mutated = False
            for j in range(idx.size):
                s = idx[j]
                if preds[j] == y[s]:
                    continue
                errors += 1
                if len(model) < cfg.n_max:
                    model.add_unit(X[s], int(y[s]))
                    added += 1
                else:
                    _update_for_miss(
                        model,
                        X[s],
                        int(preds[j]),
                        int(y[s]),
                        sims[:, j],
                        best_t[:, j] if best_t is not None else None,
                        variants[j] if variants is not None else None,
                        cfg,
                    )
                    updates += 1
                # Everything after the mutation is stale; restart there.
                i += j + 1
                block = max(block // 2, _MIN_BLOCK)
                mutated = True
                break
            if not mutated:
                i += idx.size
                block = min(block * 2, max_block)
        stats.append(
            EpochStats(
                train_error=errors / n_samples,
                units_added=added,
                update_count=updates,
            )
        )
        if on_epoch is not None:
            on_epoch(_epoch, stats[-1])
    return model, TrainTrace(epochs=stats, total_units=len(model))


def serialize_model(model: Model) -> bytes:
    """Encode a model in the WFC1 binary format (weights as float32)."""
    n = len(model)
    records = np.zeros(n, dtype=_UNIT_DTYPE)
    records["label"] = model.labels
    records["v"] = model.weights.astype("<f4")
    payload = records.tobytes()
    trunc = model.series_cfg.max_terms or 0
    header = _HEADER.pack(MODEL_MAGIC, MODEL_VERSION, n, DIM, trunc)
    return header + payload + struct.pack("<I", zlib.crc32(payload))


def deserialize_model(data: bytes) -> Model:
    """Decode a WFC1 model file, verifying magic, version, length and CRC."""
    if len(data) < _HEADER.size + 4:
        raise TruncatedFile(f"model file needs >= {_HEADER.size + 4} bytes, got {len(data)}")
    magic, version, count, dim, trunc = _HEADER.unpack(data[: _HEADER.size])
    if magic != MODEL_MAGIC:
        raise BadMagic(f"expected magic {MODEL_MAGIC!r}, got {magic!r}")
    if version != MODEL_VERSION:
        raise VersionMismatch(f"unsupported model format version {version}")
    if dim != DIM:
        raise DimensionMismatch(f"expected dimension {DIM}, got {dim}")
    expected = _HEADER.size + count * _UNIT_DTYPE.itemsize + 4
    if len(data) != expected:
        raise TruncatedFile(
            f"model file length {len(data)} does not match header ({expected} bytes for {count} units)"
        )
    payload = data[_HEADER.size : -4]
    (crc,) = struct.unpack("<I", data[-4:])
    if zlib.crc32(payload) != crc:
        raise ChecksumMismatch("payload CRC32 does not match trailer")
    records = np.frombuffer(payload, dtype=_UNIT_DTYPE)
    labels = records["label"].astype(np.int64)
    if labels.size and labels.max() > 9:
        raise LabelOutOfRange(f"unit label {int(labels.max())} outside [0, 9]")
    weights = records["v"].astype(np.float64)
    return Model.from_arrays(
        weights, labels, series_cfg=SeriesConfig(trunc if trunc else None)
    )
