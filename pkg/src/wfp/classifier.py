"""Per-class log-series scoring and argmax prediction over a unit model.

A model is an ordered set of labeled unit-norm prototype vectors. For an
input x, every unit contributes its (transform-max) similarity; each
class sorts its units' similarities descending and scores them with the
log series; the predicted label is the argmax over class scores, ties
broken by the lowest class index. Classes with no units score 0, which
lets the trainer classify against a half-grown model.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyDataset, EmptyModel
from .perception import SeriesConfig, _score_sorted, _score_sorted_columns
from .transforms import DIM, TransformBank, identity_bank

CLASS_COUNT = 10


@dataclass(frozen=True)
class Unit:
    """One labeled prototype: unit-norm weight vector plus insertion id."""

    v: np.ndarray
    label: int
    id: int


class Model:
    """Ordered collection of units with a fixed capacity.

    Weights live in a preallocated (n_max, 784) float64 matrix so the
    trainer can grow and update units in place; readers use the
    ``weights`` / ``labels`` views which cover only the populated rows.
    The trainer owns a model exclusively while mutating it; afterwards it
    is safe to share read-only between threads.
    """

    def __init__(
        self,
        n_max: int,
        series_cfg: SeriesConfig = SeriesConfig(),
        class_count: int = CLASS_COUNT,
    ):
        if n_max < 0:
            raise ValueError(f"n_max must be >= 0, got {n_max}")
        self.n_max = n_max
        self.series_cfg = series_cfg
        self.class_count = class_count
        self._weights = np.zeros((n_max, DIM))
        self._labels = np.zeros(n_max, dtype=np.int64)
        self._count = 0
        self._class_lists: list[list[int]] = [[] for _ in range(class_count)]
        self._class_cache: dict[int, np.ndarray] = {}

    def __len__(self) -> int:
        return self._count

    @property
    def weights(self) -> np.ndarray:
        return self._weights[: self._count]

    @property
    def labels(self) -> np.ndarray:
        return self._labels[: self._count]

    @property
    def units(self) -> list[Unit]:
        return [
            Unit(v=self._weights[i], label=int(self._labels[i]), id=i)
            for i in range(self._count)
        ]

    def class_rows(self, class_id: int) -> np.ndarray:
        """Row indices of the units labeled ``class_id``, insertion order."""
        cached = self._class_cache.get(class_id)
        if cached is None:
            cached = np.asarray(self._class_lists[class_id], dtype=np.int64)
            self._class_cache[class_id] = cached
        return cached

    def add_unit(self, x: np.ndarray, label: int) -> int:
        """Append a verbatim copy of ``x`` as a new unit; returns its row."""
        if self._count >= self.n_max:
            raise ValueError(f"model is at capacity ({self.n_max})")
        row = self._count
        self._weights[row] = x
        self._labels[row] = label
        self._class_lists[label].append(row)
        self._class_cache.pop(label, None)
        self._count += 1
        return row

    def update_rows(self, rows: np.ndarray, values: np.ndarray) -> None:
        """Overwrite the weight vectors at ``rows`` (trainer use only)."""
        self._weights[rows] = values

    @classmethod
    def from_arrays(
        cls,
        weights: np.ndarray,
        labels: np.ndarray,
        n_max: int | None = None,
        series_cfg: SeriesConfig = SeriesConfig(),
    ) -> "Model":
        weights = np.asarray(weights, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.int64)
        count = weights.shape[0]
        model = cls(n_max=count if n_max is None else n_max, series_cfg=series_cfg)
        for i in range(count):
            model.add_unit(weights[i], int(labels[i]))
        return model


@dataclass(frozen=True)
class Classification:
    """Full output of one classification, including per-class rankings.

    ``sorted_p[i]`` holds class i's unit similarities descending and
    ``sorted_rows[i]`` the matching model row indices — the trainer reads
    a unit's update rank straight from these. ``best_transform`` gives,
    per model row, the bank index achieving that unit's max similarity
    (all zeros for the identity bank).
    """

    predicted: int
    scores: np.ndarray
    sorted_p: list[np.ndarray] = field(repr=False)
    sorted_rows: list[np.ndarray] = field(repr=False)
    best_transform: np.ndarray = field(repr=False)


def _unit_similarities(
    model: Model, x: np.ndarray, bank: TransformBank
) -> tuple[np.ndarray, np.ndarray]:
    """Per-unit transform-max similarity and argmax transform index."""
    if len(bank) == 1:
        sims = model.weights @ x
        return sims, np.zeros(len(model), dtype=np.int64)
    variants = bank.apply_all(x)
    S = model.weights @ variants.T
    best_t = S.argmax(axis=1)
    sims = np.take_along_axis(S, best_t[:, None], axis=1)[:, 0]
    return sims, best_t


def classify_from_sims(
    model: Model, sims: np.ndarray, best_t: np.ndarray
) -> Classification:
    """Build a Classification from precomputed per-unit similarities."""
    max_terms = model.series_cfg.max_terms
    scores = np.empty(model.class_count)
    sorted_p: list[np.ndarray] = []
    sorted_rows: list[np.ndarray] = []
    for i in range(model.class_count):
        rows = model.class_rows(i)
        p = sims[rows]
        order = np.argsort(-p, kind="stable")
        ps = p[order]
        sorted_p.append(ps)
        sorted_rows.append(rows[order])
        scores[i] = _score_sorted(ps, max_terms)
    return Classification(
        predicted=int(np.argmax(scores)),
        scores=scores,
        sorted_p=sorted_p,
        sorted_rows=sorted_rows,
        best_transform=best_t,
    )


def classify(model: Model, x: np.ndarray, bank: TransformBank | None = None) -> Classification:
    """Score every class for ``x`` and return the argmax label.

    Ties go to the lowest class index; classes without units score 0.
    Raises EmptyModel when the model has no units at all.
    """
    if len(model) == 0:
        raise EmptyModel("cannot classify with zero units")
    x = np.asarray(x, dtype=np.float64)
    bank = bank if bank is not None else identity_bank()
    sims, best_t = _unit_similarities(model, x, bank)
    return classify_from_sims(model, sims, best_t)


def class_scores_matrix(model: Model, sims: np.ndarray) -> np.ndarray:
    """Class scores for a block of samples; ``sims`` is (units, B).

    Shared by batched prediction and the trainer's block loop so both
    paths score identically.
    """
    max_terms = model.series_cfg.max_terms
    B = sims.shape[1]
    scores = np.zeros((model.class_count, B))
    for i in range(model.class_count):
        rows = model.class_rows(i)
        if rows.size == 0:
            continue
        P = np.sort(sims[rows], axis=0)[::-1]
        scores[i] = _score_sorted_columns(P, max_terms)
    return scores


def predict(
    model: Model,
    X: np.ndarray,
    bank: TransformBank | None = None,
    batch_size: int = 64,
) -> np.ndarray:
    """Predicted labels for a (N, 784) sample matrix, batched."""
    if len(model) == 0:
        raise EmptyModel("cannot classify with zero units")
    X = np.asarray(X, dtype=np.float64)
    bank = bank if bank is not None else identity_bank()
    W = model.weights
    T = len(bank)
    out = np.empty(X.shape[0], dtype=np.int64)
    for start in range(0, X.shape[0], batch_size):
        Xb = X[start : start + batch_size]
        if T == 1:
            sims = W @ Xb.T
        else:
            variants = bank.apply_all_batch(Xb)
            S = W @ variants.reshape(-1, DIM).T
            sims = S.reshape(len(model), Xb.shape[0], T).max(axis=2)
        scores = class_scores_matrix(model, sims)
        out[start : start + Xb.shape[0]] = scores.argmax(axis=0)
    return out


def evaluate(
    model: Model,
    X: np.ndarray,
    y: np.ndarray,
    bank: TransformBank | None = None,
    batch_size: int = 64,
) -> float:
    """Fraction of samples misclassified; deterministic for fixed inputs."""
    if len(model) == 0:
        raise EmptyModel("cannot evaluate with zero units")
    if len(X) == 0:
        raise EmptyDataset("cannot evaluate on an empty sample set")
    preds = predict(model, X, bank, batch_size=batch_size)
    return float(np.mean(preds != np.asarray(y)))


def confusion_matrix(
    model: Model,
    X: np.ndarray,
    y: np.ndarray,
    bank: TransformBank | None = None,
    batch_size: int = 64,
) -> np.ndarray:
    """(true, predicted) count matrix over the sample set, shape (10, 10)."""
    if len(model) == 0:
        raise EmptyModel("cannot evaluate with zero units")
    if len(X) == 0:
        raise EmptyDataset("cannot evaluate on an empty sample set")
    preds = predict(model, X, bank, batch_size=batch_size)
    cm = np.zeros((model.class_count, model.class_count), dtype=np.int64)
    np.add.at(cm, (np.asarray(y, dtype=np.int64), preds), 1)
    return cm
