"""Log-series class scoring over rank-sorted similarities.

A class's perception score is the truncated series

    sum_{k=1..K} (1/k) * p_(k)^k

over its unit similarities sorted descending, i.e. the partial sums of
the Mercator series for -ln(1 - p). Terms accumulate left-to-right in
64-bit floats so scores are bit-reproducible across runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError

DOMAIN_EPS = 1e-9


@dataclass(frozen=True)
class SeriesConfig:
    """Truncation point of the score series; ``None`` keeps every term."""

    max_terms: int | None = None

    def __post_init__(self):
        if self.max_terms is not None and self.max_terms < 1:
            raise ConfigError(f"max_terms must be >= 1, got {self.max_terms}")


@dataclass(frozen=True)
class ClassResponse:
    """Similarities of one class's units, sorted descending."""

    class_id: int
    sorted_p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.sorted_p, dtype=np.float64)
        object.__setattr__(self, "sorted_p", p)
        if p.size > 1 and np.any(np.diff(p) > 0):
            raise DomainError("sorted_p must be non-increasing")


def _score_sorted(p: np.ndarray, max_terms: int | None) -> float:
    # Hot path: assumes p is descending float64; similarities are clamped
    # to [0, 1] (unit-norm tolerance admits values like 1 + 2e-7).
    m = p.shape[0] if max_terms is None else min(p.shape[0], max_terms)
    if m == 0:
        return 0.0
    q = np.clip(p[:m], 0.0, 1.0)
    k = np.arange(1, m + 1, dtype=np.float64)
    terms = q**k / k
    return float(np.cumsum(terms)[-1])


def _score_sorted_columns(P: np.ndarray, max_terms: int | None) -> np.ndarray:
    """Column-wise _score_sorted for a (K, B) matrix, descending along axis 0."""
    m = P.shape[0] if max_terms is None else min(P.shape[0], max_terms)
    if m == 0:
        return np.zeros(P.shape[1])
    Q = np.clip(P[:m], 0.0, 1.0)
    k = np.arange(1, m + 1, dtype=np.float64)
    terms = Q ** k[:, None] / k[:, None]
    return np.cumsum(terms, axis=0)[-1]


def score(response: ClassResponse, cfg: SeriesConfig = SeriesConfig()) -> float:
    """Evaluate the log-series score of one class response.

    Similarities must lie in [-eps, 1 + eps] with eps = 1e-9 (anything
    further out signals an unnormalized input upstream and raises
    DomainError); values inside the tolerance are clamped to [0, 1].
    """
    p = response.sorted_p
    if p.size and (p.min() < -DOMAIN_EPS or p.max() > 1.0 + DOMAIN_EPS):
        raise DomainError(
            f"similarity outside [0, 1] tolerance: min={p.min()}, max={p.max()}"
        )
    return _score_sorted(p, cfg.max_terms)


def log_series_reference(p: float, terms: int) -> float:
    """Partial Mercator sum for -ln(1 - p); a slow, independent oracle.

    Valid for 0 <= p < 1, where the series converges.
    """
    if not 0.0 <= p < 1.0:
        raise DomainError(f"p must be in [0, 1), got {p}")
    total = 0.0
    power = 1.0
    for k in range(1, terms + 1):
        power *= p
        total += power / k
    return total
