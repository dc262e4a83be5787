"""Prototype classifier with log-series perception scoring.

Labeled unit-norm prototypes score each class through the series
sum((1/k) * p_(k)^k) of their rank-sorted similarities — the partial
sums of -ln(1 - p) — optionally maximizing similarity over a bank of
pixel shifts and small rotations. Training grows the prototype set
greedily from misclassified samples and then repels wrongly-predicted
classes with rank-scaled steps.
"""

from .classifier import (
    Classification,
    Model,
    Unit,
    classify,
    confusion_matrix,
    evaluate,
    predict,
)
from .dataset import (
    Sample,
    load_dataset,
    load_images,
    load_labels,
    normalize,
    normalize_batch,
    parse_idx_images,
    parse_idx_labels,
)
from .perception import ClassResponse, SeriesConfig, log_series_reference, score
from .trainer import (
    EpochStats,
    TrainConfig,
    TrainTrace,
    deserialize_model,
    serialize_model,
    train,
    update_units,
)
from .transforms import (
    Transform,
    TransformBank,
    TransformSpec,
    apply,
    build_bank,
    identity_bank,
    max_similarity,
)

__version__ = "0.1.0"

__all__ = [
    "Classification",
    "ClassResponse",
    "EpochStats",
    "Model",
    "Sample",
    "SeriesConfig",
    "TrainConfig",
    "TrainTrace",
    "Transform",
    "TransformBank",
    "TransformSpec",
    "Unit",
    "apply",
    "build_bank",
    "classify",
    "confusion_matrix",
    "deserialize_model",
    "evaluate",
    "identity_bank",
    "load_dataset",
    "load_images",
    "load_labels",
    "log_series_reference",
    "max_similarity",
    "normalize",
    "normalize_batch",
    "parse_idx_images",
    "parse_idx_labels",
    "predict",
    "score",
    "serialize_model",
    "train",
    "update_units",
    "__version__",
]
