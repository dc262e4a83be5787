"""Exception types shared across the package."""


class WfpError(Exception):
    """Base class for all package errors."""


class BadMagic(WfpError):
    """A binary container did not start with the expected magic word."""


class TruncatedFile(WfpError):
    """A binary container holds fewer bytes than its header promises."""


class DimensionMismatch(WfpError):
    """Tensor dimensions disagree with the 28x28 / 784 contract."""


class LabelOutOfRange(WfpError):
    """A class label falls outside [0, 9]."""


class ZeroVector(WfpError):
    """An all-zero image cannot be projected onto the unit ball."""


class SpecOutOfRange(WfpError):
    """A transform specification exceeds the supported shift/rotation range."""


class DomainError(WfpError):
    """A numeric argument falls outside the operation's domain."""


class EmptyModel(WfpError):
    """Classification was requested against a model with no units."""


class EmptyDataset(WfpError):
    """Evaluation was requested on an empty sample set."""


class ConfigError(WfpError):
    """A training configuration violates its invariants."""


class VersionMismatch(WfpError):
    """A model file was written by an unsupported format version."""


class ChecksumMismatch(WfpError):
    """A model file's payload does not match its trailing CRC32."""
