"""Exception types shared across the package."""


class PosefieldError(Exception):
    """Base class for all package-specific errors."""


class ShapeError(PosefieldError, ValueError):
    """Operand shapes are incompatible for the requested operation."""


class ContractError(PosefieldError, RuntimeError):
    """A caller violated a documented precondition."""


class RangeError(PosefieldError, ValueError):
    """A coordinate lies outside the range it must stay within."""


class OptimizerError(PosefieldError, RuntimeError):
    """The optimizer saw a non-finite gradient or invalid state."""


class DeterminismError(PosefieldError, RuntimeError):
    """Two evaluations that must agree produced different values."""


class ConfigError(PosefieldError, ValueError):
    """A configuration file or option set is invalid."""


class FormatError(PosefieldError, ValueError):
    """A file on disk has an unknown or unsupported format version."""


class CorruptionError(PosefieldError, ValueError):
    """A file on disk failed a checksum or structural integrity check."""


class IncompatibleError(PosefieldError, ValueError):
    """A checkpoint and a dataset (or config) do not fit together."""


class TrainingDiverged(PosefieldError, RuntimeError):
    """Training hit a non-finite loss; the last good checkpoint survives."""
