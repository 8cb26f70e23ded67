"""steprobe: temporal probing toolkit for frozen per-frame video features."""

from .errors import (
    BadMagicError,
    ChecksumError,
    ConfigError,
    ContractError,
    DimensionError,
    FormatError,
    ManifestError,
    NumericError,
    StepProbeError,
    TruncatedPayloadError,
    VersionMismatchError,
)
__version__ = "0.1.0"

# Tensor machinery re-exports are lazy so that `import steprobe` does not pull
# in numpy. The CLI relies on this: BLAS thread caps from --threads must land
# in the environment before numpy first loads.
_TENSOR_EXPORTS = ("Tape", "Tensor", "backward", "zero_grads")


def __getattr__(name):
    if name in _TENSOR_EXPORTS:
        from . import tensor

        return getattr(tensor, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")

__all__ = [
    "Tape",
    "Tensor",
    "backward",
    "zero_grads",
    "StepProbeError",
    "DimensionError",
    "ContractError",
    "NumericError",
    "ConfigError",
    "FormatError",
    "BadMagicError",
    "VersionMismatchError",
    "TruncatedPayloadError",
    "ChecksumError",
    "ManifestError",
    "__version__",
]
