"""Exception types shared across the toolkit.

Binary-format errors are split into distinct classes so callers (and the CLI
exit-code mapping) can tell a wrong file apart from a damaged one.
"""


class StepProbeError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(StepProbeError, ValueError):
    """Shape mismatch between operands; message names both shapes."""


class ContractError(StepProbeError, ValueError):
    """A documented precondition was violated (non-scalar loss, empty split, ...)."""


class NumericError(StepProbeError, ArithmeticError):
    """NaN/Inf encountered where finite values are required."""


class ConfigError(StepProbeError, ValueError):
    """Invalid or inconsistent configuration."""


class FormatError(StepProbeError):
    """Base class for binary/text container format violations."""


class BadMagicError(FormatError):
    """File does not start with the expected magic bytes."""


class VersionMismatchError(FormatError):
    """Container version is not supported by this reader."""


class TruncatedPayloadError(FormatError):
    """File length does not match the length implied by the header."""


class ChecksumError(FormatError):
    """Payload CRC-32 does not match the stored checksum."""


class ManifestError(StepProbeError, ValueError):
    """Malformed manifest or pair list (unknown class, duplicate clip, overlap)."""
