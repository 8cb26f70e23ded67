"""Error taxonomy: usage problems vs data problems, for CLI exit codes."""


class ExtractError(Exception):
    """Base class for everything this package raises on purpose."""


class SpecError(ExtractError):
    """Bad configuration: unknown backbone, invalid dims, bad flags."""


class DataError(ExtractError):
    """Bad inputs: unreadable list file, duplicate clip ids, no usable clips."""
