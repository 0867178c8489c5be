"""Exception types shared across the toolkit.

The CLI maps these onto process exit codes: configuration and input-format
problems exit 1, numerical failures mid-run exit 2.  Bound violations found
by the verification commands are not exceptions; they are reported results
(exit 3 at the CLI level).
"""


class ToolkitError(Exception):
    """Base class for all toolkit-specific errors."""


class ConfigError(ToolkitError):
    """Invalid configuration value, flag combination, or argument domain."""


class DimensionError(ToolkitError):
    """Operand shapes do not conform."""


class DataFormatError(ToolkitError):
    """A serialized file or byte stream violates its format contract."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class NumericalError(ToolkitError):
    """A NaN or infinity appeared where the contract requires finite values."""
