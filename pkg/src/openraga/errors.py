"""Exception taxonomy shared by all modules.

The CLI maps these onto exit codes: ConfigError -> 2, InputError (and its
subclasses) -> 3, NumericError -> 4.
"""


class OpenRagaError(Exception):
    """Base class for all package errors."""


class ConfigError(OpenRagaError):
    """Invalid configuration value or inconsistent option combination."""


class InputError(OpenRagaError):
    """Invalid data passed to an operation (bad lengths, empty input, ...)."""


class ShapeError(InputError):
    """Array dimensions incompatible with an operation."""


class FormatError(InputError):
    """On-disk artifact has a bad magic, version, or truncated body."""


class NumericError(OpenRagaError):
    """Non-finite value where a finite one is required."""
