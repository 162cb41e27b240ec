"""Exception types shared across the package.

Each class carries the process exit code the command-line tool uses when the
error escapes a subcommand.
"""


class GazePredError(Exception):
    exit_code = 1


class ConfigError(GazePredError, ValueError):
    exit_code = 2


class FormatError(GazePredError, ValueError):
    """Malformed file contents (bad header, truncated checkpoint, ...)."""

    exit_code = 3


class DataError(GazePredError, ValueError):
    exit_code = 3


class ShapeError(GazePredError, ValueError):
    exit_code = 2


class NumericError(GazePredError, ArithmeticError):
    exit_code = 4


class IOFailure(GazePredError, OSError):
    exit_code = 5
