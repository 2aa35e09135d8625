"""Exception hierarchy shared by every dropescape module.

The CLI maps these onto exit codes (see ``dropescape.cli``):
usage and config problems exit 1, data problems exit 2.
"""


class DropescapeError(Exception):
    """Base class for all library errors."""


# ---------------------- argument / parameter errors ----------------------
class ParameterError(DropescapeError, ValueError):
    pass


class DimensionError(DropescapeError, ValueError):
    pass


class LabelError(DropescapeError, ValueError):
    pass


class SizeError(DropescapeError, ValueError):
    pass


class InputError(DropescapeError, ValueError):
    pass


class ConfigError(DropescapeError, ValueError):
    pass


# ---------------------- data errors ----------------------
class DataError(DropescapeError):
    pass


class InsufficientDataError(DataError):
    pass


class DegenerateDataError(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


# ---------------------- numerical errors ----------------------
class ConvergenceError(DropescapeError):
    def __init__(self, message, residual=None):
        self.residual = residual
        if residual is not None:
            message = f"{message} (final residual {residual:.3e})"
        super().__init__(message)
