"""Exception types shared across the package.

Each class carries an ``exit_code`` used by the command-line front end:
2 for configuration problems, 3 for bad input data, 4 for numerical failures.
"""


class CMCError(Exception):
    """Base class for all package errors."""

    exit_code = 4


class ConfigError(CMCError):
    exit_code = 2


class DataError(CMCError):
    exit_code = 3


class MalformedFile(DataError):
    """A scenario or parameter file could not be parsed."""

    def __init__(self, message, offset=None, line=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"offset {offset}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.offset = offset
        self.line = line


class UnknownFirm(DataError):
    pass


class DegenerateTendency(CMCError):
    """Conditioning on a tendency outcome that has probability zero."""


class TooLarge(CMCError):
    """Brute-force enumeration requested beyond its size guard."""


class EmptyRow(CMCError):
    """A non-default class has no outgoing transitions in the data."""


class Infeasible(CMCError):
    pass


class InfeasibleBounds(Infeasible):
    """Weight bounds cannot satisfy the budget constraint."""


class Unbounded(CMCError):
    pass


class NoBracket(CMCError):
    """Fair-spread root cannot be bracketed."""


class CurveTooShort(CMCError):
    pass


class InvalidParams(DataError):
    """Model parameters failed validation."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))
