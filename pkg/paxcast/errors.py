"""
Exception hierarchy shared by every paxcast module.

DataError covers problems with the input or with the order in which things
are called; NumericalError covers fits that cannot be computed. The command
line maps the two families onto distinct exit codes.
"""
from __future__ import annotations


class PaxcastError(Exception):
    """Base class for all paxcast errors"""

    exit_code = 1


class ConfigError(PaxcastError):
    """Invalid or inconsistent run configuration"""

    exit_code = 2


class DataError(PaxcastError, ValueError):
    """Input data cannot be used as given"""

    exit_code = 3


class NumericalError(PaxcastError, ArithmeticError):
    """A numerical procedure failed"""

    exit_code = 4


class SchemaError(DataError):
    pass


class EmptyInputError(DataError):
    pass


class UnrecoverableGapError(DataError):
    pass


class InsufficientDataError(DataError):
    pass


class DegenerateSeriesError(DataError):
    """Zero-variance series or sample"""


class EmptySelectionError(DataError):
    pass


class InsufficientHistoryError(DataError):
    pass


class SequencingError(DataError):
    pass


class ProtocolError(DataError):
    """Train/test protocol violated"""


class InvalidInputError(DataError):
    pass


class RankDeficiencyError(NumericalError):
    def __init__(self, lags, rank=None, columns=None):
        self.lags = tuple(lags)
        msg = f"singular design for lag set {list(self.lags)}"
        if rank is not None:
            msg += f" (rank {rank} < {columns} columns)"
        super().__init__(msg)


class NoViableOrderError(NumericalError):
    pass


class UndertrainedClassError(NumericalError):
    pass
