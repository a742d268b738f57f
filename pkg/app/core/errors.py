"""
app/core/errors.py
Exception hierarchy shared by the services, the CLI (exit codes) and the API (status codes)
"""

from typing import List, Optional

from fastapi import HTTPException


class AnalysisError(Exception):
    """Base class for every failure the analysis pipeline reports on purpose"""
    exit_code: int = 4
    status_code: int = 422


# Configuration / input range problems (exit 2)
class ConfigError(AnalysisError):
    exit_code = 2
    status_code = 400


class InvalidSpecError(ConfigError):
    pass


class WindowOutOfRangeError(ConfigError):
    pass


class AspectRatioError(ConfigError):
    pass


class EmptyGridError(ConfigError):
    pass


class InsufficientDataError(ConfigError):
    pass


# File system problems (exit 3)
class DataIOError(AnalysisError):
    exit_code = 3
    status_code = 500


# Numerical failures (exit 4)
class NumericalError(AnalysisError):
    exit_code = 4
    status_code = 422


class DegenerateRowError(NumericalError):
    def __init__(self, rows: List[int], message: Optional[str] = None):
        self.rows = list(rows)
        super().__init__(message or f"Constant rows (zero standard deviation): {self.rows}")


class DegenerateCoefficientsError(NumericalError):
    pass


class BranchPointError(NumericalError):
    pass


class BinMismatchError(NumericalError):
    pass


class RankDeficientError(NumericalError):
    pass


class DomainError(NumericalError):
    pass


class ShapeMismatchError(NumericalError):
    pass


# Malformed input data, reported as invalid input (exit 2)
class DataParseError(AnalysisError):
    exit_code = 2
    status_code = 400


class MissingDataError(DataParseError):
    pass


def to_http_exception(exc: AnalysisError) -> HTTPException:
    """HTTPException carrying the error's status code and message"""
    return HTTPException(status_code=exc.status_code, detail=f"{type(exc).__name__}: {exc}")
