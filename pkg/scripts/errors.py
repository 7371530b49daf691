"""
TEM Codec - Error Types
=======================
Exception hierarchy shared by the codec modules and the command-line front end.

The CLI maps these onto exit codes:
    DataError       -> 2  (malformed files, missing metadata, bad parameters)
    NumericalError  -> 3  (quadrature or factorisation failures)
"""

from typing import Optional


class TemCodecError(Exception):
    """Base class for all codec errors."""


class DataError(TemCodecError, ValueError):
    """Input data or parameters cannot be used."""


class NumericalError(TemCodecError, ArithmeticError):
    """
    A numerical routine failed to reach its accuracy target.

    Args:
        message: Human-readable description
        estimate: Best value reached before giving up (if any)
    """

    def __init__(self, message: str, estimate: Optional[float] = None):
        super().__init__(message)
        self.estimate = estimate
