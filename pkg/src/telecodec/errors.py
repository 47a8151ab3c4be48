"""Exception hierarchy shared across the package."""

from __future__ import annotations


class TelecodecError(Exception):
    """Base class for all package errors."""


class ValidationError(TelecodecError, ValueError):
    """Bad user-supplied configuration or arguments."""


class InvalidInput(TelecodecError, ValueError):
    pass


class RateMismatch(TelecodecError, ValueError):
    pass


class DegenerateRir(TelecodecError, ValueError):
    pass


class InvalidRt60(TelecodecError, ValueError):
    pass


class InsufficientDecay(TelecodecError, ValueError):
    """No usable decay region was found for RT60 estimation."""


class BandExhausted(TelecodecError, LookupError):
    """An RT60 band of the RIR pool has no candidates."""


class IoError(TelecodecError, OSError):
    def __init__(self, path, message: str = ""):
        self.path = str(path)
        super().__init__(f"{self.path}: {message}" if message else self.path)


class InputTooShort(TelecodecError, ValueError):
    pass


class ShapeError(TelecodecError, ValueError):
    pass


class InvalidStageCount(TelecodecError, ValueError):
    pass


class InvalidToken(TelecodecError, IndexError):
    pass


class NumericalDivergence(TelecodecError, ArithmeticError):
    pass


class DegenerateReference(TelecodecError, ValueError):
    pass


class DegenerateVariance(TelecodecError, ValueError):
    pass


class InsufficientSamples(TelecodecError, ValueError):
    pass
