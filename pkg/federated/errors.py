# federated/errors.py
from typing import Optional


class FedSimError(Exception):
    """Root of all simulator errors."""


class InvalidInputError(FedSimError, ValueError):
    pass


class DataError(FedSimError, ValueError):
    pass


class DegenerateInputError(FedSimError, ValueError):
    pass


class InvalidSelectionError(FedSimError, ValueError):
    pass


class InvalidConfigError(FedSimError, ValueError):
    pass


class AccountingError(FedSimError, RuntimeError):
    pass


class DivergenceError(FedSimError, RuntimeError):
    """Raised when an iterate or estimate stops being finite.

    Carries the trace recorded up to (and excluding) the failing iteration.
    """

    def __init__(self, message: str, trace=None, iteration: Optional[int] = None):
        super().__init__(message)
        self.trace = trace
        self.iteration = iteration
