"""Exception hierarchy shared by the library and the CLI."""

from typing import Optional


class FpldError(Exception):
    """Base class for all fpld errors."""


class ModelValidationError(FpldError, ValueError):
    """Invalid model/prior specification. `pointer` is an RFC 6901 JSON pointer."""

    def __init__(self, message: str, pointer: str = ""):
        self.pointer = pointer
        super().__init__(f"{message} (at {pointer or '/'})")


class BudgetExceededError(FpldError):
    """A computation would exceed its enumeration or size budget."""

    def __init__(self, budget: str, requested: float, limit: float, detail: Optional[str] = None):
        self.budget = budget
        self.requested = requested
        self.limit = limit
        message = f"{budget} budget exceeded: requested {requested:g}, limit {limit:g}"
        if detail:
            message = f"{message} ({detail})"
        super().__init__(message)


class DegreeCapError(BudgetExceededError):
    """Moment degree above the configured cap."""

    def __init__(self, degree: int, cap: int):
        super().__init__("moment degree", degree, cap)


class DomainError(FpldError, ValueError):
    """Argument outside the domain of an operation (zero mass, t = 0, empty class)."""


class NumericalError(FpldError, ArithmeticError):
    """Numerical breakdown: indefinite Gram matrix, non-positive denominator."""
