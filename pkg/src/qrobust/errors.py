"""Exception hierarchy shared by all qrobust modules."""


class QRobustError(Exception):
    """Base class for errors raised by qrobust."""


class ValidationError(QRobustError, ValueError):
    """An input violates a documented precondition."""


class NumericalError(QRobustError, ArithmeticError):
    """A numerical routine failed (e.g. an eigensolver did not converge)."""


class BudgetExhausted(QRobustError):
    """The evaluation budget cannot cover the requested call."""

    def __init__(self, requested, remaining):
        super().__init__(
            f"budget exhausted: call costs {requested}, {remaining} remaining"
        )
        self.requested = requested
        self.remaining = remaining


class DegenerateTauError(QRobustError):
    """Kendall tau denominator vanishes because one side is fully tied."""


class SchemaVersionError(ValidationError):
    """Persisted results were written with an incompatible schema version."""
