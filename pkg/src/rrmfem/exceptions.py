class PreconditionError(ValueError):
    """Input violates a documented precondition (CLI exit code 2)."""


class NumericalError(RuntimeError):
    """Rank deficiency, failed factorization or similar (CLI exit code 3)."""
