"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of a formula."""


class PreconditionError(ValueError):
    """Inputs violate a documented precondition (dimensions, budgets, feasibility)."""


class StateError(RuntimeError):
    """An object is used before a required field has been populated."""


class NumericError(ArithmeticError):
    """A numerical routine failed (singular system, non-finite objective, no bracket).

    ``trace`` carries the partial :class:`~cellfree_wsr.trace.SolveTrace` when the
    failure happens inside an iterative solver.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class FormatError(ValueError):
    """A channel file is malformed."""
