"""Exception hierarchy shared by all modules."""


class VortexError(Exception):
    """Base class for errors raised by vortexeq."""


class InvalidInputError(VortexError, ValueError):
    """An argument violates a documented precondition on its value or shape."""


class SingularityError(VortexError, ArithmeticError):
    """Evaluation requested at (or too close to) a coincident pair of points."""


class PreconditionError(VortexError):
    """An operation was called in a state it does not accept."""


class CapacityError(VortexError):
    """The requested problem size exceeds what the enumeration supports."""


class ConditionFailure(PreconditionError):
    """The non-resonance condition on the vortex strengths fails.

    ``subset`` holds the 1-based indices of the resonant subset and ``value``
    the pairwise product sum over it.
    """

    def __init__(self, message, subset=(), value=0.0):
        super().__init__(message)
        self.subset = tuple(subset)
        self.value = float(value)
