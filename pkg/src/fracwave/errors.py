"""Exception types raised by the solvers and the optimizer."""


class FracwaveError(Exception):
    """Base class for all package errors."""


class DomainError(FracwaveError, ValueError):
    """An argument lies outside the domain of the operation."""


class PreconditionError(FracwaveError, ValueError):
    """Input data violates a documented precondition."""


class CompatibilityError(PreconditionError):
    """Boundary data does not satisfy g(0) = 0 and g_t(0) = 0."""


class AssemblyError(FracwaveError):
    pass


class NumericalBlowup(FracwaveError, ArithmeticError):
    """A trajectory produced a non-finite value."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class NonDegeneracyViolation(FracwaveError):
    """The leading coefficient left the admissible band [a_lower, a_upper].

    ``location`` is ``(x, t)`` of the worst offending node and
    ``max_2kp`` the largest value of ``|2 k p|`` seen, when known.
    """

    def __init__(self, message, location=None, value=None, max_2kp=None):
        super().__init__(message)
        self.location = location
        self.value = value
        self.max_2kp = max_2kp


class FixedPointDivergence(FracwaveError):
    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])


class LineSearchStall(FracwaveError):
    """Armijo backtracking failed; ``state`` holds the last accepted iterate."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class ConfigError(FracwaveError):
    def __init__(self, message, key=None, line=None):
        super().__init__(message)
        self.key = key
        self.line = line
