"""Exception hierarchy shared by every module."""


class PairspecError(Exception):
    """Base class for all library errors."""


class InputError(PairspecError, ValueError):
    """An argument cannot be used at all (wrong type, not evaluable)."""


class EvaluationError(PairspecError, ArithmeticError):
    """A user-supplied function returned NaN or infinity."""

    def __init__(self, message, where=None):
        super().__init__(message)
        self.where = where


class DivergenceError(PairspecError, ArithmeticError):
    """An integral failed to settle under refinement of its domain."""


class DomainError(PairspecError, ValueError):
    """The point of evaluation lies outside the admissible domain."""


class RegimeError(PairspecError, ValueError):
    """The coupling is outside the regime an operation is defined for."""


class NumericError(PairspecError, ArithmeticError):
    """A numerical procedure did not converge.

    ``values`` keeps whatever partial results are useful for diagnosis.
    """

    def __init__(self, message, values=None):
        super().__init__(message)
        self.values = dict(values or {})


class DimensionError(PairspecError, ValueError):
    """A truncated Fock space would exceed the configured size cap."""


class ConfigError(PairspecError, ValueError):
    """A run configuration failed validation.

    ``paths`` lists every offending dotted key, e.g. ``quadrature.rel_tol``.
    """

    def __init__(self, problems):
        self.problems = list(problems)
        self.paths = [p for p, _ in self.problems]
        text = "; ".join(f"{p}: {why}" for p, why in self.problems)
        super().__init__(text)
