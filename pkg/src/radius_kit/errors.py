"""Exception hierarchy.

Two families: :class:`InputError` for bad instances/arguments (CLI exit
code 2) and :class:`NumericalError` for solver-side failures (exit code 3).
"""


class RadiusKitError(Exception):
    exit_code = 1


class InputError(RadiusKitError, ValueError):
    exit_code = 2


class NumericalError(RadiusKitError, ArithmeticError):
    exit_code = 3


class InvalidInstance(InputError):
    pass


class RankDeficient(InputError):
    pass


class UnsupportedNorm(InputError):
    pass


class TooManyFacets(InputError):
    pass


class InvalidEpsilon(InputError):
    pass


class DimensionTooLarge(InputError):
    pass


class SingularNormalEquations(NumericalError):
    pass


class Infeasible(NumericalError):
    pass


class Unbounded(NumericalError):
    pass


class EmptyCylinder(NumericalError):
    pass


class EmptyH(NumericalError):
    pass


class InfeasibleIntersection(NumericalError):
    pass


class NumericalFailure(NumericalError):
    """Solver breakdown; ``iterate`` carries the last iterate for inspection."""

    def __init__(self, message, iterate=None):
        super().__init__(message)
        self.iterate = iterate
