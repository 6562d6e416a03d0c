"""Exception hierarchy for the doubletower package."""


class DoubleTowerError(Exception):
    """Base class for every error raised by this package."""


class DimensionTooSmall(DoubleTowerError, ValueError):
    pass


class FlatnessOutOfRange(DoubleTowerError, ValueError):
    pass


class NonPositive(DoubleTowerError, ValueError):
    pass


class BadIndex(DoubleTowerError, IndexError):
    pass


class IndexOutOfRange(DoubleTowerError, IndexError):
    pass


class GridTooCoarse(DoubleTowerError, ValueError):
    pass


class DegenerateHeight(DoubleTowerError, ValueError):
    pass


class DegenerateExponent(DoubleTowerError, ValueError):
    pass


class DegenerateFlat(DoubleTowerError, ValueError):
    """Raised when c0 = 0 makes a quantity undefined."""


class NonIntegrable(DoubleTowerError, ValueError):
    pass


class BadStart(DoubleTowerError, ValueError):
    pass


class EmptyGrid(DoubleTowerError, ValueError):
    pass


class InsufficientRange(DoubleTowerError, ValueError):
    pass


class QuadratureFailure(DoubleTowerError, RuntimeError):
    pass


class SamplerDegenerate(DoubleTowerError, RuntimeError):
    pass
