"""Exception hierarchy.

Two families exist so that front ends can map failures onto exit codes:
``ConfigurationError`` (bad inputs, exit 2) and ``NumericalFailure``
(the computation itself broke down, exit 1).
"""


class ShapeMechError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(ShapeMechError, ValueError):
    pass


class NumericalFailure(ShapeMechError, ArithmeticError):
    pass


class InvalidMasses(ConfigurationError):
    pass


class MissingVelocities(ConfigurationError):
    pass


class SchemaError(ConfigurationError):
    pass


class ScenarioError(ConfigurationError):
    pass


class NotSupported(ConfigurationError):
    pass


class GridMismatch(ConfigurationError):
    pass


class UndefinedShape(NumericalFailure):
    """The triangle is the triple collision, so its shape is undefined."""


class BinaryCollision(NumericalFailure):
    def __init__(self, pair, message=None):
        self.pair = tuple(pair)
        super().__init__(message or f"binary collision between bodies {self.pair}")


class ChartSingularity(NumericalFailure):
    """Point lies inside the polar cap of a spherical chart."""


class CollisionApproach(NumericalFailure):
    """Integration stopped because two bodies came closer than the cutoff.

    ``partial`` holds whatever was integrated before the stop.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class StepSizeUnderflow(NumericalFailure):
    pass


class ConeVertex(NumericalFailure):
    """The hyperradius reached zero (vertex of the moduli cone)."""


class InadmissibleLevel(NumericalFailure):
    pass


class InconsistentLevel(InadmissibleLevel):
    """State does not satisfy the energy integral of its declared level."""


class OutsideHillRegion(NumericalFailure):
    pass


class InsufficientSamples(NumericalFailure):
    pass


class DegenerateCurve(NumericalFailure):
    pass


class ExceptionalShape(NumericalFailure):
    """Shape curve lies on a geodesic arc; the Siegel function is undefined."""


class Inadmissible(NumericalFailure):
    def __init__(self, message, index=None):
        super().__init__(message if index is None else f"{message} (sample {index})")
        self.index = index


class GapTooLong(NumericalFailure):
    def __init__(self, message, start=None, length=None):
        super().__init__(message)
        self.start = start
        self.length = length


class NotIdentifiable(NumericalFailure):
    """The requested quantity is not determined by the supplied data."""
