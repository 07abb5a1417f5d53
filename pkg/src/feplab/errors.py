"""Exception hierarchy shared by every feplab module."""


class FeplabError(Exception):
    """Base class for all library errors."""


class PartitionError(FeplabError, ValueError):
    pass


class OverlappingSets(PartitionError):
    pass


class IncompleteCover(PartitionError):
    pass


class EmptyRole(PartitionError):
    pass


class NumericalBlowup(FeplabError):
    """State norm exceeded the blow-up threshold during integration."""

    def __init__(self, message, step=None, trajectory=None):
        super().__init__(message)
        self.step = step
        self.trajectory = trajectory


class InsufficientSamples(FeplabError, ValueError):
    pass


class NotHurwitz(FeplabError):
    pass


class IllConditioned(FeplabError):
    pass


class NotPositiveDefinite(FeplabError, ValueError):
    pass


class GridTooCoarse(FeplabError, ValueError):
    pass


class DimensionTooHigh(FeplabError, ValueError):
    pass


class SingularCovariance(FeplabError):
    pass


class AntisymmetryViolation(FeplabError):
    pass


class BlanketViolated(FeplabError):
    pass


class SingularBlock(FeplabError):
    pass


class SingularBlanketBlock(SingularBlock):
    pass


class NonInjective(FeplabError):
    pass


class SupportMismatch(FeplabError, ValueError):
    pass


class ZeroMarginal(FeplabError, ValueError):
    pass


class NoDynamics(FeplabError, ValueError):
    pass


class SynthesisFailure(FeplabError):
    pass


class ConsistencyError(FeplabError):
    """Two routes to the same quantity disagreed beyond tolerance."""
