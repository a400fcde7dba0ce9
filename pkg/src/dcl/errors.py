"""Exception types raised across the library.

Every error derives from :class:`DclError` so callers can catch library
failures with a single clause. Construction-time validation raises the
specific subclass named by the failing contract.
"""


class DclError(Exception):
    """Base class for all library errors."""


class ConnectivityFailure(DclError):
    """Random geometric placement never produced a connected graph."""


class FactorizationMismatch(DclError):
    """V^T V differed from (I - W)/2 beyond tolerance (inconsistent inputs)."""


class NotPositiveDefinite(DclError):
    """The mixing matrix admits eigenvalue <= -1, so the metric degenerates."""


class DimensionMismatch(DclError):
    """Operands have incompatible shapes."""


class ShapeMismatch(DimensionMismatch):
    """Solver state does not match the network/problem dimensions."""


class NonPositiveScale(DclError):
    """A proximal scale parameter must be strictly positive."""


class ZeroLipschitz(DclError):
    """Global step-size rule is undefined when max_i L_i == 0."""


class GammaOutOfRange(DclError):
    """Local step-size rule requires 0 < gamma < 2."""


class NonPositiveMean(DclError):
    """Timing distributions require strictly positive means."""


class DegenerateProbability(DclError):
    """Activation probabilities must be strictly positive."""


class HorizonZero(DclError):
    """A simulation needs a positive time budget or update cap."""


class NoConvergence(DclError):
    """Iteration cap reached before the residual tolerance."""


class DegenerateStart(DclError):
    """Relative error is undefined when the start equals the reference."""


class RankDeficient(DclError):
    """A least-squares factor lost column rank (only raised when unrepairable)."""
