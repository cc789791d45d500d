"""Exception hierarchy shared by all modules."""


class KeplerKitError(Exception):
    """Base class for every computation error raised by the package."""


class DomainError(KeplerKitError, ValueError):
    """An argument lies outside the domain of the requested quantity."""


class NotCompact(KeplerKitError):
    """The energy surface / Hill region is not compact for these parameters."""


class RBlowup(KeplerKitError):
    """A trajectory left the admissible band r > omega**2 / 4."""


class StepFailure(KeplerKitError):
    """The adaptive step-size controller gave up."""


class QuadratureFailure(KeplerKitError):
    """A quadrature did not reach the requested tolerance."""


class TurningPointFailure(KeplerKitError):
    """The radial turning points of the planar orbit could not be bracketed."""


class PeriodFailure(KeplerKitError):
    """The planar orbit did not close to the required residual."""


class NoBracket(KeplerKitError):
    """The shooting function does not change sign in the search window."""


class SymmetryResidual(KeplerKitError):
    """A converged brake orbit failed the z-symmetry check."""


class TangentialCrossing(KeplerKitError):
    """A section crossing is too close to tangential to be counted."""


class BoundaryTooClose(KeplerKitError):
    """A section point lies too close to the boundary of the section disk."""


class NoReturn(KeplerKitError):
    """No return to the section happened before the time cap."""


class SelfTestFailure(KeplerKitError):
    """One or more built-in self tests failed."""
