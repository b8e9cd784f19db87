"""Exception and warning types shared across the package."""


class PricingError(Exception):
    """Base class for numerical failures inside a pricing routine."""


class BoundaryCase(PricingError, ValueError):
    """Argument sits on a pole or branch point; the caller must perturb or reject it."""


class PoleEncountered(PricingError):
    """Riccati solution exploded (overflow guard tripped) along the integration path."""


class InvalidTolerance(PricingError, ValueError):
    pass


class HorizonExceeded(PricingError, ValueError):
    """Horizon is at or beyond the explosion time of the transform."""


class NonRealResult(PricingError):
    """Complex arithmetic that must cancel to a real value left an imaginary residue."""


class DomainViolation(PricingError, ValueError):
    pass


class QuadratureNotConverged(PricingError):
    pass


class InvalidDamping(PricingError, ValueError):
    pass


class DegenerateTime(PricingError, ValueError):
    """Time is at (or numerically indistinguishable from) the horizon, or otherwise singular."""


class IntegrabilityViolation(PricingError, ValueError):
    pass


class InvalidGrid(PricingError, ValueError):
    pass


class NotInvertible(PricingError, ValueError):
    """Option price lies outside the no-arbitrage envelope of the reference formula."""


class ExponentOverflow(PricingError, OverflowError):
    pass


class ConfigError(ValueError):
    pass


class EffectiveSampleTooSmall(UserWarning):
    """A single Monte Carlo weight dominates the ratio estimator."""
