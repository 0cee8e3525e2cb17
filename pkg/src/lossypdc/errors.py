"""Exception hierarchy shared across the package."""


class LossyPdcError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(LossyPdcError):
    """An input violates a documented precondition or data invariant."""


class NumericalToleranceError(LossyPdcError):
    """A computed result failed a numerical consistency check.

    Typical causes: too few integrator steps, a decomposition applied to
    data that does not satisfy its structural assumptions.
    """


class DecompositionError(NumericalToleranceError):
    """A matrix decomposition could not be completed within tolerance."""


class CalibrationError(NumericalToleranceError):
    """Gain calibration failed to bracket or converge on the target."""


class ConfigError(LossyPdcError):
    """A scenario configuration file is malformed or inconsistent."""
