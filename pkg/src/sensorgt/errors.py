"""Exception types shared across the package."""


class ConfigurationError(Exception):
    """A configuration file, key, or option combination is invalid."""


class NumericalError(RuntimeError):
    """A numerical computation became unreliable (e.g. singular innovation
    covariance in a Kalman update)."""


class PoolTooSmallError(ValueError):
    """A test pool is too small to be split into two subgroups."""


class FeasibilityError(RuntimeError):
    """A combinatorial enumeration would exceed its work cap."""
