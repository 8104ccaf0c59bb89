"""Exception hierarchy."""


class LiftCertError(Exception):
    """Base class for all package errors."""


class DimensionError(LiftCertError, ValueError):
    """Matrix blocks or signals have inconsistent sizes."""


class SymmetryError(LiftCertError, ValueError):
    """A matrix required to be symmetric is not."""


class WellPosednessError(LiftCertError):
    """``I - D_zw Delta`` is numerically singular."""


class IntervalError(LiftCertError, ValueError):
    """Uncertainty intervals are malformed or not normalized."""


class Infeasible(LiftCertError):
    """An LMI problem could not be certified at the requested level."""


class InvalidBracket(LiftCertError, ValueError):
    """Bisection bracket is empty or reversed."""


class InputError(LiftCertError, ValueError):
    """A model or data file failed validation."""
