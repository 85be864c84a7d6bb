"""Exception types shared across the package."""


class VqgeoError(Exception):
    """Base class for all package-specific errors."""


class InvalidDimensions(VqgeoError, ValueError):
    """Input shapes are inconsistent with each other or with a spec object."""


class NotPositiveDefinite(VqgeoError):
    """Factorization failed even after damping escalation."""


class NotHermitian(VqgeoError, ValueError):
    """Matrix expected to be Hermitian is not (beyond tolerance)."""


class DomainError(VqgeoError, ValueError):
    """Point lies outside the valid coordinate domain (e.g. theta2 >= 0)."""


class ZeroLoss(VqgeoError):
    """Operator expectation value vanishes; loss-aware tensors are undefined."""


class NonFiniteGradient(VqgeoError):
    """Gradient contains NaN or infinity."""


class NonFiniteLoss(VqgeoError):
    """Loss evaluated to NaN or infinity."""


class EmptyAfterTrim(VqgeoError, ValueError):
    """Trimming removed every element of the sample."""


class NoSolvedInstances(VqgeoError, ValueError):
    """No benchmark instance was solved by any method at the given threshold."""
