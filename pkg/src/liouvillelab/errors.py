"""Exception hierarchy shared by every module."""


class LiouvilleError(Exception):
    """Base class for all errors raised by liouvillelab."""


class DegenerateDomainError(LiouvilleError):
    pass


class DegenerateTriangleError(LiouvilleError):
    pass


class BoundaryDataError(LiouvilleError):
    pass


class PoleOnBoundaryError(LiouvilleError):
    pass


class NegativeStrengthError(LiouvilleError):
    pass


class MassOverflowError(LiouvilleError, OverflowError):
    pass


class PlateauError(LiouvilleError):
    """A set of positive area sits exactly on the requested level."""


class OpenPolylineError(LiouvilleError):
    pass


class AsymmetricDomainError(LiouvilleError):
    pass


class DegeneratePairError(LiouvilleError):
    pass


class MeasureMismatchError(LiouvilleError):
    pass


class PreconditionError(LiouvilleError):
    pass


class MassExceedsError(LiouvilleError):
    pass


class NeitherBranchError(LiouvilleError):
    pass


class JacobianSingularError(LiouvilleError):
    pass


class StartUnsolvableError(LiouvilleError):
    pass


class ConditionViolatedError(LiouvilleError):
    """Problem coefficients or boundary data break a stated hypothesis."""

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class VariantWithoutTransformError(LiouvilleError):
    pass


class HypothesesFailError(LiouvilleError):
    pass


class AsymmetricSetupError(LiouvilleError):
    pass


class ConfigError(LiouvilleError):
    pass
