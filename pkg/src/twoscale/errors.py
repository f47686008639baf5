"""Exception hierarchy shared across the package."""


class TwoScaleError(Exception):
    """Base class for all library errors."""


class DimensionMismatch(TwoScaleError):
    pass


class NotHurwitz(TwoScaleError):
    pass


class Singular(TwoScaleError):
    pass


class NotSymmetric(TwoScaleError):
    pass


class DegenerateWeights(TwoScaleError):
    pass


class NotErgodic(TwoScaleError):
    """Chain is reducible or periodic: no unique stationary law was reached."""


class SingularAvv(TwoScaleError):
    pass


class SingularSystem(TwoScaleError):
    pass


class NonMixing(TwoScaleError):
    pass


class GenerationFailed(TwoScaleError):
    pass


class AssumptionViolation(TwoScaleError):
    pass


class NoValidKappa2(TwoScaleError):
    pass


class UnstableRegime(TwoScaleError):
    pass


class ConditionViolated(TwoScaleError):
    pass


class InsufficientPoints(TwoScaleError):
    pass


class InvalidAction(TwoScaleError):
    pass


class ConfigInvalid(TwoScaleError):
    pass


class MismatchedConfigs(TwoScaleError):
    pass
