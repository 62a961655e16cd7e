"""Exception hierarchy shared by all rauzylab modules.

Every error carries a machine readable ``code`` (the class name) and the
process exit status used by the command line front end: precondition
failures exit with 2, numerical aborts with 3.
"""


class RauzyLabError(Exception):
    """Base class for all library errors."""

    exit_code = 1

    @property
    def code(self):
        return type(self).__name__


class PreconditionError(RauzyLabError, ValueError):
    """Input data violates a documented precondition."""

    exit_code = 2


class NumericalError(RauzyLabError, ArithmeticError):
    """A computation was aborted because its result would be meaningless."""

    exit_code = 3


# iet_core
class InvalidLength(PreconditionError):
    pass


class InvalidPermutation(PreconditionError):
    pass


class DomainError(PreconditionError):
    pass


class TieError(PreconditionError):
    """Two competing lengths coincide (the input is Keane-degenerate)."""

    def __init__(self, message="tie between the two last intervals", step=None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


# rauzy_veech
class ReduciblePermutation(PreconditionError):
    pass


class NotNormalized(PreconditionError):
    pass


class NearDegenerate(NumericalError):
    pass


# zorich
class BurstTooLong(NumericalError):
    pass


# induced_mp
class DepthExceeded(PreconditionError):
    pass


class InvalidBase(PreconditionError):
    pass


class ReturnCapExceeded(NumericalError):
    pass


class InsufficientSamples(PreconditionError):
    pass


# transfer_ulam
class CoverageTooLow(PreconditionError):
    pass


class NoConvergence(NumericalError):
    pass


class LadderTooFine(PreconditionError):
    pass


# surface_flow
class TauOutsideCone(PreconditionError):
    pass


# recurrence_stats
class EnNotDivergent(PreconditionError):
    pass


class PeriodDetectionFailed(PreconditionError):
    pass


class ParamOutOfRange(PreconditionError):
    pass


class TargetTooSmall(PreconditionError):
    pass


class TargetStraddlesStrip(PreconditionError):
    pass


class ScalingConditionsFail(PreconditionError):
    pass


# cli
class ConfigError(PreconditionError):
    pass
