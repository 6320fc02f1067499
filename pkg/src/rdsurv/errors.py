"""Exception hierarchy for rdsurv.

Data errors (bad input files, degenerate samples) are distinguished from
estimation errors so the CLI can map them to different exit codes.
"""


class RdSurvError(Exception):
    """Base class for all rdsurv errors."""


# -- data / input errors -----------------------------------------------------

class DataError(RdSurvError):
    """Problems with the observed data itself."""


class EmptySampleError(DataError):
    pass


class AllTruncatedError(DataError):
    """Truncation time equals the minimum observed time; data are degenerate."""


class NegativeTimeError(DataError):
    pass


class MissingColumnError(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message, row=None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row


class NonPositiveTimeError(DataError):
    def __init__(self, message, row=None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row


# -- estimation errors --------------------------------------------------------

class EstimationError(RdSurvError):
    """Failures while fitting models or assembling estimates."""


class NoEventsError(EstimationError):
    pass


class NonConvergenceError(EstimationError):
    def __init__(self, message, gradient_norm=None, at_boundary=False):
        super().__init__(message)
        self.gradient_norm = gradient_norm
        self.at_boundary = at_boundary


class NegativeUError(EstimationError):
    pass


class QuadratureFailureError(EstimationError):
    pass


class ZeroDenominatorError(EstimationError):
    def __init__(self, message, index=None):
        super().__init__(message if index is None else f"record {index}: {message}")
        self.index = index


class InsufficientSupportError(EstimationError):
    pass


class SingularDesignError(EstimationError):
    pass


class DegenerateWindowError(EstimationError):
    pass


class AllInfiniteError(EstimationError):
    pass


class WeakDiscontinuityError(EstimationError):
    pass


class SingularGammaError(EstimationError):
    pass


class TooFewNeighborsError(EstimationError):
    pass


class TooManyFailedReplicatesError(EstimationError):
    def __init__(self, message, census=None):
        super().__init__(message)
        self.census = dict(census or {})


class MonotoneLikelihoodWarning(UserWarning):
    """Cox partial likelihood is monotone; the coefficient was capped."""
