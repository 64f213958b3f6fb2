# fivestar/exceptions.py
"""
Exception hierarchy for the fivestar package.

Data problems derive from ValueError and numerical failures from RuntimeError,
so callers that only know the builtin types still catch them.
"""


class FiveStarError(Exception):
    """Base class for every error raised by fivestar."""


class DataValidationError(FiveStarError, ValueError):
    """Input data or arguments violate a documented precondition."""


class NumericalError(FiveStarError, RuntimeError):
    """A numerical routine could not produce a usable result."""


class ConvergenceError(NumericalError):
    """An iterative fit stopped without meeting its convergence criterion."""


class RankDeficiencyError(NumericalError):
    """A design matrix does not have full column rank."""


class DegenerateDataError(NumericalError):
    """The data carry no information for the requested estimate.

    Examples are a stratum where one arm is absent or has no events, or a
    comparison whose variance is zero at every event time.
    """


class AnalysisStepError(FiveStarError):
    """
    Wraps a failure inside one step of the analysis pipeline.

    Attributes:
        step: Name of the failing step (for example 'step2' or 'step4').
    """

    def __init__(self, step: str, message: str) -> None:
        super().__init__(f'[{step}] {message}')
        self.step: str = step
