"""
Error hierarchy for averaging, bootstrap, summaries, simulation and fitting.

Every error carries a human-readable ``detail`` and a ``context`` dict; the CLI
turns them into click exceptions the way a web layer turns them into responses.
"""
from typing import Any, Dict, List, Optional


class EstimatorAveragingError(Exception):
    """Base class for every domain error raised by the package."""

    def __init__(self, detail: str, context: Optional[Dict[str, Any]] = None):
        super().__init__(detail)
        self.detail = detail
        self.context = dict(context or {})

    def with_context(self, **context: Any) -> "EstimatorAveragingError":
        """Return self after merging extra context (used when errors propagate)."""
        self.context.update(context)
        return self


class SingularMatrixError(EstimatorAveragingError):
    pass


class DimensionMismatchError(EstimatorAveragingError):
    pass


class NotPsdError(EstimatorAveragingError):
    pass


class EstimatorFailureError(EstimatorAveragingError):
    """A fit failed on bootstrap sample ``sample`` after all retries."""

    def __init__(self, sample: int, name: str, detail: Optional[str] = None):
        super().__init__(
            detail or f"Estimator '{name}' failed on bootstrap sample {sample}",
            {"sample": sample, "name": name},
        )
        self.sample = sample
        self.name = name


class GridMismatchError(EstimatorAveragingError):
    pass


class TooFewPointsError(EstimatorAveragingError):
    pass


class RangeTooLargeError(EstimatorAveragingError):
    pass


class NonpositiveRError(EstimatorAveragingError):
    pass


class EmptyPatternError(EstimatorAveragingError):
    pass


class UnknownPresetError(EstimatorAveragingError):
    pass


class UnboundedIntensityError(EstimatorAveragingError):
    pass


class ExistenceViolatedError(EstimatorAveragingError):
    pass


class TruncationTooCoarseError(EstimatorAveragingError):
    pass


class NonConvergenceError(EstimatorAveragingError):
    pass


class NoPairsError(EstimatorAveragingError):
    pass


class DegenerateLikelihoodError(EstimatorAveragingError):
    pass


class SaturatedError(EstimatorAveragingError):
    pass


class EmptySetError(EstimatorAveragingError):
    pass


class StudyAbortedError(EstimatorAveragingError):
    """Too many replications failed; ``failed`` lists their indices."""

    def __init__(self, failed: List[int], replications: int):
        super().__init__(
            f"{len(failed)} of {replications} replications failed: {failed}",
            {"failed": list(failed), "replications": replications},
        )
        self.failed = list(failed)
