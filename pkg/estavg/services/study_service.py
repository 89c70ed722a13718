"""
Service layer for replication studies.
Simulates the true model repeatedly, runs the averaging pipeline on each
observation and reduces squared errors into a result table.
"""
import logging
from typing import Dict, List, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed

from estavg.config import settings
from estavg.exceptions import EstimatorAveragingError, StudyAbortedError
from estavg.models import simulate
from estavg.models.poisson import intensity_field
from estavg.schemas.experiment import ExperimentConfig, Family, PipelineResult, ResultRow, ResultTable
from estavg.schemas.geometry import IntensityField
from estavg.schemas.model_spec import BooleanSpec, DppGaussSpec, ModelSpec, PoissonSpec, ThomasSpec
from estavg.services.pipeline_service import PipelineService, poisson_field_bank
from estavg.streams import derive_seed, stream

logger = logging.getLogger(__name__)

# (name, parameter) -> squared error of one replication
Errors = Dict[Tuple[str, str], float]


def family_of(spec: ModelSpec) -> Family:
    if isinstance(spec, PoissonSpec):
        return Family.POISSON
    if isinstance(spec, DppGaussSpec):
        return Family.DPP
    if isinstance(spec, ThomasSpec):
        return Family.THOMAS
    if isinstance(spec, BooleanSpec):
        return Family.BOOLEAN
    raise TypeError(f"unsupported model spec {type(spec).__name__}")


def true_parameters(spec: ModelSpec) -> Dict[str, float]:
    """Values of the targeted parameters under the generating model."""
    if isinstance(spec, DppGaussSpec):
        return {"alpha": spec.alpha}
    if isinstance(spec, ThomasSpec):
        return {"kappa": spec.kappa, "sigma2": spec.sigma2, "mu": spec.mu}
    if isinstance(spec, BooleanSpec):
        return {"rho": spec.rho, "alpha": spec.alpha_r}
    raise TypeError("the Poisson family is scored against its intensity field")


def _integrated_squared_error(field: IntensityField, truth: IntensityField) -> float:
    return float(np.sum((field.values - truth.values) ** 2) * truth.pixel_area)


def _errors(result: PipelineResult, truth) -> Errors:
    errors: Errors = {}
    if result.family == Family.POISSON:
        for name, field in zip(result.labels, result.initial_fields):
            errors[(name, "intensity")] = _integrated_squared_error(field, truth)
        for mode, outcome in result.modes.items():
            errors[(mode, "intensity")] = _integrated_squared_error(outcome.field, truth)
        return errors
    methods = [label.split(":", 1)[0] for label in result.labels]
    for label, method, estimate in zip(result.labels, methods, result.initial_estimates):
        parameter = label.split(":", 1)[1]
        errors[(method, parameter)] = (estimate - truth[parameter]) ** 2
    for mode, outcome in result.modes.items():
        for parameter, estimate in zip(outcome.parameters, outcome.estimates):
            errors[(mode, parameter)] = (estimate - truth[parameter]) ** 2
    return errors


class StudyService:
    """Service class for Monte Carlo replication studies."""

    @staticmethod
    def run_replication(config: ExperimentConfig, r: int, truth, n_jobs: int = 1) -> Errors:
        """
        Replication ``r``: observation from stream (seed, 0, r), bootstrap seeded by
        derive_seed(seed, 1, r).
        """
        family = family_of(config.model)
        observation = simulate(config.model, config.window, stream(config.seed, 0, r))
        bootstrap = config.bootstrap.model_copy(update={"seed": derive_seed(config.seed, 1, r)})
        grid = (truth.nx, truth.ny) if family == Family.POISSON else None
        result = PipelineService.average_pipeline(
            observation, family, config.modes, bootstrap,
            estimators=config.estimators, grid=grid, n_jobs=n_jobs,
        )
        return _errors(result, truth)

    @staticmethod
    def run_replication_study(config: ExperimentConfig, n_jobs: Optional[int] = None) -> ResultTable:
        """
        Run R replications and report the MSE (mean squared error, or MISE for the
        Poisson family) of every initial estimator and averaging mode.

        Standard errors are sd(squared errors) / sqrt(R), absent when R = 1. Rows
        are ordered by parameter, initial estimators first, then modes. The table
        does not depend on ``n_jobs``.

        Only domain errors count as failed replications; a bad estimator selection
        raises before the first replication.

        Raises:
            StudyAbortedError: If more than the tolerated fraction of replications fail
            ValueError: If the estimator selection is invalid for the family
        """
        n_jobs = n_jobs or config.n_jobs or settings.N_JOBS
        family = family_of(config.model)
        if family == Family.POISSON:
            poisson_field_bank(config.estimators)
            truth = intensity_field(config.model, config.window, settings.GRID_NX, settings.GRID_NY)
        else:
            PipelineService.bank_for(family, config.estimators)
            truth = true_parameters(config.model)
        logger.info(
            "Starting %s study: %d replications, %d bootstrap samples",
            family.value, config.replications, config.bootstrap.n_samples,
        )

        def attempt(r: int) -> Optional[Errors]:
            try:
                return StudyService.run_replication(config, r, truth)
            except EstimatorAveragingError as exc:
                logger.warning("Replication %d failed: %s", r, exc)
                return None

        outcomes = Parallel(n_jobs=n_jobs, prefer="threads")(
            delayed(attempt)(r) for r in range(config.replications)
        )
        failed = [r for r, outcome in enumerate(outcomes) if outcome is None]
        if len(failed) > settings.FAILURE_THRESHOLD * config.replications:
            raise StudyAbortedError(failed, config.replications)
        succeeded = [outcome for outcome in outcomes if outcome is not None]
        if failed:
            logger.warning("%d replications failed and are excluded: %s", len(failed), failed)

        table = ResultTable(
            rows=StudyService.summarize(succeeded),
            replications=len(succeeded),
            failed_replications=failed,
        )
        logger.info("Finished %s study over %d replications", family.value, len(succeeded))
        return table

    @staticmethod
    def summarize(replications: List[Errors]) -> List[ResultRow]:
        """Mean squared error and its standard error per (name, parameter), in first-seen order."""
        keys = list(replications[0])
        order = {p: k for k, p in enumerate(dict.fromkeys(p for _, p in keys))}
        keys.sort(key=lambda key: order[key[1]])
        count = len(replications)
        rows = []
        for name, parameter in keys:
            squared = np.array([errors[(name, parameter)] for errors in replications])
            se = float(np.std(squared, ddof=1) / np.sqrt(count)) if count >= 2 else None
            rows.append(ResultRow(name=name, parameter=parameter, mse=float(squared.mean()), se=se))
        return rows
