"""
Service layer for the parametric bootstrap.
Estimates the MSE matrix of an estimator bank (or the MISE matrix of intensity
estimators) by resimulating the model fitted at an anchor.
"""
import logging
from typing import Any, Callable, Dict, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed
from scipy import linalg

from estavg.config import settings
from estavg.exceptions import DimensionMismatchError, EstimatorFailureError, GridMismatchError
from estavg.schemas.averaging import MseMatrix
from estavg.schemas.bank import RECOVERABLE_ERRORS, EstimatorBank, FieldEstimator
from estavg.schemas.experiment import BootstrapConfig, FitRecord
from estavg.schemas.geometry import IntensityField
from estavg.streams import stream

logger = logging.getLogger(__name__)

Simulator = Callable[[Any, np.random.Generator], Any]


def _with_retries(draw: Callable[[np.random.Generator], np.ndarray], seed: int, b: int, retries: int) -> np.ndarray:
    """Run ``draw`` on stream (seed, b, attempt) until it succeeds or retries run out."""
    failure: Optional[EstimatorFailureError] = None
    for attempt in range(retries + 1):
        try:
            return draw(stream(seed, b, attempt))
        except EstimatorFailureError as exc:
            failure = exc
            logger.warning(
                "Bootstrap sample %d attempt %d failed in '%s': %s", b, attempt, exc.name, exc.detail
            )
    raise EstimatorFailureError(b, failure.name, f"Estimator '{failure.name}' failed on bootstrap sample {b} "
                                f"after {retries + 1} attempts: {failure.detail}")


def _gram(deviations: np.ndarray, labels: Sequence[str], scale: float = 1.0) -> MseMatrix:
    """(scale / N) D^T D, symmetrized, with a ``not-psd`` flag when the check fails."""
    n = deviations.shape[0]
    sigma = scale * (deviations.T @ deviations) / n
    sigma = 0.5 * (sigma + sigma.T)
    flags = []
    trace = float(np.trace(sigma))
    if sigma.size and linalg.eigvalsh(sigma).min() < -settings.PSD_TOLERANCE * max(trace, 0.0):
        logger.warning("Bootstrap MSE matrix is not positive semidefinite")
        flags.append("not-psd")
    return MseMatrix.from_array(list(labels), sigma, flags)


class BootstrapService:
    """Service class for bootstrap MSE and MISE matrices."""

    @staticmethod
    def resolve_anchor(bank: EstimatorBank, records: Dict[str, FitRecord], rule: str) -> np.ndarray:
        """
        Anchor vector (one value per bank parameter).

        ``mean-of-initials`` averages every estimator of a parameter; an estimator name
        takes that estimator's values, falling back to the mean for parameters it does
        not target.
        """
        estimates = bank.flatten(records)
        parameters = np.array(bank.label_parameters)
        means = np.array([estimates[parameters == p].mean() for p in bank.parameters])
        if rule == "mean-of-initials":
            return means
        if rule not in bank.names:
            raise ValueError(
                f"unknown anchor '{rule}'; use mean-of-initials or one of {bank.names}"
            )
        values = records[rule].values
        return np.array([values.get(p, means[k]) for k, p in enumerate(bank.parameters)])

    @staticmethod
    def bootstrap_mse_matrix(
        simulate: Simulator,
        theta0: Any,
        bank: EstimatorBank,
        config: BootstrapConfig,
        anchor: Optional[Sequence[float]] = None,
        n_jobs: Optional[int] = None,
        retries: Optional[int] = None,
    ) -> MseMatrix:
        """
        Sigma_hat[i, j] = (1/N) sum_b (theta_i^(b) - a_i)(theta_j^(b) - a_j).

        Args:
            simulate: ``simulate(theta0, rng)`` returns an observation
            theta0: Model parameters handed to ``simulate``
            bank: Estimator bank; its labels become the matrix labels
            config: Bootstrap size and seed (sample b, attempt a uses stream (seed, b, a))
            anchor: Per-parameter centering values a; defaults to ``theta0``
            n_jobs: Worker threads; results are merged in sample order
            retries: Extra attempts per failing sample (defaults to settings)

        Raises:
            DimensionMismatchError: If the anchor length differs from the parameter count
            EstimatorFailureError: If a sample still fails after every retry
        """
        anchor = np.asarray(theta0 if anchor is None else anchor, dtype=float).reshape(-1)
        if anchor.shape[0] != len(bank.parameters):
            raise DimensionMismatchError(
                f"Anchor has {anchor.shape[0]} values for {len(bank.parameters)} parameters"
            )
        retries = settings.BOOT_RETRIES if retries is None else retries
        n_jobs = n_jobs or settings.N_JOBS
        centers = anchor[bank.groups().membership()]

        def draw(rng: np.random.Generator) -> np.ndarray:
            return bank.evaluate(simulate(theta0, rng)) - centers

        rows = Parallel(n_jobs=n_jobs, prefer="threads")(
            delayed(_with_retries)(draw, config.seed, b, retries) for b in range(config.n_samples)
        )
        return _gram(np.vstack(rows), bank.labels)

    @staticmethod
    def bootstrap_mise_matrix(
        simulate: Simulator,
        rho0_field: IntensityField,
        field_bank: Sequence[FieldEstimator],
        config: BootstrapConfig,
        n_jobs: Optional[int] = None,
        retries: Optional[int] = None,
    ) -> MseMatrix:
        """
        Sigma_hat[i, j] = (1/N) sum_b pixelArea * sum_pixels (f_i^(b) - rho0)(f_j^(b) - rho0).

        Raises:
            GridMismatchError: If an estimated field is not on the anchor's pixel grid
            EstimatorFailureError: If a sample still fails after every retry
        """
        retries = settings.BOOT_RETRIES if retries is None else retries
        n_jobs = n_jobs or settings.N_JOBS
        anchor = rho0_field.values.ravel()

        def draw(rng: np.random.Generator) -> np.ndarray:
            observation = simulate(rho0_field, rng)
            rows = []
            for entry in field_bank:
                try:
                    field = entry.estimator(observation)
                except RECOVERABLE_ERRORS as exc:
                    if isinstance(exc, GridMismatchError):
                        raise
                    raise EstimatorFailureError(-1, entry.name, str(exc)) from exc
                if not field.same_grid(rho0_field):
                    raise GridMismatchError(
                        f"Field estimator '{entry.name}' returned a different pixel grid",
                        {"name": entry.name},
                    )
                rows.append(field.values.ravel() - anchor)
            return np.stack(rows)

        samples = Parallel(n_jobs=n_jobs, prefer="threads")(
            delayed(_with_retries)(draw, config.seed, b, retries) for b in range(config.n_samples)
        )
        # (M, N * pixels) deviation matrix: Gram over pixels and samples at once
        deviations = np.concatenate(samples, axis=1).T
        return _gram(deviations, [e.name for e in field_bank], scale=rho0_field.pixel_area * len(anchor))
