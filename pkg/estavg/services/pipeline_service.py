"""
Service layer for per-observation averaging pipelines.
Runs a family's estimator bank, bootstraps its MSE matrix at the anchor fit and
applies the requested averaging modes.
"""
import logging
from typing import Any, List, Optional, Sequence, Tuple

import numpy as np

from estavg.exceptions import EstimatorAveragingError
from estavg.models.boolean import simulate_boolean
from estavg.models.dpp import simulate_dpp_gauss
from estavg.models.poisson import simulate_field
from estavg.models.thomas import simulate_thomas
from estavg.schemas.averaging import GroupStructure, MseMatrix, WeightSolution
from estavg.schemas.bank import BankEntry, EstimatorBank, FieldEstimator
from estavg.schemas.experiment import (
    AVERAGING_MODES,
    BootstrapConfig,
    Family,
    FitRecord,
    ModeResult,
    PipelineResult,
)
from estavg.schemas.geometry import GermGrainSet, PointPattern
from estavg.schemas.model_spec import BooleanSpec, DppGaussSpec, ThomasSpec
from estavg.services.averaging_service import AveragingService
from estavg.services.boolean_service import BooleanService
from estavg.services.bootstrap_service import BootstrapService
from estavg.services.fitting_service import FIT_METHODS, FittingService
from estavg.services.summary_service import BANDWIDTH_RULES, SummaryService

logger = logging.getLogger(__name__)

# Anchor used when the bootstrap config asks for "default".
DEFAULT_ANCHORS = {
    Family.POISSON: "ppl",
    Family.DPP: "palm",
    Family.THOMAS: "g",
    Family.BOOLEAN: "mean-of-initials",
}
FAMILY_METHODS = {
    Family.POISSON: BANDWIDTH_RULES,
    Family.DPP: FIT_METHODS,
    Family.THOMAS: FIT_METHODS,
    Family.BOOLEAN: ("area-perim", "tangent"),
}
INTERVAL_LEVEL = 0.95


def _chosen(family: Family, estimators: Optional[Sequence[str]]) -> List[str]:
    known = FAMILY_METHODS[family]
    if estimators is None:
        return list(known)
    unknown = [e for e in estimators if e not in known]
    if unknown or not estimators:
        raise ValueError(f"estimators {list(estimators)} invalid for {family.value}; choose among {list(known)}")
    return [m for m in known if m in estimators]


def dpp_bank(estimators: Optional[Sequence[str]] = None) -> EstimatorBank:
    """Scale estimators sharing one log-linear intensity fit."""
    def entry(method: str) -> BankEntry:
        return BankEntry(
            name=method, outputs=["alpha"],
            estimator=lambda pattern, loglinear: FittingService.fit_dpp(pattern, method, loglinear),
        )
    return EstimatorBank(
        family=Family.DPP.value,
        entries=[entry(m) for m in _chosen(Family.DPP, estimators)],
        parameters=["alpha"],
        prepare=FittingService.fit_loglinear_intensity,
    )


def thomas_bank(estimators: Optional[Sequence[str]] = None) -> EstimatorBank:
    """(kappa, sigma2, mu) from each of the K, g and Palm fits."""
    def entry(method: str) -> BankEntry:
        return BankEntry(
            name=method, outputs=["kappa", "sigma2", "mu"],
            estimator=lambda pattern, _: FittingService.fit_thomas(pattern, method),
        )
    return EstimatorBank(
        family=Family.THOMAS.value,
        entries=[entry(m) for m in _chosen(Family.THOMAS, estimators)],
        parameters=["kappa", "sigma2", "mu"],
    )


def boolean_bank(estimators: Optional[Sequence[str]] = None) -> EstimatorBank:
    """Moment and tangent estimators sharing one set measurement; groups (2, 1)."""
    chosen = _chosen(Family.BOOLEAN, estimators)
    entries = [
        BankEntry(
            name="area-perim", outputs=["rho", "alpha"],
            estimator=lambda _, m: BooleanService.boolean_fit_area_perimeter(m),
        ),
        BankEntry(
            name="tangent", outputs=["rho"],
            estimator=lambda _, m: BooleanService.boolean_fit_tangent(m),
        ),
    ]
    return EstimatorBank(
        family=Family.BOOLEAN.value,
        entries=[e for e in entries if e.name in chosen],
        parameters=["rho", "alpha"],
        prepare=BooleanService.measure_set,
    )


def poisson_field_bank(
    estimators: Optional[Sequence[str]] = None, grid: Optional[Tuple[int, int]] = None
) -> List[FieldEstimator]:
    """Kernel intensity estimators, one per bandwidth rule."""
    def entry(rule: str) -> FieldEstimator:
        return FieldEstimator(
            name=f"kernel:{rule}",
            estimator=lambda pattern: SummaryService.kernel_intensity(
                pattern, grid, SummaryService.select_bandwidth(pattern, rule)
            ),
        )
    return [entry(rule) for rule in _chosen(Family.POISSON, estimators)]


def _solve(mode: str, sigma: MseMatrix, groups: GroupStructure) -> WeightSolution:
    if mode == "av":
        return AveragingService.group_weights(sigma, groups, mode="masked")
    if mode == "av+":
        return AveragingService.group_weights(sigma, groups, mode="full")
    return AveragingService.blockwise_convex(sigma, groups)


class PipelineService:
    """Service class for end-to-end averaging of one observation."""

    @staticmethod
    def bank_for(family: Family, estimators: Optional[Sequence[str]] = None) -> EstimatorBank:
        if family == Family.DPP:
            return dpp_bank(estimators)
        if family == Family.THOMAS:
            return thomas_bank(estimators)
        if family == Family.BOOLEAN:
            return boolean_bank(estimators)
        raise ValueError("the Poisson family averages intensity fields; use poisson_field_bank")

    @staticmethod
    def simulator_for(family: Family, observation: Any, prepared: Any):
        """``simulate(theta, rng)`` for the family at the observation's window."""
        window = observation.window
        if family == Family.DPP:
            beta0, beta1 = prepared.values["beta0"], prepared.values["beta1"]
            return lambda theta, rng: simulate_dpp_gauss(
                DppGaussSpec(beta0=beta0, beta1=beta1, alpha=float(theta[0])), window, rng
            )
        if family == Family.THOMAS:
            return lambda theta, rng: simulate_thomas(
                ThomasSpec(kappa=float(theta[0]), mu=float(theta[2]), sigma=float(np.sqrt(theta[1]))),
                window, rng,
            )
        if family == Family.BOOLEAN:
            return lambda theta, rng: simulate_boolean(
                BooleanSpec(rho=float(theta[0]), alpha_r=float(theta[1])), window, rng
            )
        return lambda field, rng: simulate_field(field, rng)

    @staticmethod
    def average_pipeline(
        observation: Any,
        family: Family,
        modes: Sequence[str] = AVERAGING_MODES,
        bootstrap: Optional[BootstrapConfig] = None,
        estimators: Optional[Sequence[str]] = None,
        grid: Optional[Tuple[int, int]] = None,
        n_jobs: Optional[int] = None,
    ) -> PipelineResult:
        """
        Initial estimates, bootstrap MSE matrix and averaged estimates of one observation.

        Args:
            observation: PointPattern (Poisson, DPP, Thomas) or GermGrainSet (Boolean)
            family: Model family
            modes: Any of ``av`` (no foreign estimators), ``av+`` (foreign estimators
                included) and ``convex`` (blockwise convex weights)
            bootstrap: Bootstrap settings; anchor ``default`` picks the family's anchor
            estimators: Subset of the family's methods
            grid: Pixel grid of the Poisson intensity fields
            n_jobs: Bootstrap worker threads

        Raises:
            EstimatorAveragingError: Any module error, with ``family`` and ``stage`` context
        """
        family = Family(family)
        unknown = [m for m in modes if m not in AVERAGING_MODES]
        if unknown or not modes:
            raise ValueError(f"unknown averaging modes {unknown}; choose among {list(AVERAGING_MODES)}")
        if family == Family.BOOLEAN and not isinstance(observation, GermGrainSet):
            raise ValueError("the Boolean family needs a disc set observation")
        if family != Family.BOOLEAN and not isinstance(observation, PointPattern):
            raise ValueError(f"the {family.value} family needs a point pattern observation")
        bootstrap = bootstrap or BootstrapConfig()
        anchor_rule = DEFAULT_ANCHORS[family] if bootstrap.anchor == "default" else bootstrap.anchor
        if family == Family.POISSON:
            return PipelineService._poisson_pipeline(
                observation, modes, bootstrap, anchor_rule, estimators, grid, n_jobs
            )

        stage = "initial"
        try:
            bank = PipelineService.bank_for(family, estimators)
            records = bank.run(observation)
            prepared = bank.prepare(observation) if family == Family.DPP else None
            initial = bank.flatten(records)
            stage = "bootstrap"
            anchor = BootstrapService.resolve_anchor(bank, records, anchor_rule)
            simulate = PipelineService.simulator_for(family, observation, prepared)
            sigma = BootstrapService.bootstrap_mse_matrix(
                simulate, anchor, bank, bootstrap, n_jobs=n_jobs
            )
            stage = "averaging"
            groups = bank.groups()
            results = {}
            for mode in modes:
                solution = _solve(mode, sigma, groups)
                estimates = AveragingService.combine(initial, solution)
                results[mode] = ModeResult(
                    mode=mode,
                    parameters=list(bank.parameters),
                    estimates=estimates.tolist(),
                    estimated_mse=solution.estimated_mse,
                    weights=solution.weights,
                    intervals=AveragingService.confidence_intervals(
                        estimates, solution.estimated_mse, INTERVAL_LEVEL
                    ),
                )
        except EstimatorAveragingError as exc:
            raise exc.with_context(family=family.value, stage=stage)

        logger.info("Averaged %s observation with modes %s", family.value, list(modes))
        return PipelineResult(
            family=family,
            labels=bank.labels,
            parameters=list(bank.parameters),
            initial_estimates=initial.tolist(),
            anchor=anchor.tolist(),
            mse_matrix=sigma,
            modes=results,
            records=[records[name] for name in bank.names],
        )

    @staticmethod
    def _poisson_pipeline(
        pattern: PointPattern,
        modes: Sequence[str],
        bootstrap: BootstrapConfig,
        anchor_rule: str,
        estimators: Optional[Sequence[str]],
        grid: Optional[Tuple[int, int]],
        n_jobs: Optional[int],
    ) -> PipelineResult:
        """Kernel intensity averaging on the MISE matrix; combined fields are clamped at 0."""
        stage = "initial"
        try:
            field_bank = poisson_field_bank(estimators, grid)
            names = [e.name for e in field_bank]
            fields = [e.estimator(pattern) for e in field_bank]
            anchor_name = f"kernel:{anchor_rule}"
            if anchor_name not in names:
                raise ValueError(f"unknown anchor '{anchor_rule}'; choose among {[n.split(':')[1] for n in names]}")
            rho0 = fields[names.index(anchor_name)]
            stage = "bootstrap"
            sigma = BootstrapService.bootstrap_mise_matrix(
                PipelineService.simulator_for(Family.POISSON, pattern, None),
                rho0, field_bank, bootstrap, n_jobs=n_jobs,
            )
            stage = "averaging"
            groups = GroupStructure(sizes=[len(field_bank)])
            stacked = np.stack([f.values for f in fields], axis=-1)
            results = {}
            for mode in modes:
                solution = _solve(mode, sigma, groups)
                combined = np.maximum(stacked @ solution.as_array()[:, 0], 0.0)
                results[mode] = ModeResult(
                    mode=mode,
                    parameters=["intensity"],
                    estimates=[],
                    estimated_mse=solution.estimated_mse,
                    weights=solution.weights,
                    field=rho0.with_values(combined),
                )
        except EstimatorAveragingError as exc:
            raise exc.with_context(family=Family.POISSON.value, stage=stage)

        records = [
            FitRecord(estimator=name, family=Family.POISSON.value, values={"integral": f.mass()})
            for name, f in zip(names, fields)
        ]
        return PipelineResult(
            family=Family.POISSON,
            labels=names,
            parameters=["intensity"],
            initial_estimates=[],
            anchor=[],
            mse_matrix=sigma,
            modes=results,
            records=records,
            initial_fields=fields,
        )
