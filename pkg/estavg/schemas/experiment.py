"""
Pydantic schemas for fitting configuration, fit records, pipeline results and studies.
"""
import enum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, Field, field_validator, model_validator

from estavg.config import settings
from estavg.schemas.averaging import MseMatrix
from estavg.schemas.geometry import IntensityField, Window
from estavg.schemas.model_spec import DppGaussSpec, ModelSpec


class Family(str, enum.Enum):
    """Model families an averaging pipeline can run on."""
    POISSON = "poisson"
    DPP = "dpp"
    THOMAS = "thomas"
    BOOLEAN = "boolean"


AVERAGING_MODES = ("av", "av+", "convex")


class BootstrapConfig(BaseModel):
    """
    Parametric bootstrap settings.

    Attributes:
        n_samples: Number N of bootstrap samples
        seed: Root seed of the sample streams
        anchor: ``default``, ``mean-of-initials`` or the name of an estimator method
    """
    n_samples: int = Field(default_factory=lambda: settings.BOOT_N, ge=2)
    seed: int = Field(default_factory=lambda: settings.BOOT_SEED, ge=0)
    anchor: str = Field("default", min_length=1)


class ContrastConfig(BaseModel):
    """
    Minimum contrast settings: D = integral over [rmin, rmax] of (S_hat^q - S^q)^2 dr.
    """
    q: float = Field(..., gt=0, le=1)
    rmin: float = Field(..., ge=0)
    rmax: float = Field(..., gt=0)
    n_r: int = Field(100, ge=2, description="Number of r values of the integration grid")
    bounds: Optional[List[Tuple[float, float]]] = Field(None, description="Per-parameter search bounds")

    @model_validator(mode="after")
    def validate_range(self) -> "ContrastConfig":
        """Validate rmin < rmax and ordered bounds."""
        if self.rmin >= self.rmax:
            raise ValueError("rmin must be smaller than rmax")
        for lo, hi in self.bounds or []:
            if not lo < hi:
                raise ValueError("every search bound must satisfy lower < upper")
        return self

    @classmethod
    def for_k(cls, window: Window, **overrides) -> "ContrastConfig":
        """K-function defaults: q = 1/4 on [0, quarter side]."""
        values = {"q": 0.25, "rmin": 0.0, "rmax": window.shorter_side / 4.0}
        values.update(overrides)
        return cls(**values)

    @classmethod
    def for_pcf(cls, window: Window, **overrides) -> "ContrastConfig":
        """Pair-correlation defaults: q = 1/2 on [0.01, quarter side]."""
        values = {"q": 0.5, "rmin": 0.01, "rmax": window.shorter_side / 4.0}
        values.update(overrides)
        return cls(**values)


class SetMeasurements(BaseModel):
    """
    Measurements of a disc union observed in a window.

    Attributes:
        p_hat: Covered area fraction
        la_hat: Exposed boundary length per unit area
        tangent_count: Number of exposed lower tangent points
    """
    p_hat: float = Field(..., ge=0, le=1)
    la_hat: float = Field(..., ge=0)
    tangent_count: int = Field(..., ge=0)
    window_area: float = Field(..., gt=0)


class OptimumResult(BaseModel):
    """Optimizer output: parameters, objective value and diagnostic flags."""
    params: List[float]
    objective: float
    flags: List[str] = Field(default_factory=list)


class FitRecord(BaseModel):
    """
    Outcome of one estimator on one observation, written as a JSON line.
    """
    estimator: str
    family: str
    values: Dict[str, float]
    flags: List[str] = Field(default_factory=list)
    converged: bool = True


class ModeResult(BaseModel):
    """
    One averaging mode applied to one observation.

    For the Poisson family ``estimates`` and ``intervals`` are empty and the
    combined (clamped) intensity is carried in ``field``.
    """
    mode: str
    parameters: List[str]
    estimates: List[float]
    estimated_mse: List[float]
    weights: List[List[float]]
    intervals: List[Tuple[float, float]] = Field(default_factory=list)
    field: Optional[IntensityField] = Field(None, exclude=True)


class PipelineResult(BaseModel):
    """
    Initial estimates, bootstrap MSE matrix and every requested averaging mode.
    """
    family: Family
    labels: List[str]
    parameters: List[str]
    initial_estimates: List[float]
    anchor: List[float]
    mse_matrix: MseMatrix
    modes: Dict[str, ModeResult]
    records: List[FitRecord] = Field(default_factory=list)
    initial_fields: List[IntensityField] = Field(default_factory=list, exclude=True)


class ExperimentConfig(BaseModel):
    """
    Replication study design.

    Attributes:
        model: True model the observations are simulated from
        window: Observation window
        replications: Number R of replications
        bootstrap: Bootstrap settings (its seed is replaced per replication)
        estimators: Estimator methods to include (None keeps the family's full bank)
        modes: Averaging modes among av, av+ and convex
        seed: Root seed of the study
        output: Optional path of the result table
        n_jobs: Worker count for the replication loop
    """
    model: ModelSpec
    window: Window
    replications: int = Field(..., ge=1)
    bootstrap: BootstrapConfig = Field(default_factory=BootstrapConfig)
    estimators: Optional[List[str]] = None
    modes: List[str] = Field(default_factory=lambda: list(AVERAGING_MODES), min_length=1)
    seed: int = Field(0, ge=0)
    output: Optional[str] = None
    n_jobs: Optional[int] = None

    @field_validator("modes")
    @classmethod
    def validate_modes(cls, v: List[str]) -> List[str]:
        """Validate that every mode is known."""
        unknown = [m for m in v if m not in AVERAGING_MODES]
        if unknown:
            raise ValueError(f"unknown averaging modes {unknown}; choose among {list(AVERAGING_MODES)}")
        return v

    @model_validator(mode="after")
    def validate_existence_on_window(self) -> "ExperimentConfig":
        """Validate that a DPP model exists on the study window."""
        if isinstance(self.model, DppGaussSpec) and not self.model.admissible_on(self.window):
            raise ValueError(
                f"alpha={self.model.alpha:.6g} exceeds the existence bound "
                f"{self.model.alpha_bound(self.window):.6g} of the intensity on this window"
            )
        return self


class ResultRow(BaseModel):
    """MSE estimate of one estimator (or averaging mode) for one parameter."""
    name: str
    parameter: str
    mse: float = Field(..., ge=0)
    se: Optional[float] = Field(None, ge=0)


class ResultTable(BaseModel):
    """
    Study output in the layout of a results table.

    Attributes:
        rows: One row per (estimator or mode, parameter)
        replications: Number of successful replications the rows are based on
        failed_replications: Indices of replications that raised
    """
    rows: List[ResultRow]
    replications: int = Field(..., ge=1)
    failed_replications: List[int] = Field(default_factory=list)

    @model_validator(mode="after")
    def validate_se(self) -> "ResultTable":
        """Validate that standard errors are present iff at least two replications exist."""
        for row in self.rows:
            if (row.se is not None) != (self.replications >= 2):
                raise ValueError("standard errors must be present exactly when replications >= 2")
        return self

    def lookup(self, name: str, parameter: str) -> ResultRow:
        for row in self.rows:
            if row.name == name and row.parameter == parameter:
                return row
        raise KeyError(f"no row for ({name}, {parameter})")
