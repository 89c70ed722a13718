from estavg.schemas.geometry import (
    Window,
    PointPattern,
    GermGrainSet,
    SummaryFunction,
    IntensityField,
)
from estavg.schemas.averaging import (
    WeightMode,
    MseMatrix,
    GroupStructure,
    WeightSolution,
)
from estavg.schemas.model_spec import (
    PoissonSpec,
    DppGaussSpec,
    ThomasSpec,
    BooleanSpec,
    ModelSpec,
)
from estavg.schemas.experiment import (
    Family,
    AVERAGING_MODES,
    BootstrapConfig,
    ContrastConfig,
    SetMeasurements,
    OptimumResult,
    FitRecord,
    ModeResult,
    PipelineResult,
    ExperimentConfig,
    ResultRow,
    ResultTable,
)
from estavg.schemas.bank import (
    BankEntry,
    EstimatorBank,
    FieldEstimator,
)

__all__ = [
    "Window",
    "PointPattern",
    "GermGrainSet",
    "SummaryFunction",
    "IntensityField",
    "WeightMode",
    "MseMatrix",
    "GroupStructure",
    "WeightSolution",
    "PoissonSpec",
    "DppGaussSpec",
    "ThomasSpec",
    "BooleanSpec",
    "ModelSpec",
    "Family",
    "AVERAGING_MODES",
    "BootstrapConfig",
    "ContrastConfig",
    "SetMeasurements",
    "OptimumResult",
    "FitRecord",
    "ModeResult",
    "PipelineResult",
    "ExperimentConfig",
    "ResultRow",
    "ResultTable",
    "BankEntry",
    "EstimatorBank",
    "FieldEstimator",
]
