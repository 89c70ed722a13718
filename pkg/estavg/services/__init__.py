from estavg.services.averaging_service import AveragingService
from estavg.services.bootstrap_service import BootstrapService
from estavg.services.summary_service import SummaryService
from estavg.services.fitting_service import FittingService
from estavg.services.boolean_service import BooleanService
from estavg.services.pipeline_service import PipelineService
from estavg.services.study_service import StudyService

__all__ = [
    "AveragingService",
    "BootstrapService",
    "SummaryService",
    "FittingService",
    "BooleanService",
    "PipelineService",
    "StudyService",
]
