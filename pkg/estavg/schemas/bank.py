"""
Estimator bank: the ordered collection of initial estimators of a family.
"""
from typing import Any, Callable, Dict, List, Optional, Union, Sequence

import numpy as np
from pydantic import BaseModel, Field, model_validator

from estavg.exceptions import EstimatorAveragingError, EstimatorFailureError
from estavg.schemas.averaging import GroupStructure
from estavg.schemas.experiment import FitRecord

# Errors a fit may raise on an unlucky sample; anything else is a bug and propagates.
RECOVERABLE_ERRORS = (EstimatorAveragingError, ValueError, ArithmeticError, np.linalg.LinAlgError)


class BankEntry(BaseModel):
    """
    One estimation method.

    ``estimator(observation, prepared)`` returns either one value per name in
    ``outputs`` or a FitRecord whose ``values`` cover ``outputs``.
    """
    name: str = Field(..., min_length=1)
    outputs: List[str] = Field(..., min_length=1)
    estimator: Callable[[Any, Any], Union[FitRecord, Sequence[float]]]


class EstimatorBank(BaseModel):
    """
    Ordered estimator collection and the parameters it targets.

    Labels are ``<method>:<parameter>`` grouped by parameter (in ``parameters``
    order) and, inside a group, by entry order. ``prepare`` runs once per
    observation and its result is handed to every estimator.
    """
    family: str = "custom"
    entries: List[BankEntry] = Field(..., min_length=1)
    parameters: List[str] = Field(..., min_length=1)
    prepare: Optional[Callable[[Any], Any]] = None

    @model_validator(mode="after")
    def validate_targets(self) -> "EstimatorBank":
        """Validate unique names and that every parameter has at least one estimator."""
        names = [e.name for e in self.entries]
        if len(set(names)) != len(names):
            raise ValueError("estimator names must be unique")
        for entry in self.entries:
            unknown = set(entry.outputs) - set(self.parameters)
            if unknown:
                raise ValueError(f"estimator '{entry.name}' targets unknown parameters {sorted(unknown)}")
        for parameter in self.parameters:
            if not any(parameter in e.outputs for e in self.entries):
                raise ValueError(f"no estimator targets parameter '{parameter}'")
        return self

    def _slots(self) -> List[tuple]:
        return [
            (parameter, entry)
            for parameter in self.parameters
            for entry in self.entries
            if parameter in entry.outputs
        ]

    @property
    def names(self) -> List[str]:
        return [e.name for e in self.entries]

    @property
    def labels(self) -> List[str]:
        return [f"{entry.name}:{parameter}" for parameter, entry in self._slots()]

    @property
    def label_parameters(self) -> List[str]:
        """Target parameter of each label."""
        return [parameter for parameter, _ in self._slots()]

    @property
    def label_methods(self) -> List[str]:
        """Estimator name of each label."""
        return [entry.name for _, entry in self._slots()]

    def groups(self) -> GroupStructure:
        return GroupStructure(
            sizes=[sum(parameter in e.outputs for e in self.entries) for parameter in self.parameters]
        )

    def _record(self, entry: BankEntry, output) -> FitRecord:
        if isinstance(output, FitRecord):
            record = output
            missing = [p for p in entry.outputs if p not in record.values]
            if missing:
                raise EstimatorFailureError(-1, entry.name, f"estimator '{entry.name}' left {missing} unset")
        else:
            values = [float(v) for v in output]
            if len(values) != len(entry.outputs):
                raise EstimatorFailureError(
                    -1, entry.name, f"estimator '{entry.name}' returned {len(values)} values"
                )
            record = FitRecord(estimator=entry.name, family=self.family, values=dict(zip(entry.outputs, values)))
        if not np.all(np.isfinite([record.values[p] for p in entry.outputs])):
            raise EstimatorFailureError(-1, entry.name, f"estimator '{entry.name}' returned {record.values}")
        return record

    def run(self, observation: Any) -> Dict[str, FitRecord]:
        """
        Run every estimator on ``observation``.

        Returns:
            Mapping estimator name -> fit record

        Raises:
            EstimatorFailureError: If an estimator raises a recoverable error or
                returns a non-finite value (``sample`` is -1; callers set it)
        """
        try:
            prepared = self.prepare(observation) if self.prepare is not None else None
        except RECOVERABLE_ERRORS as exc:
            raise EstimatorFailureError(-1, "prepare", str(exc)) from exc
        records = {}
        for entry in self.entries:
            try:
                output = entry.estimator(observation, prepared)
            except RECOVERABLE_ERRORS as exc:
                raise EstimatorFailureError(-1, entry.name, str(exc)) from exc
            records[entry.name] = self._record(entry, output)
        return records

    def flatten(self, records: Dict[str, FitRecord]) -> np.ndarray:
        """Order a :meth:`run` result by label."""
        return np.array([records[entry.name].values[parameter] for parameter, entry in self._slots()])

    def evaluate(self, observation: Any) -> np.ndarray:
        """Length-M estimate vector in label order."""
        return self.flatten(self.run(observation))


class FieldEstimator(BaseModel):
    """Named observation -> IntensityField estimator."""
    name: str = Field(..., min_length=1)
    estimator: Callable[[Any], Any]
