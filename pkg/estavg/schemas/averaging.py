"""
Pydantic schemas for MSE matrices, estimator groupings and solved weights.
"""
import enum
from typing import List

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator


class WeightMode(str, enum.Enum):
    """
    How a weight matrix was obtained.

    Attributes:
        LINEAR: Unconstrained weights (sum constraints only), full MSE matrix
        CONVEX: Nonnegative weights summing to one per group
        MASKED: Cross-group blocks of the MSE matrix zeroed before solving
    """
    LINEAR = "linear"
    CONVEX = "convex"
    MASKED = "masked"


class MseMatrix(BaseModel):
    """
    Symmetric matrix of (co-)mean-square errors of a labeled estimator collection.

    Attributes:
        labels: Estimator names, one per row/column
        entries: M x M matrix, symmetric as constructed, nonnegative diagonal
        flags: Diagnostics recorded while building the matrix (e.g. "not-psd")
    """
    labels: List[str] = Field(..., min_length=1)
    entries: List[List[float]]
    flags: List[str] = Field(default_factory=list)

    @model_validator(mode="after")
    def validate_matrix(self) -> "MseMatrix":
        """Validate shape, symmetry and the diagonal; symmetrize exactly."""
        m = len(self.labels)
        arr = np.asarray(self.entries, dtype=float)
        if arr.shape != (m, m):
            raise ValueError(f"entries must be a {m}x{m} matrix matching the labels")
        if not np.all(np.isfinite(arr)):
            raise ValueError("entries must be finite")
        scale = max(1.0, float(np.max(np.abs(arr))))
        if np.max(np.abs(arr - arr.T)) > 1e-9 * scale:
            raise ValueError("entries must be symmetric")
        if np.any(np.diag(arr) < 0):
            raise ValueError("diagonal entries must be nonnegative")
        self.entries = (0.5 * (arr + arr.T)).tolist()
        return self

    @classmethod
    def from_array(cls, labels: List[str], arr: np.ndarray, flags: List[str] = None) -> "MseMatrix":
        return cls(labels=list(labels), entries=np.asarray(arr, dtype=float).tolist(), flags=list(flags or []))

    @property
    def size(self) -> int:
        return len(self.labels)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.entries, dtype=float)

    def scaled(self, c: float) -> "MseMatrix":
        return MseMatrix.from_array(self.labels, c * self.as_array(), self.flags)


class GroupStructure(BaseModel):
    """
    Assignment of M estimators to P target parameters, in contiguous blocks.

    Attributes:
        sizes: Estimator count per parameter (J_1, ..., J_P)
    """
    sizes: List[int] = Field(..., min_length=1)

    @field_validator("sizes")
    @classmethod
    def validate_sizes(cls, v: List[int]) -> List[int]:
        """Validate that every group holds at least one estimator."""
        if any(s < 1 for s in v):
            raise ValueError("every group must contain at least one estimator")
        return v

    @property
    def total(self) -> int:
        return sum(self.sizes)

    @property
    def n_groups(self) -> int:
        return len(self.sizes)

    def membership(self) -> np.ndarray:
        """Group index of each estimator."""
        return np.repeat(np.arange(self.n_groups), self.sizes)

    def selector(self) -> np.ndarray:
        """M x P matrix L with L[m, p] = 1 iff estimator m targets parameter p."""
        member = self.membership()
        return (member[:, None] == np.arange(self.n_groups)[None, :]).astype(float)

    def support(self) -> np.ndarray:
        """M x M mask keeping within-group blocks (L L^T)."""
        sel = self.selector()
        return sel @ sel.T

    def block(self, p: int) -> slice:
        start = sum(self.sizes[:p])
        return slice(start, start + self.sizes[p])


class WeightSolution(BaseModel):
    """
    Solved averaging weights and the plug-in MSE of each combined estimate.

    Attributes:
        weights: M x P matrix; column p sums to 1 over group p and to 0 over the others
        estimated_mse: Length-P vector w_p^T Sigma w_p, clamped at 0
        mode: How the weights were obtained
    """
    weights: List[List[float]]
    estimated_mse: List[float]
    mode: WeightMode

    @model_validator(mode="after")
    def validate_shapes(self) -> "WeightSolution":
        """Validate that the MSE vector has one entry per weight column."""
        arr = np.asarray(self.weights, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != len(self.estimated_mse):
            raise ValueError("weights must be M x P with P = len(estimated_mse)")
        if any(v < 0 for v in self.estimated_mse):
            raise ValueError("estimated_mse must be nonnegative")
        return self

    def as_array(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=float)

    @property
    def n_estimators(self) -> int:
        return len(self.weights)

    @property
    def n_parameters(self) -> int:
        return len(self.estimated_mse)
