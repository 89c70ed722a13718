"""
Service layer for averaging weights.
Solves oracle, foreign-estimator (group), masked and convex weights from an MSE matrix
and evaluates combined estimates with their plug-in MSE.
"""
import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg, stats

from estavg.config import settings
from estavg.exceptions import DimensionMismatchError, NotPsdError, SingularMatrixError
from estavg.schemas.averaging import GroupStructure, MseMatrix, WeightMode, WeightSolution

logger = logging.getLogger(__name__)


def _guarded_solve(sigma: np.ndarray, rhs: np.ndarray, cap: float) -> np.ndarray:
    """
    Solve sigma @ x = rhs through a symmetric eigendecomposition.

    Raises:
        SingularMatrixError: If sigma is singular or its condition number exceeds ``cap``
    """
    eigvals, eigvecs = linalg.eigh(sigma)
    magnitudes = np.abs(eigvals)
    largest = float(magnitudes.max()) if magnitudes.size else 0.0
    smallest = float(magnitudes.min()) if magnitudes.size else 0.0
    if largest == 0.0 or smallest == 0.0 or largest / smallest > cap:
        condition = np.inf if smallest == 0.0 else largest / smallest
        raise SingularMatrixError(
            "MSE matrix is singular or ill-conditioned; increase the bootstrap size "
            "or remove duplicated estimators",
            {"condition": condition, "cap": cap},
        )
    return eigvecs @ ((eigvecs.T @ rhs) / eigvals[:, None])


def _quadratic_forms(sigma: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Per-column w_p^T sigma w_p with negative values clamped to 0."""
    forms = np.einsum("mp,mn,np->p", weights, sigma, weights)
    if np.any(forms < 0):
        logger.warning("Negative estimated MSE %s clamped to 0 (indefinite MSE matrix)", forms.tolist())
        forms = np.maximum(forms, 0.0)
    return forms


def _check_psd(sigma: np.ndarray, tolerance: float) -> None:
    eigvals = linalg.eigvalsh(sigma)
    trace = float(np.trace(sigma))
    if eigvals.min() < -tolerance * max(trace, 0.0):
        raise NotPsdError(
            "MSE matrix is not positive semidefinite",
            {"min_eigenvalue": float(eigvals.min()), "trace": trace},
        )


def _simplex_qp(sigma: np.ndarray, tol: float = 1e-12, max_iter: int = 500) -> np.ndarray:
    """
    Primal active-set solver for min w^T sigma w s.t. 1^T w = 1, w >= 0.

    The working set holds the coordinates fixed at zero. Starts from the best vertex.
    """
    m = sigma.shape[0]
    w = np.zeros(m)
    start = int(np.argmin(np.diag(sigma)))
    w[start] = 1.0
    fixed = np.ones(m, dtype=bool)
    fixed[start] = False

    for _ in range(max_iter):
        free = np.flatnonzero(~fixed)
        k = free.size
        # KKT system of the equality-constrained subproblem on the free set
        kkt = np.zeros((k + 1, k + 1))
        kkt[:k, :k] = 2.0 * sigma[np.ix_(free, free)]
        kkt[:k, k] = -1.0
        kkt[k, :k] = 1.0
        rhs = np.zeros(k + 1)
        rhs[k] = 1.0
        sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
        target = np.zeros(m)
        target[free] = sol[:k]
        step = target - w

        if np.max(np.abs(step)) <= tol:
            grad = 2.0 * sigma @ w
            nu = float(np.mean(grad[free]))
            multipliers = grad - nu
            candidates = np.flatnonzero(fixed)
            if candidates.size == 0 or multipliers[candidates].min() >= -tol * max(1.0, abs(nu)):
                return w
            release = candidates[np.argmin(multipliers[candidates])]
            fixed[release] = False
            continue

        blocking = free[step[free] < 0]
        alpha = 1.0
        blocker = -1
        for i in blocking:
            ratio = -w[i] / step[i]
            if ratio < alpha:
                alpha, blocker = ratio, int(i)
        w = w + alpha * step
        if blocker >= 0:
            w[blocker] = 0.0
            fixed[blocker] = True
        w = np.maximum(w, 0.0)
        w /= w.sum()
    return w


class AveragingService:
    """Service class for averaging weights and combined estimates."""

    @staticmethod
    def oracle_weights(sigma: MseMatrix, condition_cap: Optional[float] = None) -> WeightSolution:
        """
        Weights Sigma^-1 1 / (1^T Sigma^-1 1) minimizing w^T Sigma w subject to 1^T w = 1.

        Args:
            sigma: MSE matrix of the estimator collection
            condition_cap: Largest accepted condition number (defaults to settings)

        Returns:
            Linear-mode solution with estimated_mse = (1^T Sigma^-1 1)^-1

        Raises:
            SingularMatrixError: If sigma cannot be inverted safely
        """
        return AveragingService.group_weights(
            sigma, GroupStructure(sizes=[sigma.size]), mode="full", condition_cap=condition_cap
        )

    @staticmethod
    def group_weights(
        sigma: MseMatrix,
        groups: GroupStructure,
        mode: str = "full",
        condition_cap: Optional[float] = None,
    ) -> WeightSolution:
        """
        Weight matrix Sigma^-1 L (L^T Sigma^-1 L)^-1 for P parameters with foreign estimators.

        In ``masked`` mode the cross-group blocks of Sigma are zeroed first, so every
        column only mixes estimators of its own parameter.

        Args:
            sigma: MSE matrix of all M estimators, grouped contiguously by parameter
            groups: Group sizes (J_1, ..., J_P) with sum M
            mode: "full" or "masked"
            condition_cap: Largest accepted condition number (defaults to settings)

        Returns:
            Weight solution in linear (full) or masked mode

        Raises:
            DimensionMismatchError: If sum of group sizes differs from the matrix size
            SingularMatrixError: If the (masked) matrix cannot be inverted safely
        """
        if groups.total != sigma.size:
            raise DimensionMismatchError(
                f"Group sizes sum to {groups.total} but the MSE matrix is {sigma.size}x{sigma.size}"
            )
        if mode not in ("full", "masked"):
            raise ValueError(f"unknown group weight mode '{mode}'")
        cap = condition_cap if condition_cap is not None else settings.CONDITION_CAP
        arr = sigma.as_array()
        if mode == "masked":
            arr = arr * groups.support()
        selector = groups.selector()
        inv_l = _guarded_solve(arr, selector, cap)
        gram = selector.T @ inv_l
        gram = 0.5 * (gram + gram.T)
        weights = _guarded_solve(gram, inv_l.T, cap).T
        return WeightSolution(
            weights=weights.tolist(),
            estimated_mse=_quadratic_forms(arr, weights).tolist(),
            mode=WeightMode.LINEAR if mode == "full" else WeightMode.MASKED,
        )

    @staticmethod
    def convex_weights(sigma: MseMatrix, psd_tolerance: Optional[float] = None) -> WeightSolution:
        """
        Nonnegative weights summing to one that minimize w^T Sigma w.

        Args:
            sigma: Positive semidefinite MSE matrix
            psd_tolerance: Relative tolerance on negative eigenvalues (times trace)

        Returns:
            Convex-mode solution with a single column

        Raises:
            NotPsdError: If sigma has an eigenvalue below -tolerance * trace
        """
        arr = sigma.as_array()
        _check_psd(arr, psd_tolerance if psd_tolerance is not None else settings.PSD_TOLERANCE)
        w = _simplex_qp(arr)
        weights = w[:, None]
        return WeightSolution(
            weights=weights.tolist(),
            estimated_mse=_quadratic_forms(arr, weights).tolist(),
            mode=WeightMode.CONVEX,
        )

    @staticmethod
    def blockwise_convex(sigma: MseMatrix, groups: GroupStructure) -> WeightSolution:
        """Convex weights solved separately on each diagonal block; foreign weights are 0."""
        if groups.total != sigma.size:
            raise DimensionMismatchError(
                f"Group sizes sum to {groups.total} but the MSE matrix is {sigma.size}x{sigma.size}"
            )
        arr = sigma.as_array()
        weights = np.zeros((sigma.size, groups.n_groups))
        for p in range(groups.n_groups):
            block = groups.block(p)
            sub = MseMatrix.from_array(sigma.labels[block], arr[block, block])
            weights[block, p] = AveragingService.convex_weights(sub).as_array()[:, 0]
        return WeightSolution(
            weights=weights.tolist(),
            estimated_mse=_quadratic_forms(arr, weights).tolist(),
            mode=WeightMode.CONVEX,
        )

    @staticmethod
    def combine(estimates: Sequence[float], solution: WeightSolution) -> np.ndarray:
        """
        Combined estimates result[p] = sum_m weights[m, p] * estimates[m].

        Raises:
            DimensionMismatchError: If the estimate vector length differs from M
        """
        est = np.asarray(estimates, dtype=float).reshape(-1)
        weights = solution.as_array()
        if est.shape[0] != weights.shape[0]:
            raise DimensionMismatchError(
                f"Got {est.shape[0]} estimates for a {weights.shape[0]}-estimator weight matrix"
            )
        return weights.T @ est

    @staticmethod
    def solution_mse(sigma: MseMatrix, solution: WeightSolution) -> np.ndarray:
        """
        Quadratic risk w_p^T Sigma w_p of each weight column under ``sigma``.

        Raises:
            DimensionMismatchError: If the weight matrix does not match sigma
        """
        weights = solution.as_array()
        if weights.shape[0] != sigma.size:
            raise DimensionMismatchError(
                f"Weight matrix has {weights.shape[0]} rows but the MSE matrix is {sigma.size}x{sigma.size}"
            )
        return _quadratic_forms(sigma.as_array(), weights)

    @staticmethod
    def confidence_intervals(
        estimates: Sequence[float], mse: Sequence[float], level: float = 0.95
    ) -> List[Tuple[float, float]]:
        """Normal intervals estimate +/- z * sqrt(mse) built from the plug-in MSE."""
        z = float(stats.norm.ppf(0.5 + level / 2.0))
        half = z * np.sqrt(np.maximum(np.asarray(mse, dtype=float), 0.0))
        est = np.asarray(estimates, dtype=float)
        return [(float(e - h), float(e + h)) for e, h in zip(est, half)]
