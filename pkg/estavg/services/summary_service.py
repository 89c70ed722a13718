"""
Service layer for nonparametric spatial summaries.
Ripley's K, the pair correlation function and kernel intensity estimation with
translation edge correction, plus the three bandwidth rules.
"""
import logging
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import special, stats
from scipy.spatial import cKDTree

from estavg.config import settings
from estavg.exceptions import EmptyPatternError, NonpositiveRError, RangeTooLargeError, TooFewPointsError
from estavg.schemas.geometry import IntensityField, PointPattern, SummaryFunction

logger = logging.getLogger(__name__)

BANDWIDTH_RULES = ("default", "diggle", "ppl")
N_CANDIDATES = 32
STOYAN_COEFFICIENT = 0.15


def _pairs(pattern: PointPattern, rmax: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Unordered pairs i < j closer than ``rmax`` and their distances, sorted by (i, j)."""
    if pattern.n < 2 or rmax <= 0:
        empty = np.zeros(0, dtype=int)
        return empty, empty, np.zeros(0)
    pairs = cKDTree(pattern.points).query_pairs(rmax, output_type="ndarray")
    if pairs.size == 0:
        empty = np.zeros(0, dtype=int)
        return empty, empty, np.zeros(0)
    pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]
    i, j = pairs[:, 0], pairs[:, 1]
    d = np.linalg.norm(pattern.points[i] - pattern.points[j], axis=1)
    return i, j, d


def translation_correction(pattern: PointPattern, i: np.ndarray, j: np.ndarray) -> np.ndarray:
    """e_ij = |W| / |W intersected with W translated by x_j - x_i|."""
    window = pattern.window
    delta = np.abs(pattern.points[i] - pattern.points[j])
    overlap = (window.width - delta[:, 0]) * (window.height - delta[:, 1])
    return window.area / overlap


def _pair_weights(pattern: PointPattern, i: np.ndarray, j: np.ndarray, intensity_weights) -> np.ndarray:
    if intensity_weights is None:
        rho = pattern.intensity
        return np.full(i.shape[0], 1.0 / rho ** 2)
    rho = np.asarray(intensity_weights, dtype=float).reshape(-1)
    if rho.shape[0] != pattern.n:
        raise ValueError("intensity_weights needs one value per point")
    return 1.0 / (rho[i] * rho[j])


def _epanechnikov(t: np.ndarray, half_width: float) -> np.ndarray:
    u = t / half_width
    return np.where(np.abs(u) < 1.0, 0.75 * (1.0 - u ** 2) / half_width, 0.0)


class SummaryService:
    """Service class for K, g and kernel intensity estimates."""

    @staticmethod
    def close_pairs(pattern: PointPattern, rmax: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Indices (i < j) and distances of the pairs closer than ``rmax``."""
        return _pairs(pattern, rmax)

    @staticmethod
    def pair_contributions(
        pattern: PointPattern, rmax: float, intensity_weights: Optional[Sequence[float]] = None
    ) -> Tuple[np.ndarray, np.ndarray]:
        """
        Distances of the pairs closer than ``rmax`` and their K increments 2 w_ij e_ij / |W|
        (both orderings of each pair counted).
        """
        i, j, d = _pairs(pattern, rmax)
        increments = (
            2.0 * _pair_weights(pattern, i, j, intensity_weights)
            * translation_correction(pattern, i, j) / pattern.window.area
        )
        return d, increments

    @staticmethod
    def ripley_k(
        pattern: PointPattern,
        rgrid: Sequence[float],
        intensity_weights: Optional[Sequence[float]] = None,
    ) -> SummaryFunction:
        """
        Translation-corrected K estimate on ``rgrid``.

        Args:
            pattern: Observed pattern with at least two points
            rgrid: Increasing distances, at most a quarter of the shorter window side
            intensity_weights: Optional per-point intensities (inhomogeneous K)

        Raises:
            TooFewPointsError: If the pattern has fewer than two points
            RangeTooLargeError: If max(rgrid) exceeds a quarter of the shorter side
        """
        r = np.asarray(rgrid, dtype=float)
        if pattern.n < 2:
            raise TooFewPointsError("K estimation needs at least two points", {"n": pattern.n})
        limit = pattern.window.shorter_side / 4.0
        if r.size and r[-1] > limit * (1.0 + 1e-12):
            raise RangeTooLargeError(
                f"r up to {r[-1]:.6g} exceeds a quarter of the shorter window side ({limit:.6g})",
                {"rmax": float(r[-1]), "limit": limit},
            )
        d, increments = SummaryService.pair_contributions(pattern, float(r[-1]) if r.size else 0.0, intensity_weights)
        order = np.argsort(d, kind="stable")
        cumulative = np.concatenate(([0.0], np.cumsum(increments[order])))
        values = cumulative[np.searchsorted(d[order], r, side="right")]
        return SummaryFunction(r=r, values=values)

    @staticmethod
    def pcf_estimate(
        pattern: PointPattern,
        rgrid: Sequence[float],
        bandwidth: Optional[float] = None,
        intensity_weights: Optional[Sequence[float]] = None,
    ) -> SummaryFunction:
        """
        Kernel estimate of the pair correlation function.

        g(r) = sum over ordered pairs of k_b(r - d_ij) e_ij w_ij / (2 pi r |W|), with the
        Epanechnikov kernel of half-width b (default 0.15 / sqrt(rho_hat)).

        Raises:
            TooFewPointsError: If the pattern has fewer than two points
            NonpositiveRError: If some r is not positive
        """
        r = np.asarray(rgrid, dtype=float)
        if pattern.n < 2:
            raise TooFewPointsError("pcf estimation needs at least two points", {"n": pattern.n})
        if np.any(r <= 0):
            raise NonpositiveRError("pcf needs strictly positive r values", {"rmin": float(r.min())})
        b = bandwidth if bandwidth is not None else STOYAN_COEFFICIENT / np.sqrt(pattern.intensity)
        if b <= 0:
            raise ValueError("pcf bandwidth must be positive")
        i, j, d = _pairs(pattern, float(r.max()) + b)
        contributions = (
            2.0 * _pair_weights(pattern, i, j, intensity_weights) * translation_correction(pattern, i, j)
        )
        smoothed = _epanechnikov(r[:, None] - d[None, :], b) @ contributions
        values = smoothed / (2.0 * np.pi * r * pattern.window.area)
        return SummaryFunction(r=r, values=values)

    @staticmethod
    def kernel_matrices(
        pattern: PointPattern, bandwidth: float, x: np.ndarray, y: np.ndarray
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Separable Gaussian kernel factors at the coordinates ``x`` and ``y`` and the
        edge-correction mass c_b(x_i) of every point.
        """
        w = pattern.window
        phi_x = stats.norm.pdf(x[:, None], loc=pattern.x[None, :], scale=bandwidth)
        phi_y = stats.norm.pdf(y[:, None], loc=pattern.y[None, :], scale=bandwidth)
        mass_x = special.ndtr((w.x1 - pattern.x) / bandwidth) - special.ndtr((w.x0 - pattern.x) / bandwidth)
        mass_y = special.ndtr((w.y1 - pattern.y) / bandwidth) - special.ndtr((w.y0 - pattern.y) / bandwidth)
        return phi_x, phi_y, mass_x * mass_y

    @staticmethod
    def kernel_intensity(
        pattern: PointPattern,
        grid: Optional[Tuple[int, int]] = None,
        bandwidth: Optional[float] = None,
    ) -> IntensityField:
        """
        Edge-corrected Gaussian kernel intensity at the pixel centers.

        Args:
            pattern: Observed pattern (an empty pattern gives the zero field)
            grid: (nx, ny) pixel counts, defaults to settings
            bandwidth: Kernel standard deviation, defaults to the ``default`` rule
        """
        nx, ny = grid if grid is not None else (settings.GRID_NX, settings.GRID_NY)
        b = bandwidth if bandwidth is not None else SummaryService.select_bandwidth(pattern, "default")
        if b <= 0:
            raise ValueError("kernel bandwidth must be positive")
        field = IntensityField(window=pattern.window, nx=nx, ny=ny, values=np.zeros((nx, ny)))
        if pattern.n == 0:
            return field
        phi_x, phi_y, mass = SummaryService.kernel_matrices(pattern, b, field.x_centers, field.y_centers)
        return field.with_values((phi_x / mass[None, :]) @ phi_y.T)

    @staticmethod
    def candidate_bandwidths(pattern: PointPattern) -> np.ndarray:
        """32 log-spaced values spanning [side / 200, side / 4] of the shorter side."""
        side = pattern.window.shorter_side
        return np.geomspace(side / 200.0, side / 4.0, N_CANDIDATES)

    @staticmethod
    def ppl_score(pattern: PointPattern, bandwidth: float) -> float:
        """
        Leave-one-out likelihood cross-validation score sum log rho_{-i}(x_i) - n.

        With the edge correction every kernel integrates to one over the window,
        so the integral of the full estimate is exactly n.
        """
        phi_x, phi_y, mass = SummaryService.kernel_matrices(pattern, bandwidth, pattern.x, pattern.y)
        kernel = phi_x * phi_y / mass[None, :]
        np.fill_diagonal(kernel, 0.0)
        loo = kernel.sum(axis=1)
        with np.errstate(divide="ignore"):
            return float(np.sum(np.log(loo)) - pattern.n)

    @staticmethod
    def diggle_score(pattern: PointPattern, bandwidth: float) -> float:
        """
        Berman-Diggle mean-square-error criterion (up to a constant):
        1 / (4 pi b^2 rho) + int psi_b dK - 2 int phi_b dK over [0, quarter side],
        where phi_b is the Gaussian kernel and psi_b its self-convolution.
        """
        rmax = pattern.window.shorter_side / 4.0
        d, increments = SummaryService.pair_contributions(pattern, rmax)
        b2 = bandwidth ** 2
        psi = np.exp(-d ** 2 / (4.0 * b2)) / (4.0 * np.pi * b2)
        phi = np.exp(-d ** 2 / (2.0 * b2)) / (2.0 * np.pi * b2)
        return float(1.0 / (4.0 * np.pi * b2 * pattern.intensity) + increments @ psi - 2.0 * increments @ phi)

    @staticmethod
    def bandwidth_scores(pattern: PointPattern, rule: str) -> Tuple[np.ndarray, np.ndarray]:
        """
        Candidate bandwidths and the criterion of a data-driven rule at each of them.

        Raises:
            EmptyPatternError: If the pattern has no points
        """
        if rule not in ("diggle", "ppl"):
            raise ValueError(f"rule '{rule}' has no score; choose diggle or ppl")
        if pattern.n == 0:
            raise EmptyPatternError(f"bandwidth rule '{rule}' needs a nonempty pattern")
        candidates = SummaryService.candidate_bandwidths(pattern)
        score = SummaryService.diggle_score if rule == "diggle" else SummaryService.ppl_score
        return candidates, np.array([score(pattern, b) for b in candidates])

    @staticmethod
    def select_bandwidth(pattern: PointPattern, rule: str = "default") -> float:
        """
        Kernel bandwidth by rule.

        ``default`` is an eighth of the shorter window side; ``diggle`` minimizes the
        Berman-Diggle criterion and ``ppl`` maximizes the likelihood cross-validation
        score over the candidate grid.

        Raises:
            EmptyPatternError: For data-driven rules on an empty pattern
        """
        if rule not in BANDWIDTH_RULES:
            raise ValueError(f"unknown bandwidth rule '{rule}'; choose among {list(BANDWIDTH_RULES)}")
        if rule == "default":
            return pattern.window.shorter_side / 8.0
        candidates, scores = SummaryService.bandwidth_scores(pattern, rule)
        index = int(np.argmin(scores)) if rule == "diggle" else int(np.argmax(scores))
        if index in (0, len(candidates) - 1):
            logger.info("Bandwidth rule '%s' selected the candidate grid end %.6g", rule, candidates[index])
        return float(candidates[index])
