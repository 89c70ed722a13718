"""
Gaussian determinantal point process: existence bound, theoretical summaries and
spectral simulation on a rectangle.
"""
import logging
from typing import Optional, Tuple

import numpy as np

from estavg.config import settings
from estavg.exceptions import ExistenceViolatedError, TruncationTooCoarseError
from estavg.schemas.geometry import PointPattern, Window
from estavg.schemas.model_spec import DppGaussSpec

logger = logging.getLogger(__name__)

# Exponents beyond this underflow to 0 in float64.
_EXP_FLOOR = 745.0
_BATCH = 64


def dpp_alpha_max(rho_max: float) -> float:
    """Largest admissible scale 1 / sqrt(pi * rho_max) of the Gaussian kernel."""
    if rho_max <= 0:
        raise ValueError("rho_max must be positive")
    return float(1.0 / np.sqrt(np.pi * rho_max))


def dpp_theory_g(alpha: float, r) -> np.ndarray:
    """Pair correlation 1 - exp(-2 r^2 / alpha^2)."""
    r = np.asarray(r, dtype=float)
    return -np.expm1(-2.0 * r ** 2 / alpha ** 2)


def dpp_theory_k(alpha: float, r) -> np.ndarray:
    """K function pi r^2 - (pi alpha^2 / 2)(1 - exp(-2 r^2 / alpha^2))."""
    r = np.asarray(r, dtype=float)
    return np.pi * r ** 2 + 0.5 * np.pi * alpha ** 2 * np.expm1(-2.0 * r ** 2 / alpha ** 2)


def _axis_weights(alpha: float, length: float, k: np.ndarray) -> np.ndarray:
    return np.exp(-((np.pi * alpha * k / length) ** 2))


def _axis_total(alpha: float, length: float) -> float:
    kmax = int(np.ceil(np.sqrt(_EXP_FLOOR) * length / (np.pi * alpha))) + 1
    k = np.arange(-kmax, kmax + 1)
    return float(_axis_weights(alpha, length, k).sum())


def spectral_modes(
    rho: float,
    alpha: float,
    window: Window,
    tail_mass: Optional[float] = None,
    max_modes: Optional[int] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Fourier modes of the periodized Gaussian kernel on ``window``.

    The box |k1| <= K1, |k2| <= K2 grows until the spectral mass left outside it
    drops below ``tail_mass``.

    Returns:
        (k, eigenvalues) with k an (m, 2) integer array

    Raises:
        TruncationTooCoarseError: If more than ``max_modes`` modes would be needed
    """
    tail_mass = settings.DPP_TAIL_MASS if tail_mass is None else tail_mass
    max_modes = settings.DPP_MAX_MODES if max_modes is None else max_modes
    scale = rho * np.pi * alpha ** 2
    lx, ly = window.width, window.height
    total_x, total_y = _axis_total(alpha, lx), _axis_total(alpha, ly)

    n = 1
    while True:
        kx = n
        ky = int(np.ceil(n * ly / lx))
        if (2 * kx + 1) * (2 * ky + 1) > max_modes:
            raise TruncationTooCoarseError(
                "Spectral truncation needs more Fourier modes than allowed",
                {"alpha": alpha, "rho": rho, "max_modes": max_modes},
            )
        box_x = _axis_weights(alpha, lx, np.arange(-kx, kx + 1)).sum()
        box_y = _axis_weights(alpha, ly, np.arange(-ky, ky + 1)).sum()
        if scale * (total_x * total_y - box_x * box_y) < tail_mass:
            break
        n += 1

    k1, k2 = np.meshgrid(np.arange(-kx, kx + 1), np.arange(-ky, ky + 1), indexing="ij")
    k = np.column_stack((k1.ravel(), k2.ravel()))
    eigenvalues = scale * _axis_weights(alpha, lx, k[:, 0]) * _axis_weights(alpha, ly, k[:, 1])
    return k, eigenvalues


def _mode_values(frequencies: np.ndarray, xy: np.ndarray, origin: np.ndarray) -> np.ndarray:
    """(len(xy), n) matrix of exp(2 pi i f . (x - origin))."""
    phase = 2.0 * np.pi * (xy - origin) @ frequencies.T
    return np.exp(1j * phase)


def sample_projection(frequencies: np.ndarray, window: Window, rng: np.random.Generator) -> np.ndarray:
    """
    Sample the projection process spanned by the Fourier modes ``frequencies``.

    Points are drawn one at a time: a uniform proposal x is accepted with
    probability (n - ||Q^H v(x)||^2) / n, where v(x) holds the n mode values and Q
    is an orthonormal basis of the vectors of the points accepted so far.
    """
    n = frequencies.shape[0]
    if n == 0:
        return np.zeros((0, 2))
    origin = np.array([window.x0, window.y0])
    basis = np.zeros((n, 0), dtype=complex)
    points = []
    while len(points) < n:
        proposals = window.uniform(rng, _BATCH)
        values = _mode_values(frequencies, proposals, origin)
        projected = values @ basis.conj()
        accept = (n - np.sum(np.abs(projected) ** 2, axis=1)) / n
        hits = np.flatnonzero(rng.random(_BATCH) < accept)
        if hits.size == 0:
            continue
        first = hits[0]
        v = values[first]
        # two Gram-Schmidt passes keep the basis orthonormal to working precision
        for _ in range(2):
            v = v - basis @ (basis.conj().T @ v)
        norm = np.linalg.norm(v)
        if norm <= 1e-12:
            continue
        basis = np.column_stack((basis, v / norm))
        points.append(proposals[first])
    return np.asarray(points)


def simulate_dpp_gauss(
    spec: DppGaussSpec,
    window: Window,
    rng: np.random.Generator,
    tail_mass: Optional[float] = None,
    max_modes: Optional[int] = None,
) -> PointPattern:
    """
    Simulate a Gaussian DPP on ``window`` by spectral sampling.

    The homogeneous process at rho_max is sampled through Bernoulli selection of
    Fourier modes and sequential projection sampling, then thinned with
    probability rho(u) / rho_max when the intensity is not constant.

    Raises:
        ExistenceViolatedError: If alpha exceeds 1 / sqrt(pi * rho_max)
        TruncationTooCoarseError: If the Fourier truncation cannot reach the tail mass
    """
    top = spec.rho_max(window)
    bound = dpp_alpha_max(top)
    if spec.alpha > bound * (1.0 + 1e-12):
        raise ExistenceViolatedError(
            f"alpha={spec.alpha:.6g} exceeds the existence bound {bound:.6g}",
            {"alpha": spec.alpha, "alpha_max": bound},
        )
    k, eigenvalues = spectral_modes(top, spec.alpha, window, tail_mass, max_modes)
    selected = rng.random(eigenvalues.shape[0]) < np.minimum(eigenvalues, 1.0)
    frequencies = k[selected] / np.array([window.width, window.height])
    points = sample_projection(frequencies, window, rng)
    if spec.beta1 != 0.0 and points.shape[0] > 0:
        keep = rng.random(points.shape[0]) * top < spec.intensity(points)
        points = points[keep]
    return PointPattern(points=points, window=window)
