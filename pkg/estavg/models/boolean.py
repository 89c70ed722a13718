"""
Boolean model of discs with radii 0.1 * Beta(1, alpha).
"""
from typing import Tuple

import numpy as np

from estavg.schemas.geometry import GermGrainSet, Window
from estavg.schemas.model_spec import BooleanSpec

MAX_RADIUS = 0.1


def boolean_moments(alpha_r: float) -> Tuple[float, float]:
    """(E[R], E[R^2]) of R = 0.1 * Beta(1, alpha_r)."""
    mean = MAX_RADIUS / (1.0 + alpha_r)
    second = 2.0 * MAX_RADIUS ** 2 / ((1.0 + alpha_r) * (2.0 + alpha_r))
    return mean, second


def boolean_theory(rho: float, alpha_r: float) -> Tuple[float, float]:
    """
    Area fraction p = 1 - exp(-rho pi E[R^2]) and boundary length per unit area
    L_A = 2 pi rho E[R] (1 - p).
    """
    mean, second = boolean_moments(alpha_r)
    p = -np.expm1(-rho * np.pi * second)
    la = 2.0 * np.pi * rho * mean * (1.0 - p)
    return float(p), float(la)


def sample_radii(alpha_r: float, rng: np.random.Generator, n: int) -> np.ndarray:
    """Inverse-transform draws 0.1 * (1 - U^(1/alpha_r)), always in (0, 0.1]."""
    u = rng.random(n)
    with np.errstate(divide="ignore"):
        return MAX_RADIUS * -np.expm1(np.log(u) / alpha_r)


def simulate_boolean(spec: BooleanSpec, window: Window, rng: np.random.Generator) -> GermGrainSet:
    """Poisson germs on the window dilated by the largest radius, with independent radii."""
    extended = window.dilate(MAX_RADIUS)
    germs = extended.uniform(rng, rng.poisson(spec.rho * extended.area))
    radii = sample_radii(spec.alpha_r, rng, germs.shape[0])
    return GermGrainSet(germs=germs, radii=radii, window=window)
