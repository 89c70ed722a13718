"""
Thomas cluster process: theoretical summaries and simulation.
"""
from typing import Tuple

import numpy as np

from estavg.schemas.geometry import PointPattern, Window
from estavg.schemas.model_spec import ThomasSpec

# Parents are simulated on the window dilated by this many sigmas.
PARENT_MARGIN = 5.0


def thomas_theory_g(kappa: float, sigma: float, r) -> np.ndarray:
    """Pair correlation 1 + exp(-r^2 / (4 sigma^2)) / (4 pi kappa sigma^2)."""
    r = np.asarray(r, dtype=float)
    return 1.0 + np.exp(-r ** 2 / (4.0 * sigma ** 2)) / (4.0 * np.pi * kappa * sigma ** 2)


def thomas_theory_k(kappa: float, sigma: float, r) -> np.ndarray:
    """K function pi r^2 + (1 - exp(-r^2 / (4 sigma^2))) / kappa."""
    r = np.asarray(r, dtype=float)
    return np.pi * r ** 2 - np.expm1(-r ** 2 / (4.0 * sigma ** 2)) / kappa


def simulate_clusters(
    spec: ThomasSpec, window: Window, rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Simulate parents and every child, before clipping to the window.

    Returns:
        (parents, children, parent index of each child)
    """
    extended = window.dilate(PARENT_MARGIN * spec.sigma)
    parents = extended.uniform(rng, rng.poisson(spec.kappa * extended.area))
    sizes = rng.poisson(spec.mu, parents.shape[0])
    owner = np.repeat(np.arange(parents.shape[0]), sizes)
    children = parents[owner] + rng.normal(0.0, spec.sigma, (owner.shape[0], 2))
    return parents, children, owner


def simulate_thomas(spec: ThomasSpec, window: Window, rng: np.random.Generator) -> PointPattern:
    """Children of Poisson parents that fall inside the window."""
    _, children, _ = simulate_clusters(spec, window, rng)
    return PointPattern(points=children[window.contains(children)], window=window)
