"""
Poisson intensity models and their simulation.
"""
import numpy as np

from estavg.exceptions import UnboundedIntensityError, UnknownPresetError
from estavg.schemas.geometry import IntensityField, PointPattern, Window
from estavg.schemas.model_spec import PoissonSpec

CLUSTER_CENTERS = ((0.25, 0.25), (0.25, 0.75), (0.75, 0.25), (0.75, 0.75))
CLUSTER_SD = 0.05
PRESETS = (1, 2, 3, 4)


def _cluster_bump(dx: np.ndarray, dy: np.ndarray) -> np.ndarray:
    return np.exp(-(dx ** 2 + dy ** 2) / CLUSTER_SD ** 2) / (2.0 * np.pi * CLUSTER_SD ** 2)


def poisson_intensity(preset: int, x, y) -> np.ndarray:
    """
    Intensity of model ``preset`` at (x, y).

    Model 1 is constant 100, model 2 constant 1000, model 3 four Gaussian
    clusters weighted by 25, model 4 decays as 1000 * exp(-3x).

    Raises:
        UnknownPresetError: If preset is not one of 1-4
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if preset == 1:
        return np.full(np.broadcast(x, y).shape, 100.0)
    if preset == 2:
        return np.full(np.broadcast(x, y).shape, 1000.0)
    if preset == 3:
        total = np.zeros(np.broadcast(x, y).shape)
        for a, b in CLUSTER_CENTERS:
            total = total + _cluster_bump(x - a, y - b)
        return 25.0 * total
    if preset == 4:
        return 1000.0 * np.exp(-3.0 * x) + 0.0 * y
    raise UnknownPresetError(f"Unknown Poisson intensity preset {preset}", {"preset": preset})


def evaluate_intensity(spec: PoissonSpec, xy: np.ndarray) -> np.ndarray:
    """Intensity of ``spec`` at each row of ``xy``."""
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    if spec.rho is not None:
        return np.full(xy.shape[0], spec.rho)
    if spec.field is not None:
        return spec.field.lookup(xy)
    return poisson_intensity(spec.preset, xy[:, 0], xy[:, 1])


def intensity_field(spec: PoissonSpec, window: Window, nx: int, ny: int) -> IntensityField:
    """Intensity of ``spec`` sampled at the pixel centers of an nx x ny grid."""
    grid = IntensityField(window=window, nx=nx, ny=ny, values=np.zeros((nx, ny)))
    xs, ys = np.meshgrid(grid.x_centers, grid.y_centers, indexing="ij")
    values = evaluate_intensity(spec, np.column_stack((xs.ravel(), ys.ravel())))
    return grid.with_values(values.reshape(nx, ny))


def rho_max(spec: PoissonSpec, window: Window) -> float:
    """
    Upper bound of the intensity over the window.

    Raises:
        UnboundedIntensityError: If the bound overflows or is not finite
    """
    if spec.rho is not None:
        bound = spec.rho
    elif spec.field is not None:
        bound = float(np.max(spec.field.values))
    elif spec.preset in (1, 2):
        bound = float(poisson_intensity(spec.preset, 0.0, 0.0))
    elif spec.preset == 3:
        # each bump peaks at the window point closest to its center
        bound = 0.0
        for a, b in CLUSTER_CENTERS:
            dx = a - np.clip(a, window.x0, window.x1)
            dy = b - np.clip(b, window.y0, window.y1)
            bound += 25.0 * float(_cluster_bump(dx, dy))
    elif spec.preset == 4:
        with np.errstate(over="ignore"):
            bound = float(1000.0 * np.exp(-3.0 * window.x0))
    else:
        poisson_intensity(spec.preset, 0.0, 0.0)
    if not np.isfinite(bound):
        raise UnboundedIntensityError(
            "Intensity is unbounded on the window", {"window": window.as_tuple()}
        )
    return max(bound, 0.0)


def simulate_poisson(spec: PoissonSpec, window: Window, rng: np.random.Generator) -> PointPattern:
    """
    Simulate a Poisson process on ``window``.

    Homogeneous intensities place a Poisson(rho |W|) count uniformly; other
    intensities are simulated at rho_max and thinned with probability rho(u) / rho_max.

    Raises:
        UnboundedIntensityError: If the intensity has no finite bound on the window
    """
    top = rho_max(spec, window)
    if top == 0.0:
        return PointPattern(points=np.zeros((0, 2)), window=window)
    count = rng.poisson(top * window.area)
    points = window.uniform(rng, count)
    if spec.homogeneous:
        return PointPattern(points=points, window=window)
    keep = rng.random(count) * top < evaluate_intensity(spec, points)
    return PointPattern(points=points[keep], window=window)


def simulate_field(field: IntensityField, rng: np.random.Generator) -> PointPattern:
    """Simulate a Poisson process whose intensity is the (clamped) pixel field."""
    clamped = field.with_values(np.maximum(field.values, 0.0))
    return simulate_poisson(PoissonSpec(field=clamped), field.window, rng)
