"""
Pydantic schemas for observations and tabulated summaries.
These schemas validate windows, point patterns, disc sets, r-curves and pixel fields.
"""
from typing import Tuple

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

# Slack for "inside the closed window" checks on floating point coordinates.
_INSIDE_TOL = 1e-9


class Window(BaseModel):
    """
    Rectangular observation window [x0, x1] x [y0, y1].
    """
    x0: float = Field(..., description="Left edge")
    x1: float = Field(..., description="Right edge")
    y0: float = Field(..., description="Bottom edge")
    y1: float = Field(..., description="Top edge")

    @model_validator(mode="after")
    def validate_extent(self) -> "Window":
        """Validate that the window has positive width and height."""
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise ValueError("window must satisfy x1 > x0 and y1 > y0")
        return self

    @classmethod
    def unit(cls) -> "Window":
        return cls(x0=0.0, x1=1.0, y0=0.0, y1=1.0)

    @classmethod
    def square(cls, side: float) -> "Window":
        return cls(x0=0.0, x1=side, y0=0.0, y1=side)

    @classmethod
    def parse(cls, text: str) -> "Window":
        """Build a window from ``"x0,x1,y0,y1"``."""
        parts = [float(p) for p in text.split(",")]
        if len(parts) != 4:
            raise ValueError("window must be given as x0,x1,y0,y1")
        return cls(x0=parts[0], x1=parts[1], y0=parts[2], y1=parts[3])

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def shorter_side(self) -> float:
        return min(self.width, self.height)

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return (self.x0, self.x1, self.y0, self.y1)

    def dilate(self, margin: float) -> "Window":
        return Window(
            x0=self.x0 - margin, x1=self.x1 + margin,
            y0=self.y0 - margin, y1=self.y1 + margin,
        )

    def translate(self, dx: float, dy: float) -> "Window":
        return Window(x0=self.x0 + dx, x1=self.x1 + dx, y0=self.y0 + dy, y1=self.y1 + dy)

    def contains(self, xy: np.ndarray, tol: float = 0.0) -> np.ndarray:
        """Boolean mask of rows of ``xy`` lying in the closed window."""
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        return (
            (xy[:, 0] >= self.x0 - tol) & (xy[:, 0] <= self.x1 + tol)
            & (xy[:, 1] >= self.y0 - tol) & (xy[:, 1] <= self.y1 + tol)
        )

    def uniform(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """``n`` independent uniform locations in the window."""
        u = rng.random((n, 2))
        return np.column_stack((self.x0 + self.width * u[:, 0], self.y0 + self.height * u[:, 1]))


def _as_points(v) -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    if arr.size == 0:
        return np.zeros((0, 2))
    return arr.reshape(-1, 2)


class PointPattern(BaseModel):
    """
    Finite planar point set observed in a window.

    Attributes:
        points: (n, 2) array of coordinates, all inside the closed window
        window: Observation window
    """
    points: np.ndarray
    window: Window

    class Config:
        arbitrary_types_allowed = True

    @field_validator("points", mode="before")
    @classmethod
    def coerce_points(cls, v) -> np.ndarray:
        return _as_points(v)

    @model_validator(mode="after")
    def validate_inside(self) -> "PointPattern":
        """Validate that every point lies in the window."""
        tol = _INSIDE_TOL * max(1.0, self.window.width, self.window.height)
        if not np.all(np.isfinite(self.points)):
            raise ValueError("point coordinates must be finite")
        if not np.all(self.window.contains(self.points, tol)):
            raise ValueError("every point must lie inside the window")
        return self

    @property
    def n(self) -> int:
        return int(self.points.shape[0])

    @property
    def x(self) -> np.ndarray:
        return self.points[:, 0]

    @property
    def y(self) -> np.ndarray:
        return self.points[:, 1]

    @property
    def intensity(self) -> float:
        """Homogeneous intensity estimate n/|W|."""
        return self.n / self.window.area

    def translate(self, dx: float, dy: float) -> "PointPattern":
        return PointPattern(points=self.points + np.array([dx, dy]), window=self.window.translate(dx, dy))

    def union(self, other: "PointPattern") -> "PointPattern":
        return PointPattern(points=np.vstack((self.points, other.points)), window=self.window)


class GermGrainSet(BaseModel):
    """
    Union of discs observed through a window.

    Germs may fall outside the window (dilated sampling); only the trace of the
    union inside the window is observable.
    """
    germs: np.ndarray
    radii: np.ndarray
    window: Window

    class Config:
        arbitrary_types_allowed = True

    @field_validator("germs", mode="before")
    @classmethod
    def coerce_germs(cls, v) -> np.ndarray:
        return _as_points(v)

    @field_validator("radii", mode="before")
    @classmethod
    def coerce_radii(cls, v) -> np.ndarray:
        return np.asarray(v, dtype=float).reshape(-1)

    @model_validator(mode="after")
    def validate_grains(self) -> "GermGrainSet":
        """Validate radii lengths and the (0, 0.1] radius range."""
        if self.radii.shape[0] != self.germs.shape[0]:
            raise ValueError("germs and radii must have the same length")
        if np.any(self.radii <= 0.0) or np.any(self.radii > 0.1 + 1e-12):
            raise ValueError("radii must lie in (0, 0.1]")
        return self

    @property
    def n(self) -> int:
        return int(self.radii.shape[0])


class SummaryFunction(BaseModel):
    """
    Tabulated r -> value curve (K, g, or any other radial summary).
    """
    r: np.ndarray
    values: np.ndarray

    class Config:
        arbitrary_types_allowed = True

    @field_validator("r", "values", mode="before")
    @classmethod
    def coerce_array(cls, v) -> np.ndarray:
        return np.asarray(v, dtype=float).reshape(-1)

    @model_validator(mode="after")
    def validate_grid(self) -> "SummaryFunction":
        """Validate equal lengths and a strictly increasing nonnegative r grid."""
        if self.r.shape != self.values.shape:
            raise ValueError("r and values must have the same length")
        if self.r.size == 0:
            raise ValueError("summary function needs at least one r value")
        if self.r[0] < 0 or np.any(np.diff(self.r) <= 0):
            raise ValueError("r must be strictly increasing and start at r >= 0")
        return self

    def at(self, r: np.ndarray) -> np.ndarray:
        """Linear interpolation of the curve at ``r``."""
        return np.interp(np.asarray(r, dtype=float), self.r, self.values)


class IntensityField(BaseModel):
    """
    Pixel grid of intensity values (points per unit area).

    ``values[i, j]`` is the value at the center of pixel column i and row j.
    """
    window: Window
    nx: int = Field(..., ge=2)
    ny: int = Field(..., ge=2)
    values: np.ndarray

    class Config:
        arbitrary_types_allowed = True

    @field_validator("values", mode="before")
    @classmethod
    def coerce_values(cls, v) -> np.ndarray:
        return np.asarray(v, dtype=float)

    @model_validator(mode="after")
    def validate_values(self) -> "IntensityField":
        """Validate shape and finiteness of the pixel values."""
        if self.values.shape != (self.nx, self.ny):
            raise ValueError(f"values must have shape ({self.nx}, {self.ny})")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")
        return self

    @property
    def pixel_width(self) -> float:
        return self.window.width / self.nx

    @property
    def pixel_height(self) -> float:
        return self.window.height / self.ny

    @property
    def pixel_area(self) -> float:
        return self.pixel_width * self.pixel_height

    @property
    def x_centers(self) -> np.ndarray:
        return self.window.x0 + (np.arange(self.nx) + 0.5) * self.pixel_width

    @property
    def y_centers(self) -> np.ndarray:
        return self.window.y0 + (np.arange(self.ny) + 0.5) * self.pixel_height

    def mass(self) -> float:
        """Integral of the field over the window (midpoint rule)."""
        return float(self.values.sum() * self.pixel_area)

    def same_grid(self, other: "IntensityField") -> bool:
        return (
            self.nx == other.nx and self.ny == other.ny
            and self.window.as_tuple() == other.window.as_tuple()
        )

    def with_values(self, values: np.ndarray) -> "IntensityField":
        return IntensityField(window=self.window, nx=self.nx, ny=self.ny, values=values)

    def lookup(self, xy: np.ndarray) -> np.ndarray:
        """Piecewise-constant value of the field at each row of ``xy``."""
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        i = np.clip(((xy[:, 0] - self.window.x0) / self.pixel_width).astype(int), 0, self.nx - 1)
        j = np.clip(((xy[:, 1] - self.window.y0) / self.pixel_height).astype(int), 0, self.ny - 1)
        return self.values[i, j]
