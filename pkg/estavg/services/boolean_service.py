"""
Service layer for Boolean disc models.
Measures area fraction, exposed perimeter and lower tangent points of an observed
disc union, and inverts them into intensity and radius-shape estimates.
"""
import logging
from typing import List, Optional, Tuple

import numpy as np
from scipy.spatial import cKDTree

from estavg.config import settings
from estavg.exceptions import EmptySetError, SaturatedError
from estavg.models.boolean import MAX_RADIUS
from estavg.schemas.experiment import FitRecord, SetMeasurements
from estavg.schemas.geometry import GermGrainSet, Window

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
SATURATION = 1e-6
ALPHA_FLOOR = 1e-3


def _merged_length(intervals: List[Tuple[float, float]]) -> float:
    """Total length of the union of angular intervals, after reduction to [0, 2 pi)."""
    pieces = []
    for start, end in intervals:
        length = end - start
        if length <= 0.0:
            continue
        if length >= TWO_PI:
            return TWO_PI
        start = float(np.mod(start, TWO_PI))
        stop = start + length
        if stop > TWO_PI:
            pieces.append((start, TWO_PI))
            pieces.append((0.0, stop - TWO_PI))
        else:
            pieces.append((start, stop))
    if not pieces:
        return 0.0
    pieces.sort()
    total, current_start, current_end = 0.0, pieces[0][0], pieces[0][1]
    for start, end in pieces[1:]:
        if start > current_end:
            total += current_end - current_start
            current_start, current_end = start, end
        else:
            current_end = max(current_end, end)
    return total + current_end - current_start


def _window_gaps(cx: float, cy: float, r: float, window: Window) -> List[Tuple[float, float]]:
    """Angular intervals of the circle (cx, cy, r) lying outside the window."""
    gaps = []
    right = (window.x1 - cx) / r
    if right < 1.0:
        if right <= -1.0:
            return [(0.0, TWO_PI)]
        a = np.arccos(right)
        gaps.append((-a, a))
    left = (window.x0 - cx) / r
    if left > -1.0:
        if left >= 1.0:
            return [(0.0, TWO_PI)]
        a = np.arccos(left)
        gaps.append((a, TWO_PI - a))
    top = (window.y1 - cy) / r
    if top < 1.0:
        if top <= -1.0:
            return [(0.0, TWO_PI)]
        a = np.arcsin(top)
        gaps.append((a, np.pi - a))
    bottom = (window.y0 - cy) / r
    if bottom > -1.0:
        if bottom >= 1.0:
            return [(0.0, TWO_PI)]
        a = np.arcsin(bottom)
        gaps.append((np.pi - a, TWO_PI + a))
    return gaps


class BooleanService:
    """Service class for Boolean-model measurements and moment estimators."""

    @staticmethod
    def area_fraction(grains: GermGrainSet, window: Window, resolution: Optional[int] = None) -> float:
        """Covered fraction of the window, rasterized at resolution x resolution pixel centers."""
        resolution = resolution or settings.RASTER_RESOLUTION
        xs = window.x0 + (np.arange(resolution) + 0.5) * window.width / resolution
        ys = window.y0 + (np.arange(resolution) + 0.5) * window.height / resolution
        covered = np.zeros((resolution, resolution), dtype=bool)
        for (cx, cy), r in zip(grains.germs, grains.radii):
            ix = slice(np.searchsorted(xs, cx - r), np.searchsorted(xs, cx + r, side="right"))
            iy = slice(np.searchsorted(ys, cy - r), np.searchsorted(ys, cy + r, side="right"))
            if ix.start >= ix.stop or iy.start >= iy.stop:
                continue
            dx = xs[ix][:, None] - cx
            dy = ys[iy][None, :] - cy
            covered[ix, iy] |= dx ** 2 + dy ** 2 <= r ** 2
        return float(covered.mean())

    @staticmethod
    def exposed_perimeter(grains: GermGrainSet, window: Window) -> float:
        """
        Length of the union boundary inside the window.

        For each circle, the arcs covered by overlapping discs and the arcs outside the
        window are merged on [0, 2 pi); the rest is exposed. Coincident discs count once.
        """
        if grains.n == 0:
            return 0.0
        tree = cKDTree(grains.germs)
        total = 0.0
        for i, ((cx, cy), r) in enumerate(zip(grains.germs, grains.radii)):
            gaps = _window_gaps(cx, cy, r, window)
            if gaps == [(0.0, TWO_PI)]:
                continue
            hidden = False
            for j in tree.query_ball_point((cx, cy), r + MAX_RADIUS):
                if j == i:
                    continue
                rj = grains.radii[j]
                dx, dy = grains.germs[j, 0] - cx, grains.germs[j, 1] - cy
                d = np.hypot(dx, dy)
                if d >= r + rj:
                    continue
                if d + r <= rj:
                    coincident = d == 0.0 and r == rj
                    if not coincident or j < i:
                        hidden = True
                        break
                    continue
                if d + rj <= r:
                    continue
                half = np.arccos(np.clip((r ** 2 + d ** 2 - rj ** 2) / (2.0 * r * d), -1.0, 1.0))
                phi = np.arctan2(dy, dx)
                gaps.append((phi - half, phi + half))
            if hidden:
                continue
            total += r * (TWO_PI - _merged_length(gaps))
        return total

    @staticmethod
    def tangent_count(grains: GermGrainSet, window: Window) -> int:
        """Discs whose lowest point lies in the window and strictly inside no other disc."""
        if grains.n == 0:
            return 0
        lowest = grains.germs - np.column_stack((np.zeros(grains.n), grains.radii))
        inside = window.contains(lowest)
        tree = cKDTree(grains.germs)
        count = 0
        for i in np.flatnonzero(inside):
            covered = False
            for j in tree.query_ball_point(lowest[i], MAX_RADIUS):
                if j != i and np.hypot(*(lowest[i] - grains.germs[j])) < grains.radii[j]:
                    covered = True
                    break
            count += not covered
        return count

    @staticmethod
    def measure_set(
        grains: GermGrainSet, window: Optional[Window] = None, resolution: Optional[int] = None
    ) -> SetMeasurements:
        """Area fraction, exposed boundary length per unit area and tangent-point count."""
        window = window or grains.window
        return SetMeasurements(
            p_hat=BooleanService.area_fraction(grains, window, resolution),
            la_hat=BooleanService.exposed_perimeter(grains, window) / window.area,
            tangent_count=BooleanService.tangent_count(grains, window),
            window_area=window.area,
        )

    @staticmethod
    def boolean_fit_area_perimeter(m: SetMeasurements) -> FitRecord:
        """
        Moment estimator of (rho, alpha) from the area fraction and boundary length.

        With c1 = L_A / (2 pi (1 - p)) and c2 = -log(1 - p): alpha = 0.2 pi c1 / c2 - 2 and
        rho = c1 (1 + alpha) / 0.1. A nonpositive alpha is clamped to 1e-3 and flagged.

        Raises:
            SaturatedError: If p_hat >= 1 - 1e-6
            EmptySetError: If nothing is covered or no boundary is visible
        """
        if m.p_hat >= 1.0 - SATURATION:
            raise SaturatedError("Window is fully covered; moments cannot be inverted", {"p_hat": m.p_hat})
        if m.p_hat <= 0.0 or m.la_hat <= 0.0:
            raise EmptySetError("No grain is visible in the window", {"p_hat": m.p_hat, "la_hat": m.la_hat})
        c1 = m.la_hat / (TWO_PI * (1.0 - m.p_hat))
        c2 = -np.log1p(-m.p_hat)
        alpha = 0.2 * np.pi * c1 / c2 - 2.0
        flags = []
        if alpha <= 0.0:
            logger.warning("Shape estimate %.4g is not positive; clamped to %.0e", alpha, ALPHA_FLOOR)
            alpha = ALPHA_FLOOR
            flags.append("invalid-shape")
        rho = c1 * (1.0 + alpha) / MAX_RADIUS
        return FitRecord(
            estimator="area-perim", family="boolean",
            values={"rho": float(rho), "alpha": float(alpha)}, flags=flags,
        )

    @staticmethod
    def boolean_fit_tangent(m: SetMeasurements, window: Optional[Window] = None) -> FitRecord:
        """
        Intensity from exposed lower tangent points: count / ((1 - p_hat) |W|).

        Raises:
            SaturatedError: If p_hat >= 1 - 1e-6
        """
        if m.p_hat >= 1.0 - SATURATION:
            raise SaturatedError("Window is fully covered; no tangent point can be exposed", {"p_hat": m.p_hat})
        area = window.area if window is not None else m.window_area
        return FitRecord(
            estimator="tangent", family="boolean",
            values={"rho": m.tangent_count / ((1.0 - m.p_hat) * area)},
        )
