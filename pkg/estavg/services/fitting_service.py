"""
Service layer for parametric fits of point patterns.
Handles the log-linear Poisson intensity, minimum contrast and Palm likelihood fits
for the Gaussian DPP and Thomas families.
"""
import logging
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import integrate, optimize

from estavg.exceptions import (
    DegenerateLikelihoodError,
    EmptyPatternError,
    NoPairsError,
    NonConvergenceError,
)
from estavg.models.dpp import dpp_alpha_max, dpp_theory_g, dpp_theory_k
from estavg.models.thomas import thomas_theory_g, thomas_theory_k
from estavg.schemas.experiment import ContrastConfig, FitRecord, OptimumResult
from estavg.schemas.geometry import PointPattern, SummaryFunction
from estavg.services.summary_service import SummaryService

logger = logging.getLogger(__name__)

Theory = Callable[[np.ndarray, np.ndarray], np.ndarray]
Intensity = Union[None, float, Tuple[float, float]]

PALM_FAMILIES = ("thomas", "dpp_gauss")
FIT_METHODS = ("K", "g", "palm")
BOUNDARY_TOL = 1e-6
STALL_TOLERANCE = 1e-8
ALPHA_FLOOR = 1e-3
# Objective value standing in for overflow or invalid parameters.
_PENALTY = 1e300
# Spread starting points of the two-parameter searches, as fractions of the log-bounds.
_START_FRACTIONS = ((0.5, 0.5), (0.25, 0.75), (0.75, 0.25))


def _log_sinhc(t: np.ndarray) -> np.ndarray:
    """log(sinh(t) / t), stable for small and large |t|."""
    a = np.abs(np.asarray(t, dtype=float))
    small = a < 1e-4
    safe = np.where(small, 1.0, a)
    large = safe + np.log1p(-np.exp(-2.0 * safe)) - np.log(2.0 * safe)
    return np.where(small, a ** 2 / 6.0, large)


def _langevin(t: float) -> float:
    """coth(t) - 1/t."""
    if abs(t) < 1e-4:
        return t / 3.0 - t ** 3 / 45.0
    return 1.0 / np.tanh(t) - 1.0 / t


def _langevin_prime(t: float) -> float:
    """Derivative 1/t^2 - 1/sinh(t)^2 of the Langevin function."""
    if abs(t) < 1e-3:
        return 1.0 / 3.0 - t ** 2 / 15.0 + 2.0 * t ** 4 / 189.0
    with np.errstate(over="ignore"):
        return 1.0 / t ** 2 - 1.0 / np.sinh(t) ** 2


def _log_x_integral(beta1: float, x0: float, x1: float) -> float:
    """log of the integral of exp(beta1 x) over [x0, x1]."""
    center, half = 0.5 * (x0 + x1), 0.5 * (x1 - x0)
    return float(beta1 * center + np.log(2.0 * half) + _log_sinhc(beta1 * half))


def _optimize(
    objective: Callable[[np.ndarray], float],
    bounds: Sequence[Tuple[float, float]],
    start: Optional[Sequence[float]] = None,
) -> OptimumResult:
    """
    Minimize ``objective`` over a box.

    One parameter: bounded golden-section (Brent) search. Two or more: Nelder-Mead in
    log-parameter space from three spread starting points, then a polishing restart
    from the best of them.
    """
    def guarded(params: np.ndarray) -> float:
        with np.errstate(all="ignore"):
            value = float(objective(np.asarray(params, dtype=float)))
        return value if np.isfinite(value) else _PENALTY

    flags: List[str] = []
    if len(bounds) == 1:
        lo, hi = bounds[0]
        res = optimize.minimize_scalar(
            lambda a: guarded(np.array([a])),
            bounds=(lo, hi),
            method="bounded",
            options={"xatol": 1e-12 * max(1.0, abs(hi))},
        )
        params = np.array([res.x])
        scaled, scaled_bounds = params, [(lo, hi)]
    else:
        log_bounds = [(np.log(lo), np.log(hi)) for lo, hi in bounds]

        def in_log(z: np.ndarray) -> float:
            return guarded(np.exp(z))

        starts = []
        for fractions in _START_FRACTIONS:
            starts.append(np.array([
                lo + f * (hi - lo) for (lo, hi), f in zip(log_bounds, fractions + (0.5,) * len(bounds))
            ]))
        if start is not None:
            starts[0] = np.clip(np.log(np.asarray(start, dtype=float)),
                                [b[0] for b in log_bounds], [b[1] for b in log_bounds])
        options = {"xatol": 1e-10, "fatol": 1e-16, "maxiter": 4000, "maxfev": 8000}
        runs = [
            optimize.minimize(in_log, z0, method="Nelder-Mead", bounds=log_bounds, options=options)
            for z0 in starts
        ]
        best = min(runs, key=lambda run: run.fun)
        polish = optimize.minimize(in_log, best.x, method="Nelder-Mead", bounds=log_bounds, options=options)
        if polish.fun <= best.fun:
            best = polish
        scaled, scaled_bounds = best.x, log_bounds
        params = np.exp(best.x)

    for value, (lo, hi) in zip(scaled, scaled_bounds):
        if value - lo < BOUNDARY_TOL or hi - value < BOUNDARY_TOL:
            flags.append("boundary-hit")
            logger.info("Optimum %s lies on the search bound %s", params.tolist(), list(bounds))
            break
    return OptimumResult(params=params.tolist(), objective=guarded(params), flags=flags)


class FittingService:
    """Service class for intensity, minimum contrast and Palm likelihood fits."""

    @staticmethod
    def loglinear_log_likelihood(pattern: PointPattern, beta0: float, beta1: float) -> float:
        """Poisson log-likelihood sum(beta0 + beta1 x_i) - integral of exp(beta0 + beta1 x) over W."""
        w = pattern.window
        integral = np.exp(beta0 + _log_x_integral(beta1, w.x0, w.x1)) * w.height
        return float(np.sum(beta0 + beta1 * pattern.x) - integral)

    @staticmethod
    def loglinear_gradient(pattern: PointPattern, beta0: float, beta1: float) -> np.ndarray:
        """Gradient of :meth:`loglinear_log_likelihood` in (beta0, beta1)."""
        w = pattern.window
        integral = np.exp(beta0 + _log_x_integral(beta1, w.x0, w.x1)) * w.height
        center, half = 0.5 * (w.x0 + w.x1), 0.5 * w.width
        x_mean = center + half * _langevin(beta1 * half)
        return np.array([pattern.n - integral, np.sum(pattern.x) - integral * x_mean])

    @staticmethod
    def fit_loglinear_intensity(
        pattern: PointPattern,
        homogeneous: bool = False,
        max_iter: int = 100,
        tol: float = 1e-10,
    ) -> FitRecord:
        """
        Maximum likelihood fit of the intensity exp(beta0 + beta1 x).

        beta0 is profiled out in closed form; Newton steps on beta1 use the
        Langevin-function mean and variance of x under exp(beta1 x) and are halved
        whenever they fail to increase the profile likelihood.

        Args:
            pattern: Nonempty point pattern
            homogeneous: Constrain beta1 to 0 (beta0 = log(n / |W|))
            max_iter: Newton iteration cap
            tol: Stop when the absolute score in beta1 drops below tol. When step halving
                can no longer raise the likelihood, the iterate is accepted if the score is
                within rounding noise, 1e-8 * max(1, n)

        Raises:
            EmptyPatternError: If the pattern is empty
            NonConvergenceError: If Newton does not converge within ``max_iter`` steps
        """
        n = pattern.n
        if n == 0:
            raise EmptyPatternError("Cannot fit an intensity to an empty pattern")
        w = pattern.window
        log_h = np.log(w.height)

        def beta0_of(beta1: float) -> float:
            return float(np.log(n) - log_h - _log_x_integral(beta1, w.x0, w.x1))

        if homogeneous:
            return FitRecord(
                estimator="loglinear", family="poisson",
                values={"beta0": float(np.log(n / w.area)), "beta1": 0.0},
            )

        center, half = 0.5 * (w.x0 + w.x1), 0.5 * w.width
        x_bar = float(np.mean(pattern.x))

        def profile(beta1: float) -> float:
            return beta1 * n * x_bar - n * _log_x_integral(beta1, w.x0, w.x1)

        beta1 = 0.0
        for iteration in range(max_iter):
            gradient = n * (x_bar - center - half * _langevin(beta1 * half))
            if abs(gradient) < tol:
                beta0 = beta0_of(beta1)
                return FitRecord(
                    estimator="loglinear", family="poisson",
                    values={"beta0": beta0, "beta1": beta1},
                )
            curvature = n * half ** 2 * _langevin_prime(beta1 * half)
            step = gradient / curvature
            current = profile(beta1)
            while step != 0.0 and profile(beta1 + step) < current:
                step /= 2.0
                if abs(step) < 1e-15 * max(1.0, abs(beta1)):
                    step = 0.0
            if step == 0.0:
                if abs(gradient) < STALL_TOLERANCE * max(1.0, n):
                    return FitRecord(
                        estimator="loglinear", family="poisson",
                        values={"beta0": beta0_of(beta1), "beta1": beta1},
                    )
                break
            beta1 += step
        raise NonConvergenceError(
            "Log-linear intensity fit did not converge",
            {"iterations": max_iter, "beta1": beta1},
        )

    @staticmethod
    def contrast_value(
        observed: SummaryFunction, theory: Theory, params: Sequence[float], cfg: ContrastConfig
    ) -> float:
        """Trapezoid-rule contrast over [rmin, rmax] between observed and theoretical curves."""
        r = np.linspace(cfg.rmin, cfg.rmax, cfg.n_r)
        empirical = np.maximum(observed.at(r), 0.0) ** cfg.q
        model = np.maximum(theory(np.asarray(params, dtype=float), r), 0.0) ** cfg.q
        return float(integrate.trapezoid((empirical - model) ** 2, r))

    @staticmethod
    def min_contrast(
        observed: SummaryFunction,
        theory: Theory,
        cfg: ContrastConfig,
        start: Optional[Sequence[float]] = None,
    ) -> OptimumResult:
        """
        Parameters minimizing the contrast between ``observed`` and ``theory(params, r)``.

        Args:
            observed: Empirical curve covering [rmin, rmax]
            theory: Maps (params, r) to the model curve
            cfg: Contrast settings; ``bounds`` fixes the number of parameters
            start: Optional starting point for multi-parameter searches

        Returns:
            Optimum with a ``boundary-hit`` flag when it lies on a search bound
        """
        if not cfg.bounds:
            raise ValueError("min_contrast needs search bounds")
        scale = max(1.0, cfg.rmax)
        if observed.r[0] > cfg.rmin + 1e-12 * scale or observed.r[-1] < cfg.rmax - 1e-12 * scale:
            raise ValueError("observed summary does not cover [rmin, rmax]")
        return _optimize(
            lambda p: FittingService.contrast_value(observed, theory, p, cfg), cfg.bounds, start
        )

    @staticmethod
    def fit_thomas_mu(pattern: PointPattern, kappa_hat: float) -> float:
        """Mean cluster size from rho = kappa * mu: n / (|W| kappa_hat)."""
        if kappa_hat <= 0:
            raise ValueError("kappa_hat must be positive")
        return pattern.n / (pattern.window.area * kappa_hat)

    @staticmethod
    def _palm_terms(
        pattern: PointPattern, i: np.ndarray, j: np.ndarray, intensity: Intensity
    ) -> Tuple[np.ndarray, float]:
        """Pair intensities and the window-average intensity of the Palm likelihood."""
        if intensity is None or np.isscalar(intensity):
            rho = pattern.intensity if intensity is None else float(intensity)
            return np.full(i.shape[0], rho), rho
        beta0, beta1 = intensity
        w = pattern.window
        rho_i = np.exp(beta0 + beta1 * pattern.x)
        pair = np.sqrt(rho_i[i] * rho_i[j])
        average = float(np.exp(beta0 + _log_x_integral(beta1, w.x0, w.x1)) / w.width)
        return pair, average

    @staticmethod
    def palm_log_likelihood(
        pattern: PointPattern,
        family: str,
        params: Sequence[float],
        R: Optional[float] = None,
        intensity: Intensity = None,
    ) -> float:
        """
        Palm log-likelihood: sum over ordered pairs closer than R of log(rho g(d_ij))
        minus n * rho * K(R).

        Args:
            family: ``thomas`` (params kappa, sigma2) or ``dpp_gauss`` (params alpha)
            R: Pair-distance cutoff, defaults to a quarter of the shorter window side
            intensity: None (n / |W|), a constant, or log-linear (beta0, beta1); the
                log-linear case uses sqrt(rho(x_i) rho(x_j)) per pair and the average
                intensity in the integral term
        """
        if family not in PALM_FAMILIES:
            raise ValueError(f"unknown Palm family '{family}'; choose among {list(PALM_FAMILIES)}")
        R = pattern.window.shorter_side / 4.0 if R is None else R
        i, j, d = SummaryService.close_pairs(pattern, R)
        pair_rho, rho_bar = FittingService._palm_terms(pattern, i, j, intensity)
        if family == "thomas":
            kappa, sigma2 = params
            sigma = np.sqrt(sigma2)
            g, k_r = thomas_theory_g(kappa, sigma, d), thomas_theory_k(kappa, sigma, R)
        else:
            alpha = params[0]
            g, k_r = dpp_theory_g(alpha, d), dpp_theory_k(alpha, R)
        with np.errstate(divide="ignore"):
            pair_sum = 2.0 * float(np.sum(np.log(pair_rho * g)))
        return pair_sum - pattern.n * rho_bar * float(k_r)

    @staticmethod
    def fit_palm(
        pattern: PointPattern,
        family: str,
        bounds: Sequence[Tuple[float, float]],
        R: Optional[float] = None,
        intensity: Intensity = None,
        start: Optional[Sequence[float]] = None,
    ) -> OptimumResult:
        """
        Maximum Palm likelihood fit; ``objective`` of the result is the maximized log-likelihood.

        Raises:
            NoPairsError: If no pair is closer than R
            DegenerateLikelihoodError: If the likelihood is flat or undefined on the search box
        """
        R = pattern.window.shorter_side / 4.0 if R is None else R
        i, _, _ = SummaryService.close_pairs(pattern, R)
        if i.shape[0] == 0:
            raise NoPairsError("No pair of points lies within the Palm cutoff", {"R": R, "n": pattern.n})

        def negative(params: np.ndarray) -> float:
            return -FittingService.palm_log_likelihood(pattern, family, params, R, intensity)

        samples = []
        for f in (0.0, 0.25, 0.5, 0.75, 1.0):
            point = np.array([lo * (hi / lo) ** f for lo, hi in bounds])
            with np.errstate(all="ignore"):
                samples.append(negative(point))
        samples = np.asarray(samples)
        if not np.all(np.isfinite(samples)) or np.ptp(samples) <= 1e-12 * (1.0 + np.abs(samples).max()):
            raise DegenerateLikelihoodError(
                "Palm likelihood is flat or undefined over the search box",
                {"family": family, "bounds": list(bounds)},
            )
        result = _optimize(negative, bounds, start)
        return OptimumResult(params=result.params, objective=-result.objective, flags=result.flags)

    @staticmethod
    def dpp_alpha_bounds(loglinear: FitRecord, pattern: PointPattern) -> Tuple[float, float]:
        """Search interval [ALPHA_FLOOR * alpha_max, alpha_max] under the fitted intensity."""
        w = pattern.window
        beta0, beta1 = loglinear.values["beta0"], loglinear.values["beta1"]
        top = float(np.exp(beta0 + max(beta1 * w.x0, beta1 * w.x1)))
        upper = dpp_alpha_max(top)
        return ALPHA_FLOOR * upper, upper

    @staticmethod
    def fit_dpp(pattern: PointPattern, method: str, loglinear: Optional[FitRecord] = None) -> FitRecord:
        """
        Scale of a Gaussian DPP by K-contrast, pcf-contrast or Palm likelihood, on top of
        a log-linear intensity fit. The search is capped at the existence bound.
        """
        if method not in FIT_METHODS:
            raise ValueError(f"unknown fit method '{method}'; choose among {list(FIT_METHODS)}")
        loglinear = loglinear or FittingService.fit_loglinear_intensity(pattern)
        beta0, beta1 = loglinear.values["beta0"], loglinear.values["beta1"]
        lo, hi = FittingService.dpp_alpha_bounds(loglinear, pattern)
        weights = np.exp(beta0 + beta1 * pattern.x)
        window = pattern.window
        if method == "palm":
            result = FittingService.fit_palm(
                pattern, "dpp_gauss", [(lo, hi)], intensity=(beta0, beta1)
            )
        elif method == "K":
            cfg = ContrastConfig.for_k(window, bounds=[(lo, hi)])
            observed = SummaryService.ripley_k(pattern, np.linspace(cfg.rmin, cfg.rmax, cfg.n_r), weights)
            result = FittingService.min_contrast(observed, lambda p, r: dpp_theory_k(p[0], r), cfg)
        else:
            cfg = ContrastConfig.for_pcf(window, bounds=[(lo, hi)])
            observed = SummaryService.pcf_estimate(
                pattern, np.linspace(cfg.rmin, cfg.rmax, cfg.n_r), intensity_weights=weights
            )
            result = FittingService.min_contrast(observed, lambda p, r: dpp_theory_g(p[0], r), cfg)
        flags = list(result.flags)
        if hi - result.params[0] < BOUNDARY_TOL * hi:
            flags.append("existence-bound")
        return FitRecord(
            estimator=method, family="dpp",
            values={"alpha": float(min(result.params[0], hi))}, flags=flags,
        )

    @staticmethod
    def thomas_bounds(pattern: PointPattern) -> List[Tuple[float, float]]:
        """Search box for (kappa, sigma2): kappa in [rho / 1000, rho], sigma in [side / 1000, side / 4]."""
        rho = max(pattern.intensity, 1.0 / pattern.window.area)
        side = pattern.window.shorter_side
        return [(rho / 1000.0, rho), ((side / 1000.0) ** 2, (side / 4.0) ** 2)]

    @staticmethod
    def fit_thomas(pattern: PointPattern, method: str) -> FitRecord:
        """(kappa, sigma2, mu) of a Thomas process by K-contrast, pcf-contrast or Palm likelihood."""
        if method not in FIT_METHODS:
            raise ValueError(f"unknown fit method '{method}'; choose among {list(FIT_METHODS)}")
        if pattern.n < 2:
            raise EmptyPatternError("Thomas fits need at least two points", {"n": pattern.n})
        bounds = FittingService.thomas_bounds(pattern)
        window = pattern.window
        if method == "palm":
            result = FittingService.fit_palm(pattern, "thomas", bounds)
        elif method == "K":
            cfg = ContrastConfig.for_k(window, bounds=bounds)
            observed = SummaryService.ripley_k(pattern, np.linspace(cfg.rmin, cfg.rmax, cfg.n_r))
            result = FittingService.min_contrast(
                observed, lambda p, r: thomas_theory_k(p[0], np.sqrt(p[1]), r), cfg
            )
        else:
            cfg = ContrastConfig.for_pcf(window, bounds=bounds)
            observed = SummaryService.pcf_estimate(pattern, np.linspace(cfg.rmin, cfg.rmax, cfg.n_r))
            result = FittingService.min_contrast(
                observed, lambda p, r: thomas_theory_g(p[0], np.sqrt(p[1]), r), cfg
            )
        kappa, sigma2 = result.params
        return FitRecord(
            estimator=method, family="thomas",
            values={"kappa": kappa, "sigma2": sigma2, "mu": FittingService.fit_thomas_mu(pattern, kappa)},
            flags=list(result.flags),
        )
