import numpy as np
import pytest
from numpy.testing import assert_allclose

from estavg.exceptions import EmptyPatternError, EmptySetError, NoPairsError, SaturatedError
from estavg.models import boolean_theory, dpp_alpha_max, dpp_theory_g, preset_spec, simulate, thomas_theory_g, thomas_theory_k
from estavg.schemas import ContrastConfig, GermGrainSet, PointPattern, SetMeasurements, SummaryFunction, Window
from estavg.services import BooleanService, FittingService
from estavg.streams import stream

UNIT = Window.unit()


def measurements(p: float, la: float, count: int = 0) -> SetMeasurements:
    return SetMeasurements(p_hat=p, la_hat=la, tangent_count=count, window_area=1.0)


def discs(germs, radii, window=UNIT) -> GermGrainSet:
    return GermGrainSet(germs=germs, radii=radii, window=window)


class TestLoglinearIntensity:
    def test_homogeneous_constraint(self, poisson_pattern):
        record = FittingService.fit_loglinear_intensity(poisson_pattern, homogeneous=True)
        assert_allclose(record.values["beta0"], np.log(poisson_pattern.n))
        assert record.values["beta1"] == 0.0

    def test_score_vanishes_at_the_fit(self, poisson_pattern):
        record = FittingService.fit_loglinear_intensity(poisson_pattern)
        gradient = FittingService.loglinear_gradient(
            poisson_pattern, record.values["beta0"], record.values["beta1"]
        )
        assert np.all(np.abs(gradient) < 1e-6 * poisson_pattern.n)

    def test_tolerance_is_absolute(self, poisson_pattern):
        n, area = poisson_pattern.n, poisson_pattern.window.area
        start = FittingService.loglinear_gradient(poisson_pattern, np.log(n / area), 0.0)[1]
        assert start != 0.0
        record = FittingService.fit_loglinear_intensity(poisson_pattern, tol=0.5 * abs(start))
        assert record.values["beta1"] != 0.0
        gradient = FittingService.loglinear_gradient(
            poisson_pattern, record.values["beta0"], record.values["beta1"]
        )
        assert abs(gradient[1]) < 0.5 * abs(start)

    def test_fit_beats_nearby_parameters(self, poisson_pattern):
        record = FittingService.fit_loglinear_intensity(poisson_pattern)
        b0, b1 = record.values["beta0"], record.values["beta1"]
        best = FittingService.loglinear_log_likelihood(poisson_pattern, b0, b1)
        for d0, d1 in [(0.05, 0.0), (-0.05, 0.0), (0.0, 0.1), (0.0, -0.1)]:
            assert FittingService.loglinear_log_likelihood(poisson_pattern, b0 + d0, b1 + d1) < best

    def test_recovers_slope_of_inhomogeneous_dpp(self):
        spec, window = preset_spec("dpp4")
        pattern = simulate(spec, window, stream(13, 0, 0))
        record = FittingService.fit_loglinear_intensity(pattern)
        assert abs(record.values["beta1"] - 4.0) < 1.5

    def test_empty_pattern(self):
        with pytest.raises(EmptyPatternError):
            FittingService.fit_loglinear_intensity(PointPattern(points=np.zeros((0, 2)), window=UNIT))


class TestMinimumContrast:
    def test_contrast_matches_trapezoid_sum(self):
        cfg = ContrastConfig(q=0.5, rmin=0.01, rmax=0.25, n_r=50)
        r = np.linspace(0.01, 0.25, 50)
        observed = SummaryFunction(r=r, values=1.0 + 0.1 * np.sin(10 * r))

        def theory(p, r):
            return dpp_theory_g(p[0], r)

        diff = (np.sqrt(1.0 + 0.1 * np.sin(10 * r)) - np.sqrt(dpp_theory_g(0.04, r))) ** 2
        expected = np.sum(0.5 * (diff[1:] + diff[:-1]) * np.diff(r))
        assert_allclose(FittingService.contrast_value(observed, theory, [0.04], cfg), expected, rtol=1e-12)

    def test_noiseless_dpp_pcf_recovers_alpha(self):
        cfg = ContrastConfig.for_pcf(UNIT, bounds=[(0.005, 0.06)])
        r = np.linspace(cfg.rmin, cfg.rmax, cfg.n_r)
        observed = SummaryFunction(r=r, values=dpp_theory_g(0.04, r))
        result = FittingService.min_contrast(observed, lambda p, r: dpp_theory_g(p[0], r), cfg)
        assert_allclose(result.params, [0.04], rtol=1e-5)
        assert result.objective < 1e-12
        assert result.flags == []

    def test_noiseless_thomas_pcf_recovers_both_parameters(self):
        cfg = ContrastConfig.for_pcf(UNIT, bounds=[(0.1, 100.0), (1e-6, 0.0625)])
        r = np.linspace(cfg.rmin, cfg.rmax, cfg.n_r)
        observed = SummaryFunction(r=r, values=thomas_theory_g(10.0, 0.05, r))
        result = FittingService.min_contrast(
            observed, lambda p, r: thomas_theory_g(p[0], np.sqrt(p[1]), r), cfg
        )
        assert_allclose(result.params, [10.0, 0.0025], rtol=1e-3)
        assert result.objective < 1e-8

    def test_optimum_on_bound_is_flagged(self):
        cfg = ContrastConfig.for_pcf(UNIT, bounds=[(0.005, 0.03)])
        r = np.linspace(cfg.rmin, cfg.rmax, cfg.n_r)
        observed = SummaryFunction(r=r, values=dpp_theory_g(0.05, r))
        result = FittingService.min_contrast(observed, lambda p, r: dpp_theory_g(p[0], r), cfg)
        assert "boundary-hit" in result.flags
        assert_allclose(result.params, [0.03], rtol=1e-4)

    def test_observed_curve_must_cover_range(self):
        cfg = ContrastConfig.for_k(UNIT, bounds=[(0.005, 0.06)])
        observed = SummaryFunction(r=np.linspace(0.0, 0.1, 20), values=np.zeros(20))
        with pytest.raises(ValueError):
            FittingService.min_contrast(observed, lambda p, r: r, cfg)

    def test_dpp_fit_stays_below_existence_bound(self):
        spec, window = preset_spec("dpp2")
        pattern = simulate(spec, window, stream(17, 0, 0))
        loglinear = FittingService.fit_loglinear_intensity(pattern, homogeneous=True)
        lo, hi = FittingService.dpp_alpha_bounds(loglinear, pattern)
        assert_allclose(hi, dpp_alpha_max(pattern.intensity))
        assert_allclose(lo, 1e-3 * hi)
        for method in ("K", "g"):
            record = FittingService.fit_dpp(pattern, method, loglinear)
            assert lo <= record.values["alpha"] <= hi
            assert record.family == "dpp"


class TestPalmLikelihood:
    @pytest.fixture
    def small_pattern(self, rng) -> PointPattern:
        return PointPattern(points=rng.random((12, 2)), window=UNIT)

    def test_matches_double_loop(self, small_pattern):
        kappa, sigma = 10.0, 0.05
        n = small_pattern.n
        total = 0.0
        for i in range(n):
            for j in range(n):
                d = np.linalg.norm(small_pattern.points[i] - small_pattern.points[j])
                if i != j and d < 0.25:
                    total += np.log(n * thomas_theory_g(kappa, sigma, d))
        expected = total - n * n * thomas_theory_k(kappa, sigma, 0.25)
        value = FittingService.palm_log_likelihood(small_pattern, "thomas", [kappa, sigma ** 2], R=0.25)
        assert_allclose(value, expected, rtol=1e-12)

    def test_flat_loglinear_intensity_equals_homogeneous(self, small_pattern):
        n = small_pattern.n
        homogeneous = FittingService.palm_log_likelihood(small_pattern, "dpp_gauss", [0.04])
        loglinear = FittingService.palm_log_likelihood(
            small_pattern, "dpp_gauss", [0.04], intensity=(np.log(n), 0.0)
        )
        assert_allclose(loglinear, homogeneous, rtol=1e-12)

    def test_maximum_dominates_a_parameter_grid(self):
        spec, window = preset_spec("dpp2")
        pattern = simulate(spec, window, stream(19, 0, 0))
        bounds = [(0.005, dpp_alpha_max(pattern.intensity))]
        result = FittingService.fit_palm(pattern, "dpp_gauss", bounds)
        for alpha in np.linspace(*bounds[0], 20):
            assert result.objective >= FittingService.palm_log_likelihood(pattern, "dpp_gauss", [alpha]) - 1e-8

    def test_no_pairs_within_cutoff(self):
        far = PointPattern(points=[[0.1, 0.1], [0.9, 0.9]], window=UNIT)
        with pytest.raises(NoPairsError):
            FittingService.fit_palm(far, "thomas", FittingService.thomas_bounds(far))

    def test_unknown_family(self, small_pattern):
        with pytest.raises(ValueError):
            FittingService.palm_log_likelihood(small_pattern, "matern", [0.1])


class TestThomasFits:
    def test_mean_cluster_size(self):
        pattern = PointPattern(points=[[0.1, 0.1], [0.2, 0.2], [0.3, 0.3], [0.4, 0.4]], window=UNIT)
        assert FittingService.fit_thomas_mu(pattern, 2.0) == 2.0
        with pytest.raises(ValueError):
            FittingService.fit_thomas_mu(pattern, 0.0)

    def test_search_box(self, thomas_pattern):
        (k_lo, k_hi), (s_lo, s_hi) = FittingService.thomas_bounds(thomas_pattern)
        assert_allclose(k_hi, thomas_pattern.intensity)
        assert_allclose(k_lo, thomas_pattern.intensity / 1000)
        assert_allclose([s_lo, s_hi], [1e-6, 0.0625])

    @pytest.mark.parametrize("method", ["K", "g", "palm"])
    def test_fit_is_consistent(self, thomas_pattern, method):
        record = FittingService.fit_thomas(thomas_pattern, method)
        kappa, sigma2, mu = (record.values[k] for k in ("kappa", "sigma2", "mu"))
        assert_allclose(kappa * mu, thomas_pattern.intensity, rtol=1e-12)
        assert 0.0 < sigma2 <= 0.0625 * (1 + 1e-9)
        assert 0.0 < kappa <= thomas_pattern.intensity * (1 + 1e-9)


class TestBooleanInversion:
    def test_recovers_reference_parameters(self):
        p, la = boolean_theory(100.0, 1.0)
        record = BooleanService.boolean_fit_area_perimeter(measurements(p, la))
        assert_allclose([record.values["rho"], record.values["alpha"]], [100.0, 1.0], rtol=1e-10)
        assert record.flags == []

    def test_round_trip_over_parameter_range(self, rng):
        for rho, alpha in zip(rng.uniform(10, 200, 100), rng.uniform(0.2, 5.0, 100)):
            p, la = boolean_theory(rho, alpha)
            record = BooleanService.boolean_fit_area_perimeter(measurements(p, la))
            assert_allclose([record.values["rho"], record.values["alpha"]], [rho, alpha], rtol=1e-8)

    def test_saturated_window(self):
        with pytest.raises(SaturatedError):
            BooleanService.boolean_fit_area_perimeter(measurements(1.0, 0.0))
        with pytest.raises(SaturatedError):
            BooleanService.boolean_fit_tangent(measurements(1.0, 0.0, 3))

    def test_empty_set(self):
        with pytest.raises(EmptySetError):
            BooleanService.boolean_fit_area_perimeter(measurements(0.0, 0.0))

    def test_nonpositive_shape_is_clamped(self):
        record = BooleanService.boolean_fit_area_perimeter(measurements(0.5, 0.1))
        assert record.values["alpha"] == 1e-3
        assert "invalid-shape" in record.flags
        assert_allclose(record.values["rho"], 0.1 / np.pi * 1.001 / 0.1)

    def test_tangent_estimator(self):
        record = BooleanService.boolean_fit_tangent(measurements(0.5, 1.0, 10))
        assert_allclose(record.values["rho"], 20.0)
        assert BooleanService.boolean_fit_tangent(measurements(0.0, 0.0, 0)).values["rho"] == 0.0


class TestSetMeasurements:
    def test_single_disc(self):
        m = BooleanService.measure_set(discs([[0.5, 0.5]], [0.1]))
        assert_allclose(m.la_hat, 0.2 * np.pi, rtol=1e-12)
        assert abs(m.p_hat - 0.01 * np.pi) < 1e-3
        assert m.tangent_count == 1

    def test_disjoint_discs_add_up(self):
        m = BooleanService.measure_set(discs([[0.2, 0.2], [0.7, 0.7]], [0.05, 0.05]))
        assert_allclose(m.la_hat, 0.2 * np.pi, rtol=1e-12)
        assert m.tangent_count == 2

    def test_overlapping_discs_hide_their_lens(self):
        m = BooleanService.measure_set(discs([[0.45, 0.5], [0.55, 0.5]], [0.1, 0.1]))
        assert_allclose(m.la_hat, 2 * 0.1 * (2 * np.pi - 2 * np.pi / 3), rtol=1e-12)
        assert m.tangent_count == 2

    def test_disc_clipped_by_window(self):
        m = BooleanService.measure_set(discs([[0.5, 0.0]], [0.1]))
        assert_allclose(m.la_hat, 0.1 * np.pi, rtol=1e-12)
        assert m.tangent_count == 0

    def test_covered_tangent_point_is_not_counted(self):
        m = BooleanService.measure_set(discs([[0.5, 0.5], [0.5, 0.42]], [0.05, 0.1]))
        assert m.tangent_count == 1

    def test_coincident_discs_count_once(self):
        m = BooleanService.measure_set(discs([[0.5, 0.5], [0.5, 0.5]], [0.1, 0.1]))
        assert_allclose(m.la_hat, 0.2 * np.pi, rtol=1e-12)

    def test_simulated_set_is_near_theory(self, boolean_set):
        m = BooleanService.measure_set(boolean_set)
        p, la = boolean_theory(100.0, 1.0)
        assert abs(m.p_hat - p) < 0.1
        assert abs(m.la_hat - la) < 0.3 * la
