import logging

import numpy as np
import pytest
from numpy.testing import assert_allclose

from estavg.exceptions import EstimatorFailureError, GridMismatchError
from estavg.models import simulate_poisson
from estavg.schemas import (
    BankEntry,
    BootstrapConfig,
    EstimatorBank,
    FieldEstimator,
    FitRecord,
    IntensityField,
    PoissonSpec,
    Window,
)
from estavg.services import BootstrapService

UNIT = Window.unit()


def poisson_simulator(theta, rng):
    return simulate_poisson(PoissonSpec(rho=float(theta[0])), UNIT, rng)


def count_bank(*names: str) -> EstimatorBank:
    return EstimatorBank(
        entries=[
            BankEntry(name=name, outputs=["rho"], estimator=lambda pattern, _: [pattern.intensity])
            for name in names
        ],
        parameters=["rho"],
    )


def field(values) -> IntensityField:
    values = np.asarray(values, dtype=float)
    return IntensityField(window=UNIT, nx=values.shape[0], ny=values.shape[1], values=values)


class TestEstimatorBank:
    def test_labels_are_grouped_by_parameter(self):
        bank = EstimatorBank(
            entries=[
                BankEntry(name="area-perim", outputs=["rho", "alpha"], estimator=lambda o, p: [1.0, 2.0]),
                BankEntry(name="tangent", outputs=["rho"], estimator=lambda o, p: [3.0]),
            ],
            parameters=["rho", "alpha"],
        )
        assert bank.labels == ["area-perim:rho", "tangent:rho", "area-perim:alpha"]
        assert bank.groups().sizes == [2, 1]
        assert_allclose(bank.evaluate(None), [1.0, 3.0, 2.0])

    def test_uncovered_parameter_is_rejected(self):
        with pytest.raises(ValueError):
            EstimatorBank(
                entries=[BankEntry(name="tangent", outputs=["rho"], estimator=lambda o, p: [1.0])],
                parameters=["rho", "alpha"],
            )

    def test_non_finite_estimate_is_a_failure(self):
        bank = EstimatorBank(
            entries=[BankEntry(name="bad", outputs=["rho"], estimator=lambda o, p: [np.nan])],
            parameters=["rho"],
        )
        with pytest.raises(EstimatorFailureError) as info:
            bank.run(None)
        assert info.value.name == "bad"

    def test_prepare_runs_before_every_estimator(self):
        bank = EstimatorBank(
            entries=[
                BankEntry(name="a", outputs=["x"], estimator=lambda o, p: [p]),
                BankEntry(name="b", outputs=["x"], estimator=lambda o, p: [2 * p]),
            ],
            parameters=["x"],
            prepare=lambda o: o + 1.0,
        )
        assert_allclose(bank.evaluate(1.0), [2.0, 4.0])


class TestBootstrapMseMatrix:
    def test_constant_estimator_gives_zero_matrix(self):
        bank = EstimatorBank(
            entries=[BankEntry(name="fixed", outputs=["rho"], estimator=lambda o, p: [100.0])],
            parameters=["rho"],
        )
        sigma = BootstrapService.bootstrap_mse_matrix(
            poisson_simulator, [100.0], bank, BootstrapConfig(n_samples=10, seed=1)
        )
        assert sigma.labels == ["fixed:rho"]
        assert_allclose(sigma.as_array(), [[0.0]])

    def test_duplicated_estimators_are_perfectly_correlated(self):
        sigma = BootstrapService.bootstrap_mse_matrix(
            poisson_simulator, [100.0], count_bank("a", "b"), BootstrapConfig(n_samples=20, seed=3)
        )
        arr = sigma.as_array()
        assert arr[0, 0] > 0.0
        assert_allclose(arr, np.full((2, 2), arr[0, 0]), rtol=1e-12)
        assert np.linalg.matrix_rank(arr) == 1

    def test_poisson_count_variance(self):
        sigma = BootstrapService.bootstrap_mse_matrix(
            poisson_simulator, [100.0], count_bank("count"), BootstrapConfig(n_samples=1000, seed=2024)
        )
        # squared deviations of a Poisson(100) count have standard deviation sqrt(2 * 100^2 + 100)
        standard_error = np.sqrt(2 * 100.0 ** 2 + 100.0) / np.sqrt(1000)
        assert abs(sigma.as_array()[0, 0] - 100.0) < 3 * standard_error

    def test_centering_uses_the_anchor(self):
        bank = EstimatorBank(
            entries=[BankEntry(name="fixed", outputs=["rho"], estimator=lambda o, p: [103.0])],
            parameters=["rho"],
        )
        sigma = BootstrapService.bootstrap_mse_matrix(
            poisson_simulator, [100.0], bank, BootstrapConfig(n_samples=5, seed=1)
        )
        assert_allclose(sigma.as_array(), [[9.0]])

    def test_reproducible_across_runs_and_worker_counts(self):
        config = BootstrapConfig(n_samples=30, seed=77)
        first = BootstrapService.bootstrap_mse_matrix(poisson_simulator, [50.0], count_bank("a"), config)
        second = BootstrapService.bootstrap_mse_matrix(poisson_simulator, [50.0], count_bank("a"), config)
        threaded = BootstrapService.bootstrap_mse_matrix(
            poisson_simulator, [50.0], count_bank("a"), config, n_jobs=3
        )
        assert first.entries == second.entries == threaded.entries

    def test_failed_sample_is_retried_on_a_fresh_stream(self, caplog):
        calls = {"n": 0}

        def flaky(pattern, _):
            calls["n"] += 1
            if calls["n"] == 1:
                raise ValueError("optimizer diverged")
            return [pattern.intensity]

        bank = EstimatorBank(
            entries=[BankEntry(name="flaky", outputs=["rho"], estimator=flaky)], parameters=["rho"]
        )
        with caplog.at_level(logging.WARNING):
            sigma = BootstrapService.bootstrap_mse_matrix(
                poisson_simulator, [100.0], bank, BootstrapConfig(n_samples=4, seed=5), n_jobs=1
            )
        assert calls["n"] == 5
        assert sigma.as_array()[0, 0] > 0.0
        assert "attempt 0 failed" in caplog.text

    def test_persistent_failure_aborts(self):
        def broken(pattern, _):
            raise ArithmeticError("no fit")

        bank = EstimatorBank(
            entries=[BankEntry(name="broken", outputs=["rho"], estimator=broken)], parameters=["rho"]
        )
        with pytest.raises(EstimatorFailureError) as info:
            BootstrapService.bootstrap_mse_matrix(
                poisson_simulator, [100.0], bank, BootstrapConfig(n_samples=3, seed=5), n_jobs=1, retries=2
            )
        assert info.value.sample == 0
        assert info.value.name == "broken"
        assert "3 attempts" in info.value.detail


class TestResolveAnchor:
    @pytest.fixture
    def bank(self) -> EstimatorBank:
        return EstimatorBank(
            entries=[
                BankEntry(name="area-perim", outputs=["rho", "alpha"], estimator=lambda o, p: [0.0, 0.0]),
                BankEntry(name="tangent", outputs=["rho"], estimator=lambda o, p: [0.0]),
            ],
            parameters=["rho", "alpha"],
        )

    @pytest.fixture
    def records(self):
        return {
            "area-perim": FitRecord(estimator="area-perim", family="boolean", values={"rho": 90.0, "alpha": 1.2}),
            "tangent": FitRecord(estimator="tangent", family="boolean", values={"rho": 110.0}),
        }

    def test_mean_of_initials(self, bank, records):
        assert_allclose(BootstrapService.resolve_anchor(bank, records, "mean-of-initials"), [100.0, 1.2])

    def test_named_estimator_falls_back_to_mean(self, bank, records):
        assert_allclose(BootstrapService.resolve_anchor(bank, records, "area-perim"), [90.0, 1.2])
        assert_allclose(BootstrapService.resolve_anchor(bank, records, "tangent"), [110.0, 1.2])

    def test_unknown_rule(self, bank, records):
        with pytest.raises(ValueError):
            BootstrapService.resolve_anchor(bank, records, "median")


class TestBootstrapMiseMatrix:
    rho0 = field([[1.0, 2.0], [3.0, 4.0]])

    def fixed(self, name, values) -> FieldEstimator:
        return FieldEstimator(name=name, estimator=lambda observation: field(values))

    def test_hand_computed_inner_products(self):
        bank = [self.fixed("f1", [[2.0, 2.0], [3.0, 5.0]]), self.fixed("f2", [[1.0, 4.0], [3.0, 2.0]])]
        sigma = BootstrapService.bootstrap_mise_matrix(
            lambda f, rng: None, self.rho0, bank, BootstrapConfig(n_samples=2, seed=0)
        )
        # deviations (1, 0, 0, 1) and (0, 2, 0, -2) on pixels of area 1/4
        assert_allclose(sigma.as_array(), [[0.5, -0.5], [-0.5, 2.0]], atol=1e-14)

    def test_exact_estimators_give_zero_matrix(self):
        bank = [self.fixed("a", self.rho0.values), self.fixed("b", self.rho0.values)]
        sigma = BootstrapService.bootstrap_mise_matrix(
            lambda f, rng: None, self.rho0, bank, BootstrapConfig(n_samples=2, seed=0)
        )
        assert_allclose(sigma.as_array(), np.zeros((2, 2)))

    def test_identical_estimators_give_rank_one_matrix(self):
        values = [[0.0, 1.0], [5.0, 4.0]]
        bank = [self.fixed("a", values), self.fixed("b", values)]
        sigma = BootstrapService.bootstrap_mise_matrix(
            lambda f, rng: None, self.rho0, bank, BootstrapConfig(n_samples=3, seed=0)
        )
        assert np.linalg.matrix_rank(sigma.as_array()) == 1

    def test_grid_mismatch(self):
        bank = [self.fixed("coarse", np.ones((3, 3)))]
        with pytest.raises(GridMismatchError):
            BootstrapService.bootstrap_mise_matrix(
                lambda f, rng: None, self.rho0, bank, BootstrapConfig(n_samples=2, seed=0)
            )
