import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from estavg.exceptions import EstimatorAveragingError
from estavg.models import preset_spec, simulate
from estavg.schemas import BootstrapConfig, Family, PointPattern, Window
from estavg.services import AveragingService, PipelineService
from estavg.services.pipeline_service import DEFAULT_ANCHORS, boolean_bank, poisson_field_bank
from estavg.streams import stream

SMALL_BOOTSTRAP = BootstrapConfig(n_samples=5, seed=3)


class TestBanks:
    def test_boolean_labels_and_groups(self):
        bank = boolean_bank()
        assert bank.labels == ["area-perim:rho", "tangent:rho", "area-perim:alpha"]
        assert bank.groups().sizes == [2, 1]

    def test_thomas_bank_has_nine_labels(self):
        bank = PipelineService.bank_for(Family.THOMAS)
        assert len(bank.labels) == 9
        assert bank.labels[:3] == ["K:kappa", "g:kappa", "palm:kappa"]
        assert bank.groups().sizes == [3, 3, 3]

    def test_estimator_subset(self):
        bank = PipelineService.bank_for(Family.DPP, ["palm", "K"])
        assert bank.labels == ["K:alpha", "palm:alpha"]
        assert [e.name for e in poisson_field_bank(["ppl"])] == ["kernel:ppl"]

    def test_unknown_estimator(self):
        with pytest.raises(ValueError):
            PipelineService.bank_for(Family.THOMAS, ["K", "ppl"])

    def test_default_anchors(self):
        assert DEFAULT_ANCHORS[Family.DPP] == "palm"
        assert DEFAULT_ANCHORS[Family.BOOLEAN] == "mean-of-initials"


class TestBooleanPipeline:
    @pytest.fixture
    def result(self, boolean_set):
        return PipelineService.average_pipeline(boolean_set, Family.BOOLEAN, bootstrap=SMALL_BOOTSTRAP)

    def test_shapes(self, result):
        assert result.labels == ["area-perim:rho", "tangent:rho", "area-perim:alpha"]
        assert result.parameters == ["rho", "alpha"]
        assert len(result.initial_estimates) == 3
        assert result.mse_matrix.size == 3
        assert set(result.modes) == {"av", "av+", "convex"}
        for outcome in result.modes.values():
            assert np.asarray(outcome.weights).shape == (3, 2)
            assert len(outcome.estimates) == 2
            assert len(outcome.intervals) == 2

    def test_weight_constraints(self, result):
        for mode, outcome in result.modes.items():
            w = np.asarray(outcome.weights)
            assert_allclose(w[:2, 0].sum(), 1.0, atol=1e-10)
            assert_allclose(w[2, 1], 1.0, atol=1e-10)
            if mode == "av+":
                assert_allclose(w[:2, 1].sum(), 0.0, atol=1e-10)
            else:
                assert_allclose(w[2, 0], 0.0, atol=1e-12)
                assert_allclose(w[:2, 1], 0.0, atol=1e-12)

    def test_combined_estimates_apply_weights(self, result):
        for outcome in result.modes.values():
            expected = np.asarray(outcome.weights).T @ np.asarray(result.initial_estimates)
            assert_allclose(outcome.estimates, expected, rtol=1e-12)

    def test_convex_estimate_lies_between_initials(self, result):
        rho_initials = result.initial_estimates[:2]
        estimate = result.modes["convex"].estimates[0]
        assert min(rho_initials) - 1e-9 <= estimate <= max(rho_initials) + 1e-9

    def test_intervals_are_centered(self, result):
        for outcome in result.modes.values():
            for estimate, (lo, hi) in zip(outcome.estimates, outcome.intervals):
                assert_allclose(0.5 * (lo + hi), estimate)

    def test_anchor_is_mean_of_initials(self, result):
        initial = result.initial_estimates
        assert_allclose(result.anchor, [0.5 * (initial[0] + initial[1]), initial[2]])

    def test_records_follow_bank_order(self, result):
        assert [r.estimator for r in result.records] == ["area-perim", "tangent"]

    def test_reproducible(self, boolean_set, result):
        again = PipelineService.average_pipeline(boolean_set, Family.BOOLEAN, bootstrap=SMALL_BOOTSTRAP)
        assert again.model_dump_json() == result.model_dump_json()

    def test_single_mode(self, boolean_set):
        result = PipelineService.average_pipeline(
            boolean_set, Family.BOOLEAN, modes=["convex"], bootstrap=SMALL_BOOTSTRAP
        )
        assert list(result.modes) == ["convex"]


class TestPoissonPipeline:
    @pytest.fixture
    def result(self, poisson_pattern):
        return PipelineService.average_pipeline(
            poisson_pattern, Family.POISSON, bootstrap=BootstrapConfig(n_samples=3, seed=1),
            estimators=["default", "ppl"], grid=(16, 16),
        )

    def test_fields(self, result, poisson_pattern):
        assert result.labels == ["kernel:default", "kernel:ppl"]
        assert len(result.initial_fields) == 2
        for outcome in result.modes.values():
            assert outcome.field.values.shape == (16, 16)
            assert np.all(outcome.field.values >= 0.0)
            assert_allclose(np.asarray(outcome.weights).sum(axis=0), [1.0], atol=1e-10)
        default = result.records[0]
        assert default.estimator == "kernel:default"
        assert abs(default.values["integral"] - poisson_pattern.n) < 0.05 * poisson_pattern.n

    def test_av_and_av_plus_coincide_for_one_parameter(self, result):
        assert_allclose(result.modes["av"].weights, result.modes["av+"].weights, rtol=1e-12)

    def test_fields_are_left_out_of_json(self, result):
        payload = json.loads(result.model_dump_json())
        assert "initial_fields" not in payload
        assert all("field" not in mode for mode in payload["modes"].values())

    def test_unknown_anchor(self, poisson_pattern):
        with pytest.raises(ValueError):
            PipelineService.average_pipeline(
                poisson_pattern, Family.POISSON,
                bootstrap=BootstrapConfig(n_samples=2, seed=1, anchor="diggle"),
                estimators=["default", "ppl"], grid=(8, 8),
            )


class TestPipelineErrors:
    def test_observation_type_must_match_family(self, boolean_set, poisson_pattern):
        with pytest.raises(ValueError):
            PipelineService.average_pipeline(boolean_set, Family.DPP, bootstrap=SMALL_BOOTSTRAP)
        with pytest.raises(ValueError):
            PipelineService.average_pipeline(poisson_pattern, Family.BOOLEAN, bootstrap=SMALL_BOOTSTRAP)

    def test_unknown_mode(self, boolean_set):
        with pytest.raises(ValueError):
            PipelineService.average_pipeline(boolean_set, "boolean", modes=["median"])

    def test_failure_carries_family_and_stage(self):
        empty = PointPattern(points=np.zeros((0, 2)), window=Window.unit())
        with pytest.raises(EstimatorAveragingError) as info:
            PipelineService.average_pipeline(empty, Family.DPP, bootstrap=SMALL_BOOTSTRAP)
        assert info.value.context["family"] == "dpp"
        assert info.value.context["stage"] == "initial"


@pytest.mark.slow
class TestModelPipelines:
    def test_dpp(self):
        spec, window = preset_spec("dpp2")
        pattern = simulate(spec, window, stream(23, 0, 0))
        result = PipelineService.average_pipeline(pattern, Family.DPP, bootstrap=BootstrapConfig(n_samples=20, seed=4))
        assert result.labels == ["K:alpha", "g:alpha", "palm:alpha"]
        convex = np.asarray(result.modes["convex"].weights)[:, 0]
        assert np.all(convex >= 0.0)
        assert_allclose(convex.sum(), 1.0)
        expected = AveragingService.combine(result.initial_estimates, AveragingService.convex_weights(result.mse_matrix))
        assert_allclose(result.modes["convex"].estimates, expected, rtol=1e-10)

    def test_thomas(self, thomas_pattern):
        result = PipelineService.average_pipeline(
            thomas_pattern, Family.THOMAS, bootstrap=BootstrapConfig(n_samples=20, seed=8)
        )
        assert len(result.labels) == 9
        for outcome in result.modes.values():
            assert np.asarray(outcome.weights).shape == (9, 3)
