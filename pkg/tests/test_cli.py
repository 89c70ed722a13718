import json

import pytest
from click.testing import CliRunner

from estavg import storage
from estavg.main import cli
from estavg.schemas import GermGrainSet, PointPattern


@pytest.fixture
def runner() -> CliRunner:
    return CliRunner()


@pytest.fixture
def invoke(runner, tmp_path):
    def run(*args: str):
        return runner.invoke(cli, ["--log-config", str(tmp_path / "absent.ini"), *args])
    return run


@pytest.fixture
def discs_csv(invoke, tmp_path):
    path = tmp_path / "discs.csv"
    result = invoke("simulate", "--model", "boolean50", "--seed", "3", "--out", str(path))
    assert result.exit_code == 0, result.output
    return path


class TestSimulate:
    def test_preset_writes_disc_set(self, discs_csv):
        assert isinstance(storage.read_observation(discs_csv), GermGrainSet)

    def test_family_with_parameter_overrides(self, invoke, tmp_path):
        path = tmp_path / "thomas.csv"
        result = invoke(
            "simulate", "--model", "thomas", "--params", "kappa=5,mu=4", "--window", "0,2,0,1",
            "--seed", "1", "--out", str(path),
        )
        assert result.exit_code == 0, result.output
        pattern = storage.read_pattern(path)
        assert isinstance(pattern, PointPattern)
        assert pattern.window.as_tuple() == (0.0, 2.0, 0.0, 1.0)
        assert "points written to" in result.output

    def test_constant_poisson_intensity(self, invoke, tmp_path):
        path = tmp_path / "poisson.csv"
        result = invoke("simulate", "--model", "poisson", "--params", "rho=0", "--out", str(path))
        assert result.exit_code == 0, result.output
        assert storage.read_pattern(path).n == 0

    def test_same_seed_same_file(self, invoke, tmp_path):
        first, second = tmp_path / "a.csv", tmp_path / "b.csv"
        invoke("simulate", "--model", "dpp2", "--seed", "8", "--out", str(first))
        invoke("simulate", "--model", "dpp2", "--seed", "8", "--out", str(second))
        assert first.read_bytes() == second.read_bytes()

    def test_malformed_params(self, invoke, tmp_path):
        result = invoke("simulate", "--model", "thomas", "--params", "kappa", "--out", str(tmp_path / "x.csv"))
        assert result.exit_code == 2

    def test_invalid_parameter_value(self, invoke, tmp_path):
        result = invoke("simulate", "--model", "thomas", "--params", "sigma=-1", "--out", str(tmp_path / "x.csv"))
        assert result.exit_code == 1


class TestFit:
    def test_tangent_record_on_stdout(self, invoke, discs_csv):
        result = invoke("fit", "--family", "boolean", "--method", "tangent", "--in", str(discs_csv))
        assert result.exit_code == 0, result.output
        record = json.loads(result.output.strip().splitlines()[-1])
        assert record["estimator"] == "tangent"
        assert record["values"]["rho"] > 0

    def test_method_alias(self, invoke, tmp_path):
        path = tmp_path / "thomas.csv"
        invoke("simulate", "--model", "thomas1", "--seed", "2", "--out", str(path))
        out = tmp_path / "fit.jsonl"
        result = invoke("fit", "--family", "thomas", "--method", "pcf", "--in", str(path), "--out", str(out))
        assert result.exit_code == 0, result.output
        (record,) = storage.read_fit_records(out)
        assert record.estimator == "g"
        assert set(record.values) == {"kappa", "sigma2", "mu"}

    def test_domain_error_exits_with_status_one(self, invoke, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("# window: 0,1,0,1\nx,y\n")
        result = invoke("fit", "--family", "dpp", "--method", "palm", "--in", str(path))
        assert result.exit_code == 1
        assert "Error" in result.output

    def test_unknown_method(self, invoke, discs_csv):
        result = invoke("fit", "--family", "boolean", "--method", "palm", "--in", str(discs_csv))
        assert result.exit_code == 1


class TestAverage:
    def test_boolean_outputs(self, invoke, discs_csv, tmp_path):
        out, mse_out, records_out = tmp_path / "result.json", tmp_path / "mse.csv", tmp_path / "records.jsonl"
        result = invoke(
            "average", "--family", "boolean", "--boot-n", "4", "--boot-seed", "2",
            "--in", str(discs_csv), "--out", str(out), "--mse-out", str(mse_out), "--records-out", str(records_out),
        )
        assert result.exit_code == 0, result.output
        payload = json.loads(out.read_text())
        assert payload["labels"] == ["area-perim:rho", "tangent:rho", "area-perim:alpha"]
        assert set(payload["modes"]) == {"av", "av+", "convex"}
        assert storage.read_mse_matrix(mse_out).labels == payload["labels"]
        assert len(storage.read_fit_records(records_out)) == 2
        assert "convex: rho=" in result.output

    def test_field_output_needs_poisson(self, invoke, discs_csv, tmp_path):
        result = invoke(
            "average", "--family", "boolean", "--in", str(discs_csv),
            "--out", str(tmp_path / "r.json"), "--field-out", str(tmp_path / "f.bin"),
        )
        assert result.exit_code == 2

    def test_poisson_field_output(self, invoke, tmp_path):
        pattern = tmp_path / "poisson.csv"
        invoke("simulate", "--model", "poisson1", "--seed", "4", "--out", str(pattern))
        field_out = tmp_path / "field.bin"
        result = invoke(
            "average", "--family", "poisson", "--estimators", "kernel:default,kernel:ppl", "--modes", "convex",
            "--boot-n", "2", "--in", str(pattern), "--out", str(tmp_path / "r.json"), "--field-out", str(field_out),
        )
        assert result.exit_code == 0, result.output
        field = storage.read_field_binary(field_out)
        assert (field.nx, field.ny) == (128, 128)
        assert "convex: mise" in result.output

    def test_unknown_mode(self, invoke, discs_csv, tmp_path):
        result = invoke(
            "average", "--family", "boolean", "--modes", "median", "--in", str(discs_csv), "--out", str(tmp_path / "r.json"),
        )
        assert result.exit_code == 1


class TestExperiment:
    def test_table_is_reproducible(self, invoke, tmp_path):
        config = tmp_path / "study.yaml"
        config.write_text(
            "preset: boolean25\nreplications: 2\nseed: 11\nmodes: [av, convex]\n"
            "bootstrap:\n  n_samples: 6\n  seed: 0\n"
        )
        first, second = tmp_path / "first.csv", tmp_path / "second.csv"
        assert invoke("experiment", "--config", str(config), "--out", str(first)).exit_code == 0
        result = invoke("experiment", "--config", str(config), "--out", str(second), "--n-jobs", "2")
        assert result.exit_code == 0, result.output
        assert first.read_bytes() == second.read_bytes()
        table = storage.read_result_table(first)
        assert table.replications == 2
        assert table.lookup("convex", "alpha").se is not None

    def test_unknown_preset(self, invoke, tmp_path):
        config = tmp_path / "bad.yaml"
        config.write_text("preset: boolean75\nreplications: 1\n")
        result = invoke("experiment", "--config", str(config))
        assert result.exit_code == 1
        assert "boolean75" in result.output
