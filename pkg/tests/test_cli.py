"""Command-line interface: artifacts, exit codes, idempotency."""
import json

import numpy as np
import pytest

from ccr_lab.cli import main
from ccr_lab.core import read_fvec
from ccr_lab.datagen import bench_v1


@pytest.fixture(scope="module")
def small_config_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "small.json"
    path.write_text(bench_v1(samples_per_class=200).to_json())
    return str(path)


@pytest.fixture(scope="module")
def pipeline_dir(tmp_path_factory, small_config_path):
    """One full CLI pipeline run shared by the read-only assertions."""
    out = tmp_path_factory.mktemp("run")
    assert main(["gen", "--out", str(out), "--config", small_config_path,
                 "--seed", "5"]) == 0
    assert main(["train1", "--out", str(out), "--beta", "0.5"]) == 0
    assert main(["weights", "--out", str(out), "--estimator", "ccr"]) == 0
    assert main(["train2", "--out", str(out), "--lambda", "0.1"]) == 0
    assert main(["eval", "--out", str(out)]) == 0
    assert main(["attribute", "--out", str(out)]) == 0
    return out


class TestGen:
    def test_artifacts_and_group_counts(self, pipeline_dir):
        groups = json.loads((pipeline_dir / "groups.json").read_text())
        assert len(groups) == 4
        feats, labels, gids, c = read_fvec(pipeline_dir / "observed.fvec")
        assert sum(groups.values()) == feats.shape[0]
        assert c == 2 and gids is not None

    def test_missing_config_exits_2(self, tmp_path):
        assert main(["gen", "--out", str(tmp_path), "--config",
                     str(tmp_path / "absent.json")]) == 2

    def test_same_seed_identical_files(self, tmp_path, small_config_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert main(["gen", "--out", str(out), "--config",
                         small_config_path, "--seed", "9"]) == 0
        assert (a / "ideal.fvec").read_bytes() == (b / "ideal.fvec").read_bytes()
        assert (a / "observed.fvec").read_bytes() == (b / "observed.fvec").read_bytes()


class TestPipelineArtifacts:
    def test_metrics_schema(self, pipeline_dir):
        metrics = json.loads((pipeline_dir / "metrics.json").read_text())
        assert "mean_accuracy" in metrics
        assert "worst_group_accuracy" in metrics

    def test_weights_csv_schema(self, pipeline_dir):
        lines = (pipeline_dir / "weights.csv").read_text().splitlines()
        assert lines[0] == "index,weight,pseudo_group"
        feats, *_ = read_fvec(pipeline_dir / "observed.fvec")
        assert len(lines) - 1 == feats.shape[0]

    def test_manifest_records_all_commands(self, pipeline_dir):
        manifest = json.loads((pipeline_dir / "manifest.json").read_text())
        assert set(manifest) >= {"gen", "train1", "weights", "train2",
                                 "eval", "attribute"}
        assert "config_sha256" in manifest["gen"]

    def test_attribution_blocks(self, pipeline_dir):
        attribution = json.loads((pipeline_dir / "attribution.json").read_text())
        assert set(attribution) == {"causal", "spurious"}

    def test_idempotent_rerun_byte_identical(self, pipeline_dir,
                                             small_config_path):
        before = {p.name: p.read_bytes() for p in pipeline_dir.iterdir()
                  if p.is_file()}
        assert main(["gen", "--out", str(pipeline_dir), "--config",
                     small_config_path, "--seed", "5"]) == 0
        assert main(["train1", "--out", str(pipeline_dir), "--beta", "0.5"]) == 0
        assert main(["weights", "--out", str(pipeline_dir),
                     "--estimator", "ccr"]) == 0
        assert main(["train2", "--out", str(pipeline_dir),
                     "--lambda", "0.1"]) == 0
        assert main(["eval", "--out", str(pipeline_dir)]) == 0
        assert main(["attribute", "--out", str(pipeline_dir)]) == 0
        after = {p.name: p.read_bytes() for p in pipeline_dir.iterdir()
                 if p.is_file()}
        assert before == after


class TestExitCodes:
    def test_missing_upstream_artifacts_exit_2(self, tmp_path):
        assert main(["train1", "--out", str(tmp_path)]) == 2
        assert main(["weights", "--out", str(tmp_path),
                     "--estimator", "ccr"]) == 2
        assert main(["eval", "--out", str(tmp_path)]) == 2

    def test_bad_estimator_is_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as excinfo:
            main(["weights", "--out", str(tmp_path), "--estimator", "bogus"])
        assert excinfo.value.code == 2

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")  # overflow is the point
    def test_divergent_training_exit_3(self, tmp_path, small_config_path):
        assert main(["gen", "--out", str(tmp_path), "--config",
                     small_config_path, "--seed", "5"]) == 0
        cfg = {"learning_rate": 1e6, "epochs": 50, "beta": 100.0}
        cfg_path = tmp_path / "diverge.json"
        cfg_path.write_text(json.dumps(cfg))
        assert main(["train1", "--out", str(tmp_path), "--config",
                     str(cfg_path)]) == 3


class TestErmReduction:
    def test_estimator_none_lambda_zero_runs(self, tmp_path, small_config_path):
        out = str(tmp_path)
        assert main(["gen", "--out", out, "--config", small_config_path,
                     "--seed", "5"]) == 0
        assert main(["train1", "--out", out, "--beta", "0"]) == 0
        assert main(["weights", "--out", out, "--estimator", "none"]) == 0
        weights = np.loadtxt(tmp_path / "weights.csv", delimiter=",",
                             skiprows=1, usecols=1)
        assert np.allclose(weights, 1.0)
        assert main(["train2", "--out", out, "--lambda", "0"]) == 0
        assert main(["eval", "--out", out]) == 0


class TestSweep:
    def test_one_metrics_file_per_lambda(self, tmp_path, small_config_path):
        out = tmp_path / "sw"
        assert main(["sweep", "--out", str(out), "--config", small_config_path,
                     "--seed", "5", "--grid", "0,0.25"]) == 0
        for name in ("lam_0", "lam_0.25"):
            metrics = json.loads((out / name / "metrics.json").read_text())
            assert "worst_group_accuracy" in metrics
        summary = json.loads((out / "sweep.json").read_text())
        assert set(summary["results"]) == {"0", "0.25"}
        assert str(summary["best_lambda"]) in ("0.0", "0.25")


class TestCompare:
    def test_default_four_row_table(self, tmp_path, small_config_path, capsys):
        out = tmp_path / "cmp"
        assert main(["compare", "--out", str(out), "--config",
                     small_config_path, "--seeds", "5"]) == 0
        table = json.loads((out / "compare.json").read_text())["methods"]
        assert set(table) == {"erm", "ccr-jtt", "ccr-afr", "ccr"}
        printed = capsys.readouterr().out
        assert "erm" in printed and "ccr" in printed

    def test_full_grid_has_ten_rows(self, tmp_path, small_config_path):
        out = tmp_path / "cmpfull"
        assert main(["compare", "--out", str(out), "--config",
                     small_config_path, "--seeds", "5", "--full"]) == 0
        table = json.loads((out / "compare.json").read_text())["methods"]
        assert len(table) == 10

    def test_median_over_seeds(self, tmp_path, small_config_path):
        out = tmp_path / "cmps"
        assert main(["compare", "--out", str(out), "--config",
                     small_config_path, "--seeds", "5,6,7",
                     "--methods", "erm"]) == 0
        data = json.loads((out / "compare.json").read_text())
        assert data["seeds"] == [5, 6, 7]
        wga = data["methods"]["erm"]["worst_group_accuracy"]
        assert wga["min"] <= wga["median"] <= wga["max"]
