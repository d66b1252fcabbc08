import json
import logging
from pathlib import Path

import numpy as np
import numpy.testing as npt
import pandas as pd
import pytest
from click.testing import CliRunner

from specforce_diffusion.cli import cli
from specforce_diffusion.gen_tools.core.exceptions import DataValidationError
from specforce_diffusion.gen_tools.core.pipeline_manager import PipelineManager
from specforce_diffusion.gen_tools.data.signals import NormalizationStats
from specforce_diffusion.gen_tools.models.denoiser import DenoiserModel
from specforce_diffusion.gen_tools.operations import resolve_labels
from specforce_diffusion.gen_tools.storage import (dataset_from_container, denoiser_from_container,
                                                   denoiser_to_container, file_digest, read_container,
                                                   write_container)

SAMPLE_TOY_CONFIG = Path(__file__).resolve().parents[1] / "src" / "specforce_diffusion" / "config" / \
    "sample_toy_config.ini"


@pytest.fixture(autouse=True)
def restore_root_logger():
    root = logging.getLogger()
    handlers, level = list(root.handlers), root.level
    yield
    root.handlers[:] = handlers
    root.setLevel(level)


@pytest.fixture
def runner():
    return CliRunner()


def invoke(runner, *args):
    return runner.invoke(cli, [str(a) for a in args], catch_exceptions=False)


def summary_of(result):
    return json.loads(result.stdout)


def error_of(result):
    return json.loads(result.stderr.strip().splitlines()[-1])


def manifest_of(out_dir):
    return json.loads((out_dir / "run_manifest.json").read_text(encoding="utf-8"))


class TestToyDataAndIngest:
    def test_toy_data(self, runner, tiny_config_file, tmp_path):
        out = tmp_path / "toy"
        result = invoke(runner, "toy-data", "--config", tiny_config_file, "--out", out)
        assert result.exit_code == 0, result.stderr
        summary = summary_of(result)
        assert summary["windows"] == {"train": 32, "val": 8, "test": 8}
        bundle = dataset_from_container(read_container(out / "dataset.idgc"))
        assert bundle.stats.computed_over == "train"
        assert bundle.metadata["origin"] == "toy"
        assert bundle.metadata["config.embedding.m"] == "8"
        manifest = manifest_of(out)
        assert manifest["status"] == "completed"
        assert manifest["command"] == "toy-data"
        assert manifest["outputs"][str(out / "dataset.idgc")] == file_digest(out / "dataset.idgc")
        assert manifest["config"]["run"]["seed"] == "3"

    def test_toy_data_is_deterministic(self, runner, tiny_config_file, tmp_path):
        for name in ("a", "b"):
            assert invoke(runner, "toy-data", "--config", tiny_config_file, "--out", tmp_path / name).exit_code == 0
        assert file_digest(tmp_path / "a" / "dataset.idgc") == file_digest(tmp_path / "b" / "dataset.idgc")

    def test_seed_option_overrides_config(self, runner, tiny_config_file, tmp_path):
        invoke(runner, "toy-data", "--config", tiny_config_file, "--out", tmp_path / "a")
        invoke(runner, "toy-data", "--config", tiny_config_file, "--out", tmp_path / "b", "--seed", 4)
        assert manifest_of(tmp_path / "b")["config"]["run"]["seed"] == "4"
        assert file_digest(tmp_path / "a" / "dataset.idgc") != file_digest(tmp_path / "b" / "dataset.idgc")

    def test_ingest_written_csv(self, runner, tiny_config_file, tmp_path):
        toy = tmp_path / "toy"
        result = invoke(runner, "toy-data", "--config", tiny_config_file, "--out", toy, "--per-class", 4,
                        "--write-csv")
        manifest = summary_of(result)["manifest"]
        ingested = invoke(runner, "ingest", "--config", tiny_config_file, "--manifest", manifest,
                          "--out", tmp_path / "ingest")
        assert ingested.exit_code == 0, ingested.stderr
        summary = summary_of(ingested)
        assert summary["recordings"] == 16
        assert sum(summary["windows"].values()) == 16
        original = dataset_from_container(read_container(toy / "dataset.idgc"))
        restored = dataset_from_container(read_container(tmp_path / "ingest" / "dataset.idgc"))
        npt.assert_allclose(restored.stats.mean, original.stats.mean, rtol=1e-7, atol=1e-7)
        assert str(manifest) in manifest_of(tmp_path / "ingest")["inputs"]

    def test_ingest_is_byte_stable(self, runner, tiny_config_file, tmp_path):
        result = invoke(runner, "toy-data", "--config", tiny_config_file, "--out", tmp_path / "toy", "--per-class",
                        4, "--write-csv")
        manifest = summary_of(result)["manifest"]
        for name in ("a", "b"):
            ingested = invoke(runner, "ingest", "--config", tiny_config_file, "--manifest", manifest,
                              "--out", tmp_path / name)
            assert ingested.exit_code == 0, ingested.stderr
        assert file_digest(tmp_path / "a" / "dataset.idgc") == file_digest(tmp_path / "b" / "dataset.idgc")

    def test_missing_manifest(self, runner, tiny_config_file, tmp_path):
        result = invoke(runner, "ingest", "--config", tiny_config_file, "--out", tmp_path / "out")
        assert result.exit_code == 2
        error = error_of(result)
        assert error["error_code"] == "DATA_ERROR"
        assert "No manifest given" in error["message"]
        manifest = manifest_of(tmp_path / "out")
        assert manifest["status"] == "failed"
        assert manifest["error"]["error_type"] == "DataValidationError"

    def test_unknown_label_in_manifest(self, runner, tiny_config_file, tmp_path):
        (tmp_path / "manifest.csv").write_text("file,label,subject\nr.csv,pocket,s1\n", encoding="utf-8")
        result = invoke(runner, "ingest", "--config", tiny_config_file, "--manifest", tmp_path / "manifest.csv",
                        "--out", tmp_path / "out")
        assert result.exit_code == 2
        error = error_of(result)
        assert "Valid labels" in error["message"]
        assert error["details"]["label"] == "pocket"

    def test_bad_configuration(self, runner, tmp_path):
        (tmp_path / "bad.ini").write_text("[diffusion]\nepoch = 3\n", encoding="utf-8")
        result = invoke(runner, "toy-data", "--config", tmp_path / "bad.ini", "--out", tmp_path / "out")
        assert result.exit_code == 2
        assert error_of(result)["error_code"] == "CONFIG_ERROR"
        assert not (tmp_path / "out" / "run_manifest.json").exists()

    def test_unexpected_failure(self, runner, tiny_config_file, tmp_path, monkeypatch):
        def boom(self, *args, **kwargs):
            raise RuntimeError("disk on fire")

        monkeypatch.setattr(PipelineManager, "toy_data", boom)
        result = invoke(runner, "toy-data", "--config", tiny_config_file, "--out", tmp_path / "out")
        assert result.exit_code == 1
        error = error_of(result)
        assert error["error_code"] == "INTERNAL"
        assert error["message"] == "disk on fire"


class TestRoundtripCheck:
    def test_random_signals_pass(self, runner, tiny_config_file, tmp_path):
        result = invoke(runner, "roundtrip-check", "--config", tiny_config_file, "--out", tmp_path,
                        "--length", 64, "--m", 8, "--n", 16, "--count", 20)
        assert result.exit_code == 0
        assert summary_of(result) == {"result": "PASS", "checked": 20, "first_mismatch": None, "stage": None}

    def test_corruption_is_detected(self, runner, tiny_config_file, tmp_path):
        result = invoke(runner, "roundtrip-check", "--config", tiny_config_file, "--out", tmp_path,
                        "--length", 64, "--m", 8, "--n", 16, "--count", 5, "--corrupt")
        assert result.exit_code == 3
        summary = summary_of(result)
        assert summary["result"] == "FAIL"
        assert summary["first_mismatch"] == [0, 0, 63]
        assert summary["stage"] == "invert"
        assert manifest_of(tmp_path)["summary"]["result"] == "FAIL"

    def test_single_column_embedding(self, runner, tiny_config_file, tmp_path):
        result = invoke(runner, "roundtrip-check", "--config", tiny_config_file, "--out", tmp_path,
                        "--length", 16, "--m", 8, "--n", 16, "--count", 3)
        assert result.exit_code == 0
        assert summary_of(result)["result"] == "PASS"

    def test_invalid_embedding(self, runner, tiny_config_file, tmp_path):
        result = invoke(runner, "roundtrip-check", "--config", tiny_config_file, "--out", tmp_path,
                        "--length", 64, "--m", 8, "--n", 8, "--count", 1)
        assert result.exit_code == 2
        assert error_of(result)["error_code"] == "EMBED_ERROR"

    def test_dataset_audit(self, runner, tiny_config_file, tmp_path):
        invoke(runner, "toy-data", "--config", tiny_config_file, "--out", tmp_path / "toy")
        result = invoke(runner, "roundtrip-check", "--config", tiny_config_file, "--out", tmp_path / "audit",
                        "--dataset", tmp_path / "toy" / "dataset.idgc")
        assert result.exit_code == 0
        assert summary_of(result)["checked"] == 48


@pytest.fixture
def untrained_model(tmp_path, tiny_backbone, tiny_codec, vocabulary):
    model = DenoiserModel(tiny_backbone, vocabulary, np.random.default_rng(0))
    stats = NormalizationStats(mean=[0.0, 0.0, 9.8], std=[1.0, 1.0, 1.0], computed_over="train", count=48)
    path = tmp_path / "denoiser.idgc"
    write_container(path, denoiser_to_container(model, tiny_codec, stats, 0, [], None))
    return path


class TestGenerate:
    def test_zero_count_writes_an_empty_split(self, runner, tiny_config_file, untrained_model, tmp_path):
        result = invoke(runner, "generate", "--config", tiny_config_file, "--model", untrained_model,
                        "--label", "all", "--count", 0, "--out", tmp_path / "gen")
        assert result.exit_code == 0, result.stderr
        summary = summary_of(result)
        assert summary["count"] == 0
        assert summary["per_class"] == {"bag": 0, "body": 0, "handheld": 0, "leg": 0}
        bundle = dataset_from_container(read_container(tmp_path / "gen" / "synthetic.idgc"))
        assert bundle.split("synthetic") == []

    def test_negative_count_is_a_usage_error(self, runner, tiny_config_file, untrained_model, tmp_path):
        result = runner.invoke(cli, ["generate", "--config", str(tiny_config_file), "--model", str(untrained_model),
                                     "--label", "all", "--count", "-1", "--out", str(tmp_path / "gen")])
        assert result.exit_code == 2
        assert not (tmp_path / "gen" / "synthetic.idgc").exists()

    def test_resolve_labels(self, vocabulary):
        npt.assert_array_equal(resolve_labels("all", 6, vocabulary, 0), [0, 1, 2, 3, 0, 1])
        npt.assert_array_equal(resolve_labels("leg", 2, vocabulary, 0), [3, 3])
        assert resolve_labels("random", 0, vocabulary, 0).shape == (0,)
        with pytest.raises(DataValidationError):
            resolve_labels("all", -1, vocabulary, 0)


@pytest.mark.slow
class TestEndToEnd:
    def test_full_pipeline(self, runner, tiny_config_file, tmp_path):
        config = ("--config", tiny_config_file)
        assert invoke(runner, "toy-data", *config, "--out", tmp_path / "data").exit_code == 0
        dataset = tmp_path / "data" / "dataset.idgc"

        trained = invoke(runner, "train-diffusion", *config, "--dataset", dataset, "--out", tmp_path / "diffusion")
        assert trained.exit_code == 0, trained.stderr
        summary = summary_of(trained)
        assert summary["epochs"] == 2
        assert summary["optimizer_step"] == 4
        assert sorted(p.name for p in (tmp_path / "diffusion" / "checkpoints").iterdir()) == \
            ["denoiser_epoch_00001.idgc", "denoiser_epoch_00002.idgc"]
        assert len(pd.read_csv(tmp_path / "diffusion" / "diffusion_loss.csv")) == 2

        resumed = invoke(runner, "train-diffusion", *config, "--dataset", dataset, "--out", tmp_path / "resumed",
                         "--resume", tmp_path / "diffusion" / "checkpoints" / "denoiser_epoch_00001.idgc")
        assert summary_of(resumed)["epochs"] == 2
        straight = denoiser_from_container(read_container(tmp_path / "diffusion" / "denoiser.idgc"))
        again = denoiser_from_container(read_container(tmp_path / "resumed" / "denoiser.idgc"))
        for key, value in straight.model.state_dict().items():
            npt.assert_allclose(again.model.state_dict()[key], value, rtol=1e-5, atol=1e-6, err_msg=key)

        model = tmp_path / "diffusion" / "denoiser.idgc"
        generated = invoke(runner, "generate", *config, "--model", model, "--label", "all", "--count", 8,
                           "--out", tmp_path / "gen")
        assert summary_of(generated)["per_class"] == {"bag": 2, "body": 2, "handheld": 2, "leg": 2}
        invoke(runner, "generate", *config, "--model", model, "--label", "all", "--count", 8,
               "--out", tmp_path / "gen2")
        assert file_digest(tmp_path / "gen" / "synthetic.idgc") == file_digest(tmp_path / "gen2" / "synthetic.idgc")
        synthetic = dataset_from_container(read_container(tmp_path / "gen" / "synthetic.idgc")).split("synthetic")
        assert all(w.values.shape == (3, 64) and not w.normalized for w in synthetic)

        unknown = invoke(runner, "generate", *config, "--model", model, "--label", "pocket", "--count", 2,
                         "--out", tmp_path / "bad")
        assert unknown.exit_code == 2

        for variant in ("image", "signal"):
            result = invoke(runner, "train-classifier", *config, "--dataset", dataset, "--variant", variant,
                            "--out", tmp_path / "classifiers")
            assert result.exit_code == 0, result.stderr
            assert 0.0 <= summary_of(result)["test_accuracy"] <= 100.0

        evaluated = invoke(runner, "evaluate", *config, "--real", dataset,
                           "--synthetic", tmp_path / "gen" / "synthetic.idgc",
                           "--image-model", tmp_path / "classifiers" / "classifier_image.idgc",
                           "--signal-model", tmp_path / "classifiers" / "classifier_signal.idgc",
                           "--out", tmp_path / "report")
        assert evaluated.exit_code == 0, evaluated.stderr
        report = summary_of(evaluated)
        assert np.isfinite(report["fid"])
        assert set(report["gap"]) == {"image", "signal"}
        for name in ("summary.txt", "accuracy.csv", "fid.csv", "tsne.csv", "pdf_x.csv", "stats.csv",
                     "run_manifest.json"):
            assert (tmp_path / "report" / name).is_file()

        swapped = invoke(runner, "evaluate", *config, "--real", dataset, "--synthetic", dataset,
                         "--image-model", tmp_path / "classifiers" / "classifier_signal.idgc",
                         "--signal-model", tmp_path / "classifiers" / "classifier_signal.idgc",
                         "--out", tmp_path / "swapped")
        assert swapped.exit_code == 2
        assert error_of(swapped)["error_code"] == "EVAL_ERROR"


@pytest.mark.slow
class TestToyAcceptance:
    def test_synthetic_windows_pass_both_classifiers(self, runner, tmp_path):
        config = ("--config", SAMPLE_TOY_CONFIG)
        data = invoke(runner, "toy-data", *config, "--out", tmp_path / "data")
        assert data.exit_code == 0, data.stderr
        assert sum(summary_of(data)["windows"].values()) == 1600
        dataset = tmp_path / "data" / "dataset.idgc"

        trained = invoke(runner, "train-diffusion", *config, "--dataset", dataset, "--out", tmp_path / "diffusion")
        assert trained.exit_code == 0, trained.stderr
        generated = invoke(runner, "generate", *config, "--model", tmp_path / "diffusion" / "denoiser.idgc",
                           "--label", "all", "--count", 400, "--out", tmp_path / "gen")
        assert summary_of(generated)["per_class"] == {"bag": 100, "body": 100, "handheld": 100, "leg": 100}

        for variant in ("image", "signal"):
            result = invoke(runner, "train-classifier", *config, "--dataset", dataset, "--variant", variant,
                            "--out", tmp_path / "classifiers")
            assert result.exit_code == 0, result.stderr
            assert summary_of(result)["test_accuracy"] >= 95.0

        evaluated = invoke(runner, "evaluate", *config, "--real", dataset,
                           "--synthetic", tmp_path / "gen" / "synthetic.idgc",
                           "--image-model", tmp_path / "classifiers" / "classifier_image.idgc",
                           "--signal-model", tmp_path / "classifiers" / "classifier_signal.idgc",
                           "--out", tmp_path / "report")
        assert evaluated.exit_code == 0, evaluated.stderr
        report = summary_of(evaluated)
        for variant in ("image", "signal"):
            assert report["accuracy"][variant]["real-test"] >= 95.0
            assert report["accuracy"][variant]["synthetic"] >= 90.0
            assert abs(report["gap"][variant]) <= 5.0
