import logging
from dataclasses import replace

import numpy as np
import numpy.testing as npt
import pandas as pd
import pytest

from specforce_diffusion.gen_tools.core.exceptions import EvaluationError
from specforce_diffusion.gen_tools.data.signals import SOURCE_SYNTHETIC, NormalizationStats
from specforce_diffusion.gen_tools.data.toy import toy_dataset
from specforce_diffusion.gen_tools.embedding.delay_embedding import EmbeddingCodec, EmbeddingParams
from specforce_diffusion.gen_tools.evaluation.cross_evaluation import (TAG_REAL, TAG_SYNTHETIC,
                                                                       CrossEvaluationConfig, cross_evaluate,
                                                                       extract_features, fid_score)
from specforce_diffusion.gen_tools.evaluation.tsne import TsneConfig
from specforce_diffusion.gen_tools.formatting.report_manager import ReportManager
from specforce_diffusion.gen_tools.models.classifiers import ClassifierConfig, build_classifier
from specforce_diffusion.gen_tools.models.training import TrainSpec, train_classifier

SMALL = dict(num_classes=4, filters=(4, 8), hidden=16, adaptive_size=2)


@pytest.fixture
def classifiers():
    image = build_classifier(ClassifierConfig("image", **SMALL), np.random.default_rng(1))
    signal = build_classifier(ClassifierConfig("signal", **SMALL), np.random.default_rng(2))
    return image, signal


@pytest.fixture
def stats(toy_windows):
    return NormalizationStats.from_windows(toy_windows, "train")


@pytest.fixture
def config():
    return CrossEvaluationConfig(bins=20, tsne=TsneConfig(perplexity=3.0, iterations=30, seed=5), tsne_points=32,
                                 batch_size=8)


def as_synthetic(windows):
    return [replace(w, source=SOURCE_SYNTHETIC, recording_id=None, offset=None, seed=i)
            for i, w in enumerate(windows)]


@pytest.fixture
def report(toy_windows, classifiers, stats, tiny_codec, vocabulary, config):
    image, signal = classifiers
    real = toy_windows[::2]
    return cross_evaluate(real, as_synthetic(real), image, signal, tiny_codec, stats, vocabulary, config)


class TestCrossEvaluate:
    def test_identical_sets_have_no_gap(self, report):
        for variant in ("image", "signal"):
            assert report.gap(variant) == pytest.approx(0.0)
            npt.assert_array_equal(report.classification[variant][TAG_REAL].confusion,
                                   report.classification[variant][TAG_SYNTHETIC].confusion)
        assert report.fid.score == pytest.approx(0.0, abs=1e-4)
        for pdf in report.pdfs.values():
            assert pdf.js_divergence == pytest.approx(0.0, abs=1e-12)
            assert pdf.wasserstein == pytest.approx(0.0, abs=1e-9)

    def test_report_contents(self, report):
        assert report.class_names == ("bag", "body", "handheld", "leg")
        assert set(report.pdfs) == {"x", "y", "z"}
        assert report.classification["image"][TAG_REAL].total == 24
        assert report.tsne.coords.shape == (32, 2)
        assert report.tsne.sources.count(SOURCE_SYNTHETIC) == 16
        assert set(report.tsne_channels) == {"x", "y", "z"}
        assert not report.fid.shrinkage_applied

    def test_raw_and_normalized_inputs_agree(self, toy_windows, classifiers, stats, tiny_codec, vocabulary):
        image, signal = classifiers
        real = toy_windows[:12]
        config = CrossEvaluationConfig(bins=10, tsne=None, batch_size=8)
        raw = cross_evaluate(real, real[::-1], image, signal, tiny_codec, stats, vocabulary, config)
        normalized = cross_evaluate([stats.normalize_window(w) for w in real], real[::-1], image, signal,
                                    tiny_codec, stats, vocabulary, config)
        assert raw.fid.score == pytest.approx(normalized.fid.score, rel=1e-6)
        assert raw.pdfs["z"].wasserstein == pytest.approx(normalized.pdfs["z"].wasserstein, rel=1e-9, abs=1e-12)
        assert raw.tsne is None and raw.tsne_channels == {}

    def test_perplexity_is_capped_for_small_sets(self, toy_windows, classifiers, stats, tiny_codec, vocabulary,
                                                 caplog):
        image, signal = classifiers
        real = toy_windows[::2]
        config = CrossEvaluationConfig(bins=10, tsne=TsneConfig(perplexity=30.0, iterations=30, seed=5),
                                       tsne_points=32, per_channel_tsne=False, batch_size=8)
        with caplog.at_level(logging.WARNING):
            result = cross_evaluate(real, as_synthetic(real), image, signal, tiny_codec, stats, vocabulary, config)
        assert result.tsne.coords.shape == (32, 2)
        assert "Perplexity 30.0 is infeasible for 32 points" in caplog.text

    def test_empty_synthetic_set(self, toy_windows, classifiers, stats, tiny_codec, vocabulary):
        image, signal = classifiers
        with pytest.raises(EvaluationError) as info:
            cross_evaluate(toy_windows, [], image, signal, tiny_codec, stats, vocabulary)
        assert info.value.details["synthetic"] == 0

    def test_feature_extractor_shape_check(self, classifiers):
        with pytest.raises(EvaluationError):
            extract_features(classifiers[0], np.zeros((2, 3, 64)), "real")

    def test_features_restore_training_mode(self, classifiers, rng):
        image, _ = classifiers
        features = extract_features(image, rng.standard_normal((5, 3, 16, 8)), "real", batch_size=2)
        assert features.matrix.shape == (5, 16)
        assert image.training


@pytest.fixture(scope="module")
def toy_images():
    """4000 normalized toy images, alternating classes between the two halves."""
    windows = toy_dataset(seed=23, per_class=1000, length=64)
    stats = NormalizationStats.from_windows(windows, "train")
    codec = EmbeddingCodec(EmbeddingParams(m=8, n=16, length=64), target_height=16, target_width=8)
    images = codec.encode([stats.normalize_window(w) for w in windows]).astype(np.float32)
    return images, np.array([w.label for w in windows], dtype=np.int64)


@pytest.fixture(scope="module")
def trained_extractor(toy_images):
    images, labels = toy_images
    model = build_classifier(ClassifierConfig("image", **SMALL), np.random.default_rng(7))
    train_classifier(model, images[::8], labels[::8], images[1::16], labels[1::16],
                     TrainSpec(learning_rate=5e-3, batch_size=32, max_epochs=6, patience=6), progress=False)
    return model


@pytest.mark.slow
class TestFidScore:
    def test_split_halves_of_one_set_are_close(self, toy_images, trained_extractor):
        images, _ = toy_images
        result = fid_score(images[::2], images[1::2], trained_extractor)
        assert result.score < 0.5
        assert not result.shrinkage_applied

    def test_rises_with_added_noise(self, toy_images, trained_extractor):
        images, _ = toy_images
        noise = np.random.default_rng(8).standard_normal(images.shape).astype(np.float32)
        scale = float(images.std())
        scores = [fid_score(images, images + level * scale * noise, trained_extractor).score
                  for level in (0.0, 0.1, 0.5, 1.0)]
        assert scores[0] == pytest.approx(0.0, abs=1e-4)
        assert all(a < b for a, b in zip(scores, scores[1:]))


class TestReportBundle:
    def test_bundle_files(self, report, stats, tmp_path):
        written = ReportManager(report.class_names).write_bundle(report, stats, tmp_path / "report")
        names = sorted(p.name for p in written)
        assert names == sorted(["summary.txt", "accuracy.csv", "fid.csv", "stats.csv", "tsne.csv",
                                "confusion_image_real-test.csv", "confusion_image_synthetic.csv",
                                "confusion_signal_real-test.csv", "confusion_signal_synthetic.csv",
                                "pdf_x.csv", "pdf_y.csv", "pdf_z.csv", "tsne_x.csv", "tsne_y.csv", "tsne_z.csv"])
        assert all(p.is_file() for p in written)

    def test_accuracy_table(self, report, stats, tmp_path):
        ReportManager(report.class_names).write_bundle(report, stats, tmp_path)
        accuracy = pd.read_csv(tmp_path / "accuracy.csv")
        assert list(accuracy.columns[:4]) == ["variant", "split", "accuracy", "samples"]
        assert "acc_handheld" in accuracy.columns
        assert len(accuracy) == 4

    def test_confusion_is_labelled(self, report, stats, tmp_path):
        ReportManager(report.class_names).write_bundle(report, stats, tmp_path)
        confusion = pd.read_csv(tmp_path / "confusion_signal_real-test.csv", index_col="true")
        assert list(confusion.index) == ["bag", "body", "handheld", "leg"]
        assert confusion.to_numpy().sum() == 24

    def test_stats_and_tsne_tables(self, report, stats, tmp_path):
        ReportManager(report.class_names).write_bundle(report, stats, tmp_path)
        table = pd.read_csv(tmp_path / "stats.csv")
        assert list(table["channel"]) == ["x", "y", "z"]
        npt.assert_allclose(table["std"], stats.std, rtol=1e-8)
        tsne = pd.read_csv(tmp_path / "tsne.csv")
        assert set(tsne["source"]) == {"real", "synthetic"}
        assert set(tsne["class"]) <= {"bag", "body", "handheld", "leg"}

    def test_summary_table(self, report):
        summary = ReportManager(report.class_names).format_summary(report)
        assert "| image-based" in summary
        assert "| signal-based" in summary
        assert "Frechet distance" in summary
        assert "diagonal loading" not in summary
        assert summary.count("JS divergence") == 3
