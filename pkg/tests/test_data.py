import numpy as np
import numpy.testing as npt
import pandas as pd
import pytest

from specforce_diffusion.gen_tools.core.exceptions import DataValidationError
from specforce_diffusion.gen_tools.data.preprocessing import (hop_size, preprocess, split_dataset, split_targets,
                                                              window_offsets, windowize)
from specforce_diffusion.gen_tools.data.recordings import (load_recordings, read_manifest, read_recording,
                                                           write_recording_csv)
from specforce_diffusion.gen_tools.data.signals import (LabelVocabulary, NormalizationStats, Recording,
                                                        SignalWindow)
from specforce_diffusion.gen_tools.data.toy import (TOY_BANDS, band_edges, toy_dataset, toy_recordings,
                                                    write_toy_recordings)


def recording(rid, label, length, rng, subject="s1"):
    return Recording(recording_id=rid, timestamps=np.arange(length) / 200.0,
                     values=rng.standard_normal((3, length)) + np.array([[0.0], [1.0], [9.81]]),
                     label=label, subject=subject)


def write_csv(path, rows):
    path.write_text("t,ax,ay,az\n" + "\n".join(rows) + "\n", encoding="utf-8")
    return path


class TestLabelVocabulary:
    def test_default_placements(self, vocabulary):
        assert vocabulary.names == ("bag", "body", "handheld", "leg")
        assert vocabulary.id_of("handheld") == 2
        assert vocabulary.name_of(3) == "leg"

    def test_unknown_label_lists_valid_names(self, vocabulary):
        with pytest.raises(DataValidationError) as info:
            vocabulary.id_of("pocket")
        assert "bag" in info.value.message
        assert info.value.details["valid"] == ["bag", "body", "handheld", "leg"]

    def test_id_out_of_range(self, vocabulary):
        with pytest.raises(DataValidationError):
            vocabulary.name_of(4)

    def test_metadata_round_trip(self):
        vocab = LabelVocabulary(["walk", "run", "sit"])
        assert LabelVocabulary.from_metadata(vocab.to_metadata()) == vocab

    @pytest.mark.parametrize("names", [["only"], ["a", "a"], ["a", ""]])
    def test_invalid_names(self, names):
        with pytest.raises(DataValidationError):
            LabelVocabulary(names)


class TestSignalWindow:
    def test_shape_is_validated(self):
        with pytest.raises(DataValidationError):
            SignalWindow(values=np.zeros((2, 10)), label=0)

    def test_provenance(self):
        assert SignalWindow(values=np.zeros((3, 4)), label=0, recording_id="bag/r1", offset=512).provenance \
            == "bag/r1@512"
        assert SignalWindow(values=np.zeros((3, 4)), label=0, seed=9).provenance == "seed:9"


class TestNormalizationStats:
    def test_from_windows_and_round_trip(self, rng):
        windows = [SignalWindow(values=rng.standard_normal((3, 50)) * 2.0 + 3.0, label=0) for _ in range(4)]
        stats = NormalizationStats.from_windows(windows, "train")
        assert stats.count == 200
        normalized = [stats.normalize_window(w) for w in windows]
        stacked = np.concatenate([w.values for w in normalized], axis=1)
        npt.assert_allclose(stacked.mean(axis=1), 0.0, atol=1e-12)
        npt.assert_allclose(stacked.std(axis=1), 1.0)
        npt.assert_allclose(stats.denormalize_window(normalized[0]).values, windows[0].values)

    def test_normalize_is_idempotent(self, rng):
        stats = NormalizationStats(mean=[1.0, 2.0, 3.0], std=[2.0, 2.0, 2.0])
        window = stats.normalize_window(SignalWindow(values=np.ones((3, 5)), label=0))
        assert stats.normalize_window(window) is window

    def test_degenerate_channel_is_named(self):
        with pytest.raises(DataValidationError) as info:
            NormalizationStats(mean=[0.0, 0.0, 0.0], std=[1.0, 0.0, 1.0])
        assert info.value.details["channels"] == ["y"]

    def test_no_windows(self):
        with pytest.raises(DataValidationError):
            NormalizationStats.from_windows([], "train")

    def test_keeps_dtype(self):
        stats = NormalizationStats(mean=[1.0, 1.0, 1.0], std=[2.0, 2.0, 2.0])
        assert stats.normalize(np.ones((3, 4), dtype=np.float32)).dtype == np.float32


class TestWindowing:
    def test_offsets_after_drop(self):
        npt.assert_array_equal(window_offsets(1500 + 2048, 1024, hop_size(1024, 0.5), drop=1500), [0, 512, 1024])

    def test_short_recording_yields_nothing(self):
        assert window_offsets(1500 + 1023, 1024, 512, drop=1500).size == 0

    def test_windows_copy_the_right_samples(self):
        values = np.arange(3 * 20, dtype=np.float64).reshape(3, 20)
        windows, offsets = windowize(values, 8, 4, drop=2)
        assert windows.shape == (3, 3, 8)
        npt.assert_array_equal(offsets, [0, 4, 8])
        npt.assert_array_equal(windows[1, 0], values[0, 6:14])

    @pytest.mark.parametrize("window,overlap", [(0, 0.5), (8, 1.0), (8, -0.1)])
    def test_invalid_hop(self, window, overlap):
        with pytest.raises(DataValidationError):
            hop_size(window, overlap)


class TestSplit:
    def windows(self, per_group, groups, labels=(0,)):
        return [SignalWindow(values=np.zeros((3, 4)), label=label, recording_id=f"r{label}-{g}", offset=k)
                for label in labels for g in range(groups) for k in range(per_group)]

    def test_exact_targets(self):
        splits = split_dataset(self.windows(1, 100), seed=0)
        assert [len(splits[name]) for name in ("train", "val", "test")] == [70, 15, 15]
        assert split_targets(100, (0.7, 0.15, 0.15)) == [70, 15, 15]

    def test_recordings_never_straddle_splits(self):
        splits = split_dataset(self.windows(5, 10, labels=(0, 1)), seed=4)
        owner = {}
        for name, members in splits.items():
            for w in members:
                assert owner.setdefault(w.recording_id, name) == name
        for name in ("train", "val", "test"):
            assert {w.label for w in splits[name]} == {0, 1}

    def test_seed_changes_assignment_deterministically(self):
        windows = self.windows(1, 30)
        a, b = split_dataset(windows, seed=1), split_dataset(windows, seed=1)
        assert [w.recording_id for w in a["test"]] == [w.recording_id for w in b["test"]]
        c = split_dataset(windows, seed=2)
        assert [w.recording_id for w in a["test"]] != [w.recording_id for w in c["test"]]

    def test_needs_three_groups_per_class(self):
        with pytest.raises(DataValidationError) as info:
            split_dataset(self.windows(10, 2), seed=0)
        assert info.value.details["groups"] == 2

    @pytest.mark.parametrize("fractions", [(0.5, 0.5), (0.8, 0.2, 0.0), (0.6, 0.3, 0.3)])
    def test_invalid_fractions(self, fractions):
        with pytest.raises(DataValidationError):
            split_dataset(self.windows(1, 10), fractions)


class TestPreprocess:
    def test_stats_come_from_the_training_split(self, rng):
        recordings = [recording(f"bag/r{i}", 0, 300, rng) for i in range(6)] + \
                     [recording(f"leg/r{i}", 3, 300, rng) for i in range(6)]
        result = preprocess(recordings, window=64, overlap=0.5, drop=20, seed=3)
        assert result.stats.computed_over == "train"
        train = np.concatenate([w.values for w in result.splits["train"]], axis=1)
        npt.assert_allclose(train.mean(axis=1), 0.0, atol=1e-10)
        npt.assert_allclose(train.std(axis=1), 1.0)
        assert all(w.normalized for w in result.windows)
        assert result.stats.count == train.shape[1]

    def test_short_recordings_are_skipped(self, rng):
        recordings = [recording(f"bag/r{i}", 0, 200, rng) for i in range(3)] + [recording("bag/short", 0, 50, rng)]
        result = preprocess(recordings, window=64, overlap=0.0, drop=10, fractions=(0.4, 0.3, 0.3))
        assert result.skipped == ["bag/short"]

    def test_nothing_usable(self, rng):
        with pytest.raises(DataValidationError):
            preprocess([recording("bag/short", 0, 50, rng)], window=64, drop=10)

    def test_unknown_stats_scope(self, rng):
        with pytest.raises(DataValidationError):
            preprocess([recording("r", 0, 200, rng)], window=64, drop=0, stats_scope="val")

    def test_constant_channel_is_rejected(self, rng):
        recordings = [recording(f"bag/r{i}", 0, 100, rng) for i in range(3)]
        for rec in recordings:
            rec.values[2] = 0.0
        with pytest.raises(DataValidationError) as info:
            preprocess(recordings, window=64, drop=0)
        assert info.value.details["channels"] == ["z"]


class TestRecordings:
    def test_manifest_round_trip(self, tmp_path, vocabulary):
        (tmp_path / "manifest.csv").write_text("file,label,subject\nbag/a.csv,bag,s1\nleg/b.csv, leg ,s2\n")
        entries = read_manifest(tmp_path / "manifest.csv", vocabulary)
        assert [(e.file, e.label, e.subject) for e in entries] == [("bag/a.csv", 0, "s1"), ("leg/b.csv", 3, "s2")]
        assert entries[0].recording_id == "bag/a"

    def test_manifest_unknown_label(self, tmp_path, vocabulary):
        (tmp_path / "manifest.csv").write_text("file,label,subject\na.csv,pocket,s1\n")
        with pytest.raises(DataValidationError) as info:
            read_manifest(tmp_path / "manifest.csv", vocabulary)
        assert info.value.details["label"] == "pocket"

    def test_manifest_missing(self, tmp_path, vocabulary):
        with pytest.raises(DataValidationError):
            read_manifest(tmp_path / "nope.csv", vocabulary)

    def test_manifest_missing_column(self, tmp_path, vocabulary):
        (tmp_path / "manifest.csv").write_text("file,label\na.csv,bag\n")
        with pytest.raises(DataValidationError) as info:
            read_manifest(tmp_path / "manifest.csv", vocabulary)
        assert info.value.details["missing"] == ["subject"]

    def test_reads_values(self, tmp_path):
        path = write_csv(tmp_path / "r.csv", ["0.000,1,2,3", "0.005,4,5,6", "0.010,7,8,9"])
        rec = read_recording(path, "r", 1, "s1")
        npt.assert_array_equal(rec.values[:, 1], [4.0, 5.0, 6.0])
        assert len(rec) == 3

    def test_malformed_row_line_number(self, tmp_path):
        path = write_csv(tmp_path / "r.csv", ["0.000,1,2,3", "0.005,4,5,6", "0.010,7,oops,9"])
        with pytest.raises(DataValidationError) as info:
            read_recording(path, "r", 0, "s1")
        assert info.value.details["line"] == 4

    def test_duplicate_timestamp_line_number(self, tmp_path):
        path = write_csv(tmp_path / "r.csv", ["0.000,1,2,3", "0.005,4,5,6", "0.005,7,8,9"])
        with pytest.raises(DataValidationError) as info:
            read_recording(path, "r", 0, "s1")
        assert info.value.details["line"] == 4

    def test_rate_mismatch(self, tmp_path):
        path = write_csv(tmp_path / "r.csv", [f"{i * 0.01:.3f},0,0,9.81" for i in range(10)])
        with pytest.raises(DataValidationError) as info:
            read_recording(path, "r", 0, "s1", sample_rate=200.0)
        assert info.value.details["rate"] == pytest.approx(100.0)

    def test_resampling(self, tmp_path):
        path = write_csv(tmp_path / "r.csv", [f"{i * 0.01:.3f},{i},0,9.81" for i in range(11)])
        rec = read_recording(path, "r", 0, "s1", sample_rate=200.0, resample=True)
        assert rec.sample_rate == 200.0
        npt.assert_allclose(np.diff(rec.timestamps), 0.005)
        npt.assert_allclose(rec.values[0, :3], [0.0, 0.5, 1.0])

    def test_load_sorted_by_recording_id(self, tmp_path, vocabulary):
        for name in ("leg/b", "bag/a"):
            write_recording_csv(tmp_path / f"{name}.csv", np.arange(5) / 200.0, np.zeros((3, 5)))
        (tmp_path / "manifest.csv").write_text("file,label,subject\nleg/b.csv,leg,s1\nbag/a.csv,bag,s2\n")
        recordings = load_recordings(tmp_path, tmp_path / "manifest.csv", vocabulary, workers=2)
        assert [r.recording_id for r in recordings] == ["bag/a", "leg/b"]
        assert [r.label for r in recordings] == [0, 3]


class TestToyData:
    def test_dominant_frequency_lies_in_class_band(self):
        for window in toy_dataset(seed=2, per_class=3, length=256):
            lo, hi = band_edges(window.label)
            for channel in window.values:
                spectrum = np.abs(np.fft.rfft(channel - channel.mean()))
                assert lo <= int(np.argmax(spectrum)) <= hi

    def test_gravity_offset_on_z(self, toy_windows):
        z = np.concatenate([w.values[2] for w in toy_windows])
        assert z.mean() == pytest.approx(9.81, abs=0.1)

    def test_deterministic(self):
        a, b = toy_dataset(5, 2, 64), toy_dataset(5, 2, 64)
        for wa, wb in zip(a, b):
            npt.assert_array_equal(wa.values, wb.values)
        assert a[0].recording_id == "toy-bag-00000"

    def test_bands_are_disjoint(self):
        edges = sorted(TOY_BANDS)
        assert all(edges[i][1] < edges[i + 1][0] for i in range(len(edges) - 1))

    def test_per_class_must_be_positive(self):
        with pytest.raises(DataValidationError):
            toy_dataset(0, 0, 64)

    def test_recordings_survive_csv(self, tmp_path, vocabulary):
        recordings = toy_recordings(1, 3, length=64, drop=16)
        assert all(len(r) == 80 for r in recordings)
        manifest = write_toy_recordings(tmp_path, recordings, vocabulary)
        assert list(pd.read_csv(manifest).columns) == ["file", "label", "subject"]
        loaded = load_recordings(tmp_path, manifest, vocabulary)
        by_id = {r.recording_id: r for r in recordings}
        for rec in loaded:
            npt.assert_allclose(rec.values, by_id[rec.recording_id].values, rtol=1e-8)
            assert rec.label == by_id[rec.recording_id].label
