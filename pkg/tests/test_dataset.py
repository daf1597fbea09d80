import itertools
import json
import warnings

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semgaudit import DEMOGRAPHICS
from semgaudit.dataset import (
    EXCLUSION_COLUMNS,
    AnalysisWindow,
    DemographicTable,
    TrialTensor,
    apply_exclusion,
    extract_window,
    load_dataset,
    write_dataset,
)
from semgaudit.errors import DataError, SchemaError, ShapeMismatchError


def make_table(n=3, seed=0):
    rng = np.random.default_rng(seed)
    frame = pd.DataFrame(
        {c: rng.uniform(1, 50, n) for c in DEMOGRAPHICS},
        index=[f"P{i}" for i in range(n)],
    )
    frame["Sex"] = np.arange(n) % 2
    return DemographicTable(frame)


def make_tensor(sid="P0", trials=4, channels=3, samples=50, seed=0, fs=2000.0):
    rng = np.random.default_rng(seed)
    data = rng.normal(size=(trials, channels, samples)).astype(np.float32)
    return TrialTensor(sid, data, np.arange(trials) % 10, fs)


class TestWindow:
    def test_reference_length(self):
        w = AnalysisWindow.centered(4000)
        assert (w.start_index, w.end_index) == (600, 3400)
        assert extract_window(np.arange(4000)).shape == (2800,)

    def test_2148_hz_length(self):
        w = AnalysisWindow.centered(4296)
        assert (w.start_index, w.end_index) == (644, 3652)
        assert len(w) == 3008

    def test_identity_full_fraction(self):
        x = np.arange(10.0)
        np.testing.assert_array_equal(extract_window(x, fraction=1.0), x)

    @given(st.integers(10, 6000), st.floats(0.05, 1.0))
    @settings(max_examples=200, deadline=None)
    def test_centered_and_within_one_sample(self, n, f):
        w = AnalysisWindow.centered(n, f)
        assert 0 <= w.start_index < w.end_index <= n
        assert abs((w.end_index - w.start_index) - f * n) <= 1.0 + 1e-9
        assert abs(w.start_index - (n - w.end_index)) <= 1

    @given(st.integers(10, 3000), st.floats(0.05, 0.99))
    @settings(max_examples=100, deadline=None)
    def test_idempotent_at_one_and_shrinking_otherwise(self, n, f):
        x = np.arange(n, dtype=float)
        once = extract_window(x, fraction=1.0)
        np.testing.assert_array_equal(extract_window(once, fraction=1.0), once)
        if len(AnalysisWindow.centered(n, f)) < n:
            assert len(extract_window(x, fraction=f)) < n

    def test_out_of_bounds(self):
        with pytest.raises(ValueError):
            extract_window(np.zeros(100), AnalysisWindow(50, 120))
        with pytest.raises(ValueError):
            extract_window(np.zeros(5))


class TestExclusion:
    @pytest.mark.parametrize("pattern", list(itertools.product([False, True], repeat=4)))
    def test_all_sixteen_patterns(self, pattern):
        table = make_table(2)
        frame = table.frame.copy()
        for col, miss in zip(EXCLUSION_COLUMNS, pattern):
            if miss:
                frame.loc["P0", col] = np.nan
        kept, removed = apply_exclusion(DemographicTable(frame))
        if all(pattern):
            assert removed == ["P0"] and kept.subjects == ["P1"]
        else:
            assert removed == [] and kept.subjects == ["P0", "P1"]

    def test_height_only_retained(self):
        frame = make_table(2).frame
        frame.loc["P1", "Height"] = np.nan
        kept, removed = apply_exclusion(DemographicTable(frame))
        assert removed == [] and len(kept) == 2

    def test_no_missingness_identity(self):
        table = make_table(4)
        kept, removed = apply_exclusion(table)
        pd.testing.assert_frame_equal(kept.frame, table.frame)
        assert removed == []

    def test_empty_result_warns(self):
        frame = make_table(1).frame
        frame.loc[:, list(EXCLUSION_COLUMNS)] = np.nan
        with pytest.warns(RuntimeWarning):
            kept, removed = apply_exclusion(DemographicTable(frame))
        assert len(kept) == 0 and removed == ["P0"]


class TestTypes:
    def test_invalid_sex(self):
        frame = make_table(2).frame
        frame.loc["P0", "Sex"] = 2
        with pytest.raises(SchemaError) as err:
            DemographicTable(frame)
        assert err.value.field == "Sex" and err.value.subject == "P0"

    def test_negative_age_and_fat(self):
        frame = make_table(2).frame
        frame.loc["P1", "Subcutaneous_Fat_2"] = -1
        with pytest.raises(SchemaError):
            DemographicTable(frame)

    def test_column_set_enforced(self):
        frame = make_table(2).frame.drop(columns="Weight")
        with pytest.raises(SchemaError):
            DemographicTable(frame)

    def test_labels_outside_gesture_set(self):
        with pytest.raises(SchemaError):
            TrialTensor("X", np.zeros((2, 1, 10)), np.array([0, 11]), 2000.0)

    def test_non_finite_rejected(self):
        data = np.zeros((1, 1, 10))
        data[0, 0, 3] = np.nan
        with pytest.raises(DataError):
            TrialTensor("X", data, np.array([0]), 2000.0)


class TestPortableFormat:
    def test_round_trip_bit_identical(self, tmp_path):
        tensors = [make_tensor(f"P{i}", seed=i) for i in range(3)]
        table = make_table(3)
        table.frame.loc["P2", "Hair_Density_1"] = np.nan
        write_dataset(tmp_path, tensors, table)
        loaded, demo = load_dataset(tmp_path / "manifest.json")
        for a, b in zip(tensors, loaded):
            assert a.data.tobytes() == b.data.tobytes()
            np.testing.assert_array_equal(a.labels, b.labels)
            assert a.sampling_rate_hz == b.sampling_rate_hz
        # missing stays missing, never zero-filled
        assert np.isnan(demo.frame.loc["P2", "Hair_Density_1"])
        assert demo.missing_mask.to_numpy().sum() == 1
        np.testing.assert_array_equal(demo.frame.fillna(-1).to_numpy(), table.frame.fillna(-1).to_numpy())

    def test_single_zero_trial(self, tmp_path):
        t = TrialTensor("Z", np.zeros((1, 12, 20), dtype=np.float32), np.array([0]), 2000.0)
        write_dataset(tmp_path, [t], DemographicTable(make_table(1).frame.rename(index={"P0": "Z"})))
        loaded, _ = load_dataset(tmp_path)
        assert loaded[0].data.shape == (1, 12, 20) and not loaded[0].data.any()

    def test_81_subjects_of_360_trials(self, tmp_path):
        ids = [f"S{i:02d}" for i in range(81)]
        table = DemographicTable(make_table(81).frame.set_axis(ids))
        labels = np.repeat(np.arange(10), 36)
        tensors = [TrialTensor(s, np.zeros((360, 12, 8), np.float32), labels, 2000.0) for s in ids]
        write_dataset(tmp_path, tensors, table)
        loaded, demo = load_dataset(tmp_path)
        assert len(loaded) == 81 and all(t.data.shape == (360, 12, 8) for t in loaded)
        assert demo.subjects == ids

    def test_byte_count_mismatch(self, tmp_path):
        write_dataset(tmp_path, [make_tensor("P0")], make_table(1))
        with open(tmp_path / "P0" / "emg.bin", "ab") as fh:
            fh.write(b"\0\0\0\0")
        with pytest.raises(ShapeMismatchError):
            load_dataset(tmp_path)

    def test_schema_error_names_field_and_subject(self, tmp_path):
        write_dataset(tmp_path, [make_tensor("P0")], make_table(1))
        m = json.loads((tmp_path / "manifest.json").read_text())
        del m["subjects"][0]["n_channels"]
        (tmp_path / "manifest.json").write_text(json.dumps(m))
        with pytest.raises(SchemaError) as err:
            load_dataset(tmp_path)
        assert err.value.field == "n_channels" and err.value.subject == "P0"
        assert "n_channels" in str(err.value) and "P0" in str(err.value)

    def test_unknown_rate_warns_only(self, tmp_path):
        write_dataset(tmp_path, [make_tensor("P0", fs=1000.0)], make_table(1))
        with pytest.warns(UserWarning, match="sampling rate"):
            loaded, _ = load_dataset(tmp_path)
        assert loaded[0].sampling_rate_hz == 1000.0

    def test_known_rates_silent(self, tmp_path):
        write_dataset(tmp_path, [make_tensor("P0", fs=2148.0)], make_table(1))
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            load_dataset(tmp_path)

    def test_missing_manifest_and_demographics(self, tmp_path):
        with pytest.raises(DataError):
            load_dataset(tmp_path / "nope.json")
        write_dataset(tmp_path, [make_tensor("P0")], make_table(1))
        (tmp_path / "demographics.csv").unlink()
        with pytest.raises(DataError):
            load_dataset(tmp_path)

    def test_wrong_format_version(self, tmp_path):
        write_dataset(tmp_path, [make_tensor("P0")], make_table(1))
        m = json.loads((tmp_path / "manifest.json").read_text())
        m["format_version"] = 2
        (tmp_path / "manifest.json").write_text(json.dumps(m))
        with pytest.raises(SchemaError):
            load_dataset(tmp_path)
