import json

import numpy as np
import pandas as pd
import pytest

from semgaudit import DEMOGRAPHICS
from semgaudit.errors import ConfigError
from semgaudit.features import FEATURE_NAMES, compute_fd
from semgaudit.synth import (
    Effect,
    SynthSpec,
    generate_population,
    ground_truth,
    planted_features,
    sample_demographics,
    score_audit,
    write_ground_truth,
)
from semgaudit.synth.generator import AMPLITUDE_FEATURES, high_frequency_nodes

TINY = dict(n_subjects=6, n_gestures=2, n_channels=3, n_trials_per=2, trial_length=600)


def test_same_seed_byte_identical_and_jobs_invariant():
    spec = SynthSpec(**TINY, seed=4, effects=(Effect("Sex", "amplitude-scale", 0.4),))
    a, ta, _ = generate_population(spec)
    b, tb, _ = generate_population(spec, jobs=2)
    for x, y in zip(a, b):
        assert x.data.tobytes() == y.data.tobytes()
        assert x.labels.tolist() == y.labels.tolist()
    pd.testing.assert_frame_equal(ta.frame, tb.frame)
    c, _, _ = generate_population(SynthSpec(**TINY, seed=5))
    assert a[0].data.tobytes() != c[0].data.tobytes()


def test_shapes_and_labels():
    tensors, table, _ = generate_population(SynthSpec(**TINY))
    assert len(tensors) == 6 and len(table) == 6
    for t in tensors:
        assert t.data.shape == (4, 3, 600) and t.data.dtype == np.float32
        assert sorted(t.labels.tolist()) == [0, 0, 1, 1]
        assert t.sampling_rate_hz == 2000.0


@pytest.mark.parametrize(
    "bad",
    [dict(n_subjects=0), dict(n_gestures=11), dict(band=(500.0, 100.0)), dict(sd_cell=-1.0), dict(trial_length=0)],
)
def test_spec_validation(bad):
    with pytest.raises(ConfigError):
        SynthSpec(**{**TINY, **bad})


def test_effect_validation():
    with pytest.raises(ConfigError):
        Effect("Shoe_Size", "amplitude-scale", 1.0)
    with pytest.raises(ConfigError):
        Effect("Sex", "tremor", 1.0)
    with pytest.raises(ConfigError):
        Effect("Sex", "amplitude-scale", float("inf"))


def test_spec_dict_round_trip():
    spec = SynthSpec(**TINY, effects=(Effect("Age", "band-shift", 0.1),), missing=(("Height",),))
    again = SynthSpec.from_dict(json.loads(json.dumps(spec.to_dict())))
    assert again == spec


def test_demographics_within_ranges():
    spec = SynthSpec(n_subjects=40, seed=2)
    frame, std = sample_demographics(spec)
    assert set(frame["Sex"]) == {0.0, 1.0}
    for col, (lo, hi) in spec.ranges.items():
        assert frame[col].between(lo, hi).all()
    np.testing.assert_allclose(std.drop(columns="Sex").mean(), 0, atol=1e-12)


def test_missing_patterns_from_the_end():
    spec = SynthSpec(**TINY, missing=(("Height", "Weight"), ("Hair_Density_1",)))
    _, table, truth = generate_population(spec)
    mask = table.missing_mask
    assert mask.loc["S006", ["Height", "Weight"]].all() and mask.loc["S005", "Hair_Density_1"]
    assert mask.to_numpy().sum() == 3
    # ground truth keeps the complete values
    assert not np.isnan(truth["true_demographics"]["S006"]["Height"])


def test_planted_features_and_truth():
    spec = SynthSpec(effects=(Effect("Sex", "amplitude-scale", 0.4), Effect("Subcutaneous_Fat_1", "spectral-lowpass-cutoff", 0.2)))
    assert high_frequency_nodes(spec) == [5, 6, 7]
    assert planted_features(spec.effects[0], spec) == list(AMPLITUDE_FEATURES)
    fat = planted_features(spec.effects[1], spec)
    assert {"MNF", "MDF", "PKF", "WPT_RE_5", "WPT_RE_7"} <= set(fat)
    assert set(fat) <= set(FEATURE_NAMES)
    truth = ground_truth(spec)
    assert truth["effect_demographics"] == ["Sex", "Subcutaneous_Fat_1"]
    assert len(truth["null_demographics"]) == 10
    assert len(truth["planted_pairs"]) == len(AMPLITUDE_FEATURES) + len(fat)


def test_ground_truth_file(tmp_path):
    _, _, truth = generate_population(SynthSpec(**TINY))
    write_ground_truth(truth, tmp_path / "gt.json")
    assert json.loads((tmp_path / "gt.json").read_text())["spec"]["n_subjects"] == 6


def _subject_rms(tensors):
    return np.array([np.sqrt(np.mean(t.data.astype(float) ** 2)) for t in tensors])


def test_amplitude_mechanism():
    s = np.log(1.5)
    spec = SynthSpec(
        n_subjects=20, n_gestures=2, n_channels=2, trial_length=600, sd_subject=0, sd_gesture=0, sd_channel=0,
        sd_cell=0, effects=(Effect("Sex", "amplitude-scale", s),), seed=1,
    )
    tensors, table, _ = generate_population(spec)
    rms = _subject_rms(tensors)
    sex = table.frame["Sex"].to_numpy()
    ratio = np.exp(np.log(rms[sex == 1]).mean() - np.log(rms[sex == 0]).mean())
    assert ratio == pytest.approx(1.5, rel=0.03)


@pytest.mark.parametrize("mech,sign", [("spectral-lowpass-cutoff", -1), ("band-shift", 1)])
def test_spectral_mechanisms_move_mean_frequency(mech, sign):
    spec = SynthSpec(
        n_subjects=16, n_gestures=1, n_channels=2, trial_length=1400,
        effects=(Effect("Subcutaneous_Fat_1", mech, 0.4),), seed=3,
    )
    tensors, table, _ = generate_population(spec)
    mnf = [np.mean([compute_fd(w, 2000.0)["MNF"] for w in t.data.reshape(-1, 1400)]) for t in tensors]
    r = np.corrcoef(table.frame["Subcutaneous_Fat_1"], mnf)[0, 1]
    assert sign * r > 0.8


def test_score_audit_ignores_collateral_pairs():
    truth = {
        "planted_pairs": [{"feature": "RMS", "demographic": "Sex"}, {"feature": "MAV", "demographic": "Sex"}],
        "null_demographics": [d for d in DEMOGRAPHICS if d != "Sex"],
    }
    rows = [(f, d) for f in ("RMS", "MAV", "MNF") for d in DEMOGRAPHICS]
    flags = pd.DataFrame(rows, columns=["feature", "demographic"])
    flags["significant"] = False
    flags.loc[(flags.feature == "RMS") & (flags.demographic == "Sex"), "significant"] = True
    flags.loc[(flags.feature == "MNF") & (flags.demographic == "Sex"), "significant"] = True  # collateral
    flags.loc[(flags.feature == "MNF") & (flags.demographic == "Age"), "significant"] = True
    s = score_audit(flags, truth)
    assert s["sensitivity"] == 0.5
    assert s["false_flag_rate"] == pytest.approx(1 / 33)
    assert s["n_significant"] == 3


def test_null_raw_p_calibration(null_audits):
    pooled = pd.concat([a["flagged"] for a in null_audits])
    rate = (pooled["p"] < 0.05).groupby(pooled["demographic"]).mean()
    assert len(rate) == 12
    off = rate[(rate < 0.03) | (rate > 0.07)]
    assert off.empty, off.to_dict()
