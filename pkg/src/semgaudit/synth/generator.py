"""Synthetic sEMG populations with planted demographic effects.

Each trial is Gaussian noise shaped by a band-pass filter (20-450 Hz by
default) and an optional single-pole low-pass, then scaled so that its log
RMS equals a base level plus subject, gesture, channel and cell offsets plus
any planted amplitude effects. Shaping filters are normalized to unit output
power, so spectral mechanisms move spectral shape without touching amplitude.
"""

import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd
from scipy import signal

from .. import DEMOGRAPHICS
from ..dataset import DemographicTable, TrialTensor
from ..errors import ConfigError
from ..features.catalog import FEATURE_NAMES

log = logging.getLogger(__name__)

MECHANISMS = ("amplitude-scale", "spectral-lowpass-cutoff", "band-shift")

# (low, high) sampler bounds; Sex is Bernoulli(0.5)
DEFAULT_RANGES = {
    "Age": (18.0, 70.0),
    "Height": (150.0, 195.0),
    "Weight": (45.0, 110.0),
    "Skin_Hydration": (20.0, 90.0),
    "Skin_Elasticity": (0.3, 1.2),
    "Subcutaneous_Fat_1": (2.0, 20.0),
    "Subcutaneous_Fat_2": (2.0, 20.0),
    "Subcutaneous_Fat_3": (2.0, 20.0),
    "Subcutaneous_Fat_4": (2.0, 20.0),
    "Hair_Density_1": (0.0, 40.0),
    "Hair_Density_2": (0.0, 40.0),
}

AMPLITUDE_FEATURES = (
    "MAV", "STD", "Var", "RMS", "IAV", "ER", "MPV", "Perc",
    "WT_STD", "WT_Var", "WT_Energy", "WT_MAV", "WT_MaxAV",
)
SPECTRAL_SHAPE_FEATURES = ("MNF", "MDF", "PKF", "FR", "HMob", "ZC")


def high_frequency_nodes(spec):
    """WPT nodes lying above the nominal low-pass cutoff and inside the pass band."""
    width = spec.fs / 32.0
    return [
        k for k in range(16) if k * width >= 1.2 * spec.lowpass_hz and (k + 1) * width <= spec.band[1] + width
    ]


@dataclass(frozen=True)
class Effect:
    """One planted effect: ``demographic`` drives ``mechanism`` with ``strength``.

    Strength is per unit of the demographic after standardization (Sex as
    0/1): a log-gain for amplitude-scale, a log-factor lowering the low-pass
    cutoff for spectral-lowpass-cutoff, and a log-factor on both band-pass
    edges for band-shift.
    """

    demographic: str
    mechanism: str
    strength: float

    def __post_init__(self):
        if self.demographic not in DEMOGRAPHICS:
            raise ConfigError(f"unknown demographic {self.demographic!r}")
        if self.mechanism not in MECHANISMS:
            raise ConfigError(f"unknown mechanism {self.mechanism!r}; expected one of {MECHANISMS}")
        if not np.isfinite(self.strength):
            raise ConfigError("effect strength must be finite")


@dataclass(frozen=True)
class SynthSpec:
    n_subjects: int = 24
    n_gestures: int = 10
    n_channels: int = 12
    n_trials_per: int = 2
    fs: float = 2000.0
    trial_length: int = 1400
    band: tuple = (20.0, 450.0)
    lowpass_hz: float = 250.0
    base_rms_mv: float = 0.1
    channel_coupling: float = 0.2
    # sd of log-amplitude offsets
    sd_subject: float = 0.1
    sd_gesture: float = 0.2
    sd_channel: float = 0.15
    sd_cell: float = 0.05
    effects: tuple = ()
    ranges: dict = field(default_factory=lambda: dict(DEFAULT_RANGES))
    # column lists; row i of the population gets pattern i blanked (from the end)
    missing: tuple = ()
    seed: int = 0

    def __post_init__(self):
        for name in ("n_subjects", "n_gestures", "n_channels", "n_trials_per", "trial_length"):
            if int(getattr(self, name)) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.n_gestures > 10:
            raise ConfigError("at most 10 gestures are supported")
        if self.fs <= 0 or not 0 < self.band[0] < self.band[1] < self.fs / 2:
            raise ConfigError("band edges must satisfy 0 < low < high < fs/2")
        if min(self.sd_subject, self.sd_gesture, self.sd_channel, self.sd_cell) < 0:
            raise ConfigError("random-offset sds must be nonnegative")
        if len(self.missing) > self.n_subjects:
            raise ConfigError("more missingness patterns than subjects")
        effects = tuple(e if isinstance(e, Effect) else Effect(**e) for e in self.effects)
        object.__setattr__(self, "effects", effects)
        object.__setattr__(self, "band", tuple(float(b) for b in self.band))
        object.__setattr__(self, "missing", tuple(tuple(m) for m in self.missing))

    def to_dict(self):
        d = asdict(self)
        d["effects"] = [asdict(e) for e in self.effects]
        d["band"] = list(self.band)
        d["missing"] = [list(m) for m in self.missing]
        d["ranges"] = {k: list(v) for k, v in self.ranges.items()}
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "band" in d:
            d["band"] = tuple(d["band"])
        if "ranges" in d:
            d["ranges"] = {k: tuple(v) for k, v in d["ranges"].items()}
        d["effects"] = tuple(Effect(**e) for e in d.get("effects", ()))
        d["missing"] = tuple(tuple(m) for m in d.get("missing", ()))
        return cls(**d)


def planted_features(effect, spec):
    """Features an effect is designed to move (the recovery target)."""
    if effect.mechanism == "amplitude-scale":
        return list(AMPLITUDE_FEATURES)
    return list(SPECTRAL_SHAPE_FEATURES) + [f"WPT_RE_{k}" for k in high_frequency_nodes(spec)]


def _rng(seed, key):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(key,)))


def sample_demographics(spec):
    """True (complete) demographics, standardized copies, and subject ids."""
    rng = _rng(spec.seed, 0)
    n = spec.n_subjects
    ids = [f"S{i + 1:03d}" for i in range(n)]
    data = {}
    for col in DEMOGRAPHICS:
        if col == "Sex":
            # balanced in expectation; force both levels when n >= 2
            sex = rng.integers(0, 2, size=n).astype(float)
            if n >= 2 and sex.min() == sex.max():
                sex[0] = 1.0 - sex[0]
            data[col] = sex
        else:
            lo, hi = spec.ranges[col]
            data[col] = np.round(rng.uniform(lo, hi, size=n), 2)
    frame = pd.DataFrame(data, index=pd.Index(ids, name="subject_id"))[list(DEMOGRAPHICS)]
    std = frame.copy()
    for col in DEMOGRAPHICS:
        if col != "Sex":
            v = frame[col].to_numpy()
            s = v.std()
            std[col] = (v - v.mean()) / s if s > 0 else 0.0
    return frame, std


def _shaping_filter(band, lowpass, fs):
    sos = signal.butter(2, band, btype="bandpass", fs=fs, output="sos")
    if lowpass is not None and lowpass < fs / 2:
        sos = np.vstack([sos, signal.butter(1, lowpass, btype="lowpass", fs=fs, output="sos")])
    return sos


def _shaped_noise(rng, shape, sos, fs):
    n = shape[-1]
    pad = int(0.1 * fs)
    white = rng.standard_normal(shape[:-1] + (n + pad,))
    out = signal.sosfilt(sos, white, axis=-1)[..., pad:]
    out -= out.mean(axis=-1, keepdims=True)
    return out / np.sqrt(np.mean(out**2, axis=-1, keepdims=True))


def _subject_tensor(args):
    spec, index, sid, dem_std, gesture_off, channel_off = args
    rng = _rng(spec.seed, index + 1)
    log_amp = np.log(spec.base_rms_mv) + spec.sd_subject * rng.standard_normal()
    band = np.array(spec.band)
    lowpass = spec.lowpass_hz
    for e in spec.effects:
        d = dem_std[e.demographic]
        if e.mechanism == "amplitude-scale":
            log_amp += e.strength * d
        elif e.mechanism == "spectral-lowpass-cutoff":
            lowpass = lowpass * np.exp(-e.strength * d)
        else:
            band = band * np.exp(e.strength * d)
    band = np.clip(band, 1.0, 0.95 * spec.fs / 2)
    sos = _shaping_filter(band, lowpass, spec.fs)

    g, c, k, n = spec.n_gestures, spec.n_channels, spec.n_trials_per, spec.trial_length
    labels = np.repeat(np.arange(g), k)
    rng.shuffle(labels)
    cell = spec.sd_cell * rng.standard_normal((g, c))
    noise = _shaped_noise(rng, (g * k, c, n), sos, spec.fs)
    if spec.channel_coupling > 0 and c > 1:
        shared = _shaped_noise(rng, (g * k, 1, n), sos, spec.fs)
        a = spec.channel_coupling
        noise = np.sqrt(1 - a**2) * noise + a * shared
    amp = np.exp(log_amp + gesture_off[labels][:, None] + channel_off[None, :] + cell[labels])
    data = (noise * amp[..., None]).astype(np.float32)
    return TrialTensor(sid, data, labels.astype(np.int64), float(spec.fs))


def generate_population(spec, jobs=1):
    """Build tensors, demographics (with any configured missingness) and ground truth."""
    true_demo, dem_std = sample_demographics(spec)
    pop = _rng(spec.seed, 0x5EED)
    gesture_off = spec.sd_gesture * pop.standard_normal(spec.n_gestures)
    channel_off = spec.sd_channel * pop.standard_normal(spec.n_channels)
    ids = list(true_demo.index)
    tasks = [
        (spec, i, sid, dem_std.loc[sid].to_dict(), gesture_off, channel_off) for i, sid in enumerate(ids)
    ]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as ex:
            tensors = list(ex.map(_subject_tensor, tasks))
    else:
        tensors = [_subject_tensor(t) for t in tasks]

    observed = true_demo.copy()
    for i, cols in enumerate(spec.missing):
        observed.loc[ids[-(i + 1)], list(cols)] = np.nan
    table = DemographicTable(observed, {"0": "female", "1": "male"})
    return tensors, table, ground_truth(spec, true_demo)


def ground_truth(spec, true_demo=None):
    planted = []
    for e in spec.effects:
        if e.strength == 0:
            continue
        for feat in planted_features(e, spec):
            planted.append({"feature": feat, "demographic": e.demographic, "mechanism": e.mechanism})
    effect_dems = sorted({e.demographic for e in spec.effects if e.strength != 0})
    out = {
        "spec": spec.to_dict(),
        "planted_pairs": planted,
        "effect_demographics": effect_dems,
        "null_demographics": [d for d in DEMOGRAPHICS if d not in effect_dems],
        "n_features": len(FEATURE_NAMES),
    }
    if true_demo is not None:
        out["true_demographics"] = {
            sid: {k: float(v) for k, v in row.items()} for sid, row in true_demo.iterrows()
        }
    return out


def write_ground_truth(truth, path):
    with open(path, "w") as fh:
        json.dump(truth, fh, indent=2, sort_keys=True)
        fh.write("\n")


def score_audit(flags, truth):
    """Sensitivity on planted pairs and false-flag rate on null-demographic pairs.

    ``flags`` is a frame with feature, demographic, significant columns. Pairs
    whose demographic carries a planted effect but whose feature is not in the
    planted list are collateral (the mechanism may move them) and are scored
    on neither side.
    """
    sig = {(r.feature, r.demographic) for r in flags.itertuples() if r.significant}
    planted = {(p["feature"], p["demographic"]) for p in truth["planted_pairs"]}
    null_dems = set(truth["null_demographics"])
    null_pairs = [(r.feature, r.demographic) for r in flags.itertuples() if r.demographic in null_dems]
    sens = len(planted & sig) / len(planted) if planted else float("nan")
    false_rate = sum(p in sig for p in null_pairs) / len(null_pairs) if null_pairs else 0.0
    return {"sensitivity": sens, "false_flag_rate": false_rate, "n_significant": len(sig)}
