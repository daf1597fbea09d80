"""Portable on-disk dataset: trial tensors, demographics, exclusion and windowing.

Layout::

    <root>/manifest.json
    <root>/demographics.csv
    <root>/<subject>/emg.bin      little-endian float32, trials x channels x samples
    <root>/<subject>/labels.csv   trial_index,gesture_id
"""

import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from . import DEMOGRAPHICS
from .errors import DataError, SchemaError, ShapeMismatchError

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
KNOWN_RATES = (2000.0, 2148.0)
DEFAULT_GESTURES = tuple(range(10))
# rows missing all of these are dropped before imputation
EXCLUSION_COLUMNS = ("Height", "Weight", "Skin_Elasticity", "Skin_Hydration")
NONNEGATIVE = (
    "Height",
    "Weight",
    "Subcutaneous_Fat_1",
    "Subcutaneous_Fat_2",
    "Subcutaneous_Fat_3",
    "Subcutaneous_Fat_4",
    "Hair_Density_1",
    "Hair_Density_2",
)


@dataclass
class TrialTensor:
    subject_id: str
    data: np.ndarray  # (n_trials, n_channels, n_samples)
    labels: np.ndarray
    sampling_rate_hz: float
    gestures: tuple = DEFAULT_GESTURES

    def __post_init__(self):
        self.data = np.asarray(self.data)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.data.ndim != 3:
            raise ShapeMismatchError(
                f"subject {self.subject_id}: expected 3-D data, got shape {self.data.shape}"
            )
        n_trials = self.data.shape[0]
        if n_trials == 0 or self.data.shape[1] == 0 or self.data.shape[2] == 0:
            raise ShapeMismatchError(f"subject {self.subject_id}: empty tensor {self.data.shape}")
        if self.labels.shape != (n_trials,):
            raise ShapeMismatchError(
                f"subject {self.subject_id}: {self.labels.size} labels for {n_trials} trials"
            )
        bad = ~np.isin(self.labels, self.gestures)
        if bad.any():
            raise SchemaError(
                f"gesture id {int(self.labels[bad][0])} not in declared set {list(self.gestures)}",
                field="labels",
                subject=self.subject_id,
            )
        if not np.isfinite(self.data).all():
            raise DataError(f"subject {self.subject_id}: non-finite samples")
        if not self.sampling_rate_hz > 0:
            raise SchemaError("sampling rate must be positive", "sampling_rate_hz", self.subject_id)

    @property
    def n_trials(self):
        return self.data.shape[0]

    @property
    def n_channels(self):
        return self.data.shape[1]

    @property
    def n_samples(self):
        return self.data.shape[2]


@dataclass
class DemographicTable:
    """Per-subject demographics. Missing cells are NaN in ``frame``."""

    frame: pd.DataFrame
    sex_encoding: dict = field(default_factory=lambda: {"0": "female", "1": "male"})

    def __post_init__(self):
        frame = self.frame.copy()
        missing = [c for c in DEMOGRAPHICS if c not in frame.columns]
        if missing:
            raise SchemaError(f"missing demographic columns {missing}", field=missing[0])
        extra = [c for c in frame.columns if c not in DEMOGRAPHICS]
        if extra:
            raise SchemaError(f"unexpected demographic columns {extra}", field=extra[0])
        frame = frame.loc[:, list(DEMOGRAPHICS)].astype(float)
        frame.index = frame.index.astype(str)
        frame.index.name = "subject_id"
        if frame.index.has_duplicates:
            dup = frame.index[frame.index.duplicated()][0]
            raise SchemaError("duplicate subject row", field="subject_id", subject=dup)
        for sid, row in frame.iterrows():
            age = row["Age"]
            if not np.isnan(age) and age <= 0:
                raise SchemaError(f"Age must be positive, got {age}", "Age", sid)
            sex = row["Sex"]
            if not np.isnan(sex) and sex not in (0.0, 1.0):
                raise SchemaError(f"Sex must be 0 or 1, got {sex}", "Sex", sid)
            for col in NONNEGATIVE:
                v = row[col]
                if not np.isnan(v) and v < 0:
                    raise SchemaError(f"{col} must be nonnegative, got {v}", col, sid)
            if np.isinf(row.to_numpy()).any():
                raise SchemaError("infinite value", subject=sid)
        self.frame = frame

    @property
    def missing_mask(self):
        return self.frame.isna()

    @property
    def subjects(self):
        return list(self.frame.index)

    def __len__(self):
        return len(self.frame)

    def subset(self, subject_ids):
        return DemographicTable(self.frame.loc[list(subject_ids)], dict(self.sex_encoding))


@dataclass(frozen=True)
class AnalysisWindow:
    start_index: int
    end_index: int
    fraction: float = 0.70

    @classmethod
    def centered(cls, n_samples, fraction=0.70):
        """Centered window: start = floor((1-f)/2 n), end = start + ceil(f n)."""
        if not 0 < fraction <= 1:
            raise ValueError(f"fraction must be in (0, 1], got {fraction}")
        # rounding guards against 0.15*4000 = 599.999...
        start = math.floor(round((1.0 - fraction) / 2.0 * n_samples, 9))
        length = math.ceil(round(fraction * n_samples, 9))
        return cls(start, min(start + length, n_samples), fraction)

    def __len__(self):
        return self.end_index - self.start_index


def extract_window(trial, window=None, fraction=0.70):
    """Return the contiguous analysis slice of a trial (last axis)."""
    trial = np.asarray(trial)
    n = trial.shape[-1]
    if n < 10:
        raise ValueError(f"trial must have at least 10 samples, got {n}")
    if window is None:
        window = AnalysisWindow.centered(n, fraction)
    if not 0 <= window.start_index < window.end_index <= n:
        raise ValueError(
            f"window [{window.start_index}, {window.end_index}) exceeds trial of {n} samples"
        )
    return trial[..., window.start_index : window.end_index]


def apply_exclusion(table, columns=EXCLUSION_COLUMNS):
    """Drop subjects missing every one of ``columns``.

    Returns ``(table, removed_ids)``.
    """
    mask = table.missing_mask.loc[:, list(columns)].all(axis=1)
    removed = list(table.frame.index[mask])
    kept = table.frame.loc[~mask]
    if removed:
        log.info("excluded %d subjects missing all of %s", len(removed), ", ".join(columns))
    if kept.empty:
        warnings.warn("exclusion removed every subject", RuntimeWarning, stacklevel=2)
    return DemographicTable(kept, dict(table.sex_encoding)), removed


# ---------------------------------------------------------------------------
# I/O


def read_demographics(path, sex_encoding=None):
    path = Path(path)
    if not path.exists():
        raise DataError(f"demographics file not found: {path}")
    frame = pd.read_csv(path, dtype={"subject_id": str}, comment="#", float_precision="round_trip")
    if "subject_id" not in frame.columns:
        raise SchemaError("demographics.csv needs a subject_id column", field="subject_id")
    frame = frame.set_index("subject_id")
    kwargs = {} if sex_encoding is None else {"sex_encoding": dict(sex_encoding)}
    return DemographicTable(frame, **kwargs)


def write_demographics(table, path):
    frame = table.frame.copy()
    frame.index.name = "subject_id"
    frame.to_csv(path, float_format="%.17g", na_rep="")


def _require(obj, key, kind, subject=None):
    if key not in obj:
        raise SchemaError("required field missing", field=key, subject=subject)
    value = obj[key]
    if kind is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif kind is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    else:
        ok = isinstance(value, kind)
    if not ok:
        raise SchemaError(f"expected {kind.__name__}, got {type(value).__name__}", key, subject)
    return value


def _read_labels(path, n_trials, subject):
    if not path.exists():
        raise SchemaError(f"labels file not found: {path}", field="labels", subject=subject)
    frame = pd.read_csv(path)
    if list(frame.columns) != ["trial_index", "gesture_id"]:
        raise SchemaError(
            f"labels.csv header must be trial_index,gesture_id, got {list(frame.columns)}",
            field="labels",
            subject=subject,
        )
    if len(frame) != n_trials or not (frame["trial_index"].to_numpy() == np.arange(n_trials)).all():
        raise ShapeMismatchError(
            f"subject {subject}: labels.csv must list trial_index 0..{n_trials - 1} in order"
        )
    return frame["gesture_id"].to_numpy(dtype=np.int64)


def load_dataset(manifest_path):
    """Load every subject listed in a manifest plus the demographics table."""
    manifest_path = Path(manifest_path)
    if manifest_path.is_dir():
        manifest_path = manifest_path / "manifest.json"
    if not manifest_path.exists():
        raise DataError(f"manifest not found: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"manifest is not valid JSON: {exc}") from exc
    if not isinstance(manifest, dict):
        raise SchemaError("manifest must be a JSON object")
    version = _require(manifest, "format_version", int)
    if version != FORMAT_VERSION:
        raise SchemaError(f"unsupported format_version {version}", field="format_version")
    root = manifest_path.parent
    gestures = tuple(manifest.get("gestures", DEFAULT_GESTURES))
    sex_encoding = manifest.get("sex_encoding", {"0": "female", "1": "male"})
    demo_path = root / _require(manifest, "demographics", str)
    subjects = _require(manifest, "subjects", list)

    tensors = []
    for entry in subjects:
        if not isinstance(entry, dict):
            raise SchemaError("subject entry must be an object", field="subjects")
        sid = _require(entry, "id", str)
        n_trials = _require(entry, "n_trials", int, sid)
        n_channels = _require(entry, "n_channels", int, sid)
        n_samples = _require(entry, "n_samples", int, sid)
        fs = float(_require(entry, "sampling_rate_hz", float, sid))
        for key, val in (("n_trials", n_trials), ("n_channels", n_channels), ("n_samples", n_samples)):
            if val <= 0:
                raise SchemaError("must be positive", field=key, subject=sid)
        if fs not in KNOWN_RATES:
            warnings.warn(f"subject {sid}: unusual sampling rate {fs} Hz", UserWarning, stacklevel=2)
        subdir = root / entry.get("path", sid)
        emg_path = subdir / "emg.bin"
        if not emg_path.exists():
            raise SchemaError(f"emg.bin not found: {emg_path}", field="emg", subject=sid)
        expected = n_trials * n_channels * n_samples * 4
        actual = emg_path.stat().st_size
        if actual != expected:
            raise ShapeMismatchError(
                f"subject {sid}: emg.bin holds {actual} bytes, "
                f"declared shape ({n_trials}, {n_channels}, {n_samples}) needs {expected}"
            )
        data = np.fromfile(emg_path, dtype="<f4").reshape(n_trials, n_channels, n_samples)
        labels = _read_labels(subdir / "labels.csv", n_trials, sid)
        tensors.append(TrialTensor(sid, data, labels, fs, gestures))

    table = read_demographics(demo_path, sex_encoding)
    ids = [t.subject_id for t in tensors]
    absent = [s for s in ids if s not in table.frame.index]
    if absent:
        raise SchemaError("subject has no demographics row", field="demographics", subject=absent[0])
    return tensors, table.subset(ids)


def write_dataset(root, tensors, table, sex_encoding=None):
    """Write tensors and demographics in the portable layout; returns the manifest path."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    gestures = tensors[0].gestures if tensors else DEFAULT_GESTURES
    entries = []
    for t in tensors:
        subdir = root / t.subject_id
        subdir.mkdir(exist_ok=True)
        np.ascontiguousarray(t.data, dtype="<f4").tofile(subdir / "emg.bin")
        pd.DataFrame({"trial_index": np.arange(t.n_trials), "gesture_id": t.labels}).to_csv(
            subdir / "labels.csv", index=False
        )
        entries.append(
            {
                "id": t.subject_id,
                "path": t.subject_id,
                "n_trials": int(t.n_trials),
                "n_channels": int(t.n_channels),
                "n_samples": int(t.n_samples),
                "sampling_rate_hz": float(t.sampling_rate_hz),
            }
        )
    write_demographics(table, root / "demographics.csv")
    manifest = {
        "format_version": FORMAT_VERSION,
        "demographics": "demographics.csv",
        "sex_encoding": dict(sex_encoding or table.sex_encoding),
        "gestures": [int(g) for g in gestures],
        "subjects": entries,
    }
    path = root / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path
