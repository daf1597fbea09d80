"""Trial-averaged long-form feature matrix."""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from ..dataset import extract_window
from ..errors import NumericError
from .catalog import CATALOG, FEATURE_NAMES, FeatureConfig
from .channels import xch_batch
from .spectral import fd_batch
from .time_domain import td_batch
from .wavelet import tf_batch

KEYS = ["subject", "gesture", "channel"]
CHUNK = 1024


def channel_features(windows, fs, config=None):
    """146 single-window features for each row of ``windows`` (m, n) -> (m, 146)."""
    cfg = config or FeatureConfig()
    windows = np.atleast_2d(np.asarray(windows, dtype=float))
    parts = []
    for start in range(0, windows.shape[0], CHUNK):
        w = windows[start : start + CHUNK]
        parts.append(np.concatenate([td_batch(w, cfg), fd_batch(w, fs, cfg), tf_batch(w, cfg)], axis=1))
    return np.concatenate(parts, axis=0)


def trial_features(tensor, config=None, fraction=0.70):
    """Per-trial, per-channel features of one subject: (n_trials, n_channels, 147)."""
    cfg = config or FeatureConfig()
    win = extract_window(np.asarray(tensor.data, dtype=float), fraction=fraction)
    t, c, n = win.shape
    per_channel = channel_features(win.reshape(t * c, n), tensor.sampling_rate_hz, cfg)
    xch = xch_batch(win)
    out = np.concatenate([per_channel.reshape(t, c, -1), xch[..., None]], axis=2)
    bad = ~np.isfinite(out)
    if bad.any():
        ti, ci, fi = (int(v[0]) for v in np.nonzero(bad))
        raise NumericError(
            f"non-finite feature: subject={tensor.subject_id} trial={ti} channel={ci} "
            f"feature={FEATURE_NAMES[fi]}"
        )
    return out


def _subject_rows(args):
    tensor, cfg, fraction = args
    feats = trial_features(tensor, cfg, fraction)
    rows = []
    for g in np.unique(tensor.labels):
        cell = feats[tensor.labels == g].mean(axis=0)  # (channels, 147)
        for ch in range(cell.shape[0]):
            rows.append((tensor.subject_id, int(g), ch, cell[ch]))
    return rows


@dataclass
class FeatureMatrix:
    """Long-form rows keyed by (subject, gesture, channel) with 147 feature columns."""

    frame: pd.DataFrame
    config: FeatureConfig = field(default_factory=FeatureConfig)
    window_fraction: float = 0.70

    def __post_init__(self):
        missing = [c for c in KEYS + FEATURE_NAMES if c not in self.frame.columns]
        if missing:
            raise ValueError(f"feature matrix lacks columns {missing[:5]}")
        self.frame = self.frame.loc[:, KEYS + FEATURE_NAMES].reset_index(drop=True)
        self.frame["subject"] = self.frame["subject"].astype(str)

    @property
    def values(self):
        return self.frame[FEATURE_NAMES].to_numpy(dtype=float)

    @property
    def subjects(self):
        return list(dict.fromkeys(self.frame["subject"]))

    def __len__(self):
        return len(self.frame)

    def subject_means(self):
        """Features averaged over gestures and channels, one row per subject."""
        return self.frame.groupby("subject", sort=False)[FEATURE_NAMES].mean()

    def metadata(self):
        return {
            "n_features": len(FEATURE_NAMES),
            "catalog": [{"name": d.name, "domain": d.domain, "params": d.params} for d in CATALOG],
            "feature_config": self.config.to_dict(),
            "window_fraction": self.window_fraction,
        }


def build_feature_matrix(tensors, config=None, fraction=0.70, jobs=1):
    """Compute all features per (trial, channel) and average trials within each cell.

    Rows are ordered by subject (input order), gesture, channel regardless of
    ``jobs``.
    """
    cfg = config or FeatureConfig()
    tasks = [(t, cfg, fraction) for t in tensors]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_subject_rows, tasks))
    else:
        chunks = [_subject_rows(task) for task in tasks]
    rows = [r for chunk in chunks for r in chunk]
    values = np.array([r[3] for r in rows]) if rows else np.empty((0, len(FEATURE_NAMES)))
    frame = pd.DataFrame(values, columns=FEATURE_NAMES)
    frame.insert(0, "subject", [r[0] for r in rows])
    frame.insert(1, "gesture", np.array([r[1] for r in rows], dtype=np.int64))
    frame.insert(2, "channel", np.array([r[2] for r in rows], dtype=np.int64))
    return FeatureMatrix(frame, cfg, fraction)
