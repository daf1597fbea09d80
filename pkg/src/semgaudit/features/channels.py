"""Inter-channel Pearson correlation."""

import numpy as np


def pairwise_correlation(trial):
    """Pearson r matrix over channels (rows); constant channels correlate 0 with everything."""
    trial = np.asarray(trial, dtype=float)
    if trial.ndim != 2 or trial.shape[0] < 2:
        raise ValueError("inter-channel correlation needs a (channels, samples) array with >= 2 channels")
    centered = trial - trial.mean(axis=1, keepdims=True)
    norms = np.sqrt((centered * centered).sum(axis=1))
    live = norms > 0
    z = np.zeros_like(centered)
    z[live] = centered[live] / norms[live, None]
    r = np.clip(z @ z.T, -1.0, 1.0)
    np.fill_diagonal(r, np.where(live, 1.0, 0.0))
    return r


def compute_xch(trial):
    """Each channel's mean correlation with the other channels.

    Returns ``(per_channel, pairs)`` where ``pairs`` maps (i, j), i < j, to r.
    """
    r = pairwise_correlation(trial)
    c = r.shape[0]
    per_channel = (r.sum(axis=1) - np.diag(r)) / (c - 1)
    iu = np.triu_indices(c, 1)
    pairs = {(int(i), int(j)): float(r[i, j]) for i, j in zip(*iu)}
    return per_channel, pairs


def xch_batch(trials):
    """Mean-correlation feature for a stack of trials (t, channels, samples) -> (t, channels)."""
    trials = np.asarray(trials, dtype=float)
    centered = trials - trials.mean(axis=2, keepdims=True)
    norms = np.sqrt((centered * centered).sum(axis=2))
    z = np.zeros_like(centered)
    np.divide(centered, norms[..., None], out=z, where=norms[..., None] > 0)
    r = np.clip(np.einsum("tcs,tds->tcd", z, z), -1.0, 1.0)
    c = trials.shape[1]
    diag = np.einsum("tcc->tc", r)
    return (r.sum(axis=2) - diag) / (c - 1)
