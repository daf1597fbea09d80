"""Wavelet (DWT) and wavelet-packet (WPT) features."""

import numpy as np
import pywt

from .catalog import N_WPT_NODES, FeatureConfig, tf_names


def dwt_coefficients(x, config=None):
    """Level-4 approximation followed by details 4..1, concatenated per row."""
    cfg = config or FeatureConfig()
    coeffs = pywt.wavedec(x, cfg.wavelet, mode="symmetric", level=cfg.wpt_level, axis=-1)
    return np.concatenate(coeffs, axis=-1)


def wpt_nodes(x, config=None):
    """Terminal wavelet-packet coefficients in natural frequency order.

    Returns a list of 16 arrays, each (m, n_coeffs).
    """
    cfg = config or FeatureConfig()
    wp = pywt.WaveletPacket(x, cfg.wavelet, mode="symmetric", maxlevel=cfg.wpt_level, axis=-1)
    return [node.data for node in wp.get_level(cfg.wpt_level, order="freq")]


def tf_batch(x, config=None):
    """All 56 time-frequency features for each row; returns (m, 56)."""
    cfg = config or FeatureConfig()
    x = np.atleast_2d(np.asarray(x, dtype=float))
    flen = pywt.Wavelet(cfg.wavelet).dec_len
    if x.shape[1] < 2**cfg.wpt_level * flen:
        raise ValueError(
            f"wavelet features need at least {2**cfg.wpt_level * flen} samples, got {x.shape[1]}"
        )
    c = dwt_coefficients(x, cfg)
    dc = np.diff(c, axis=1)
    wt = np.stack(
        [
            c.std(axis=1),
            c.var(axis=1),
            np.abs(dc).sum(axis=1),
            (c * c).sum(axis=1),
            np.abs(c).max(axis=1),
            (c[:, :-1] * c[:, 1:] < 0).sum(axis=1),
            c.mean(axis=1),
            np.abs(c).mean(axis=1),
        ],
        axis=1,
    ).astype(float)

    nodes = wpt_nodes(x, cfg)
    energy = np.stack([(d * d).sum(axis=1) for d in nodes], axis=1)
    rms = np.stack([np.sqrt((d * d).mean(axis=1)) for d in nodes], axis=1)
    total = energy.sum(axis=1, keepdims=True)
    eps = cfg.log_floor
    log_rms = np.log(rms + eps)
    rel = np.full_like(energy, 1.0 / N_WPT_NODES)
    np.divide(energy, total, out=rel, where=total > 0)
    nle = np.log(energy + eps) - np.log(total + eps)
    return np.concatenate([wt, log_rms, rel, nle], axis=1)


def node_band(k, fs):
    """Nominal frequency band [lo, hi) of frequency-ordered level-4 node k."""
    width = fs / 2.0 / N_WPT_NODES
    return k * width, (k + 1) * width


def compute_tf(window, config=None):
    """Named time-frequency features of one window."""
    return dict(zip(tf_names(), tf_batch(np.asarray(window)[None, :], config)[0]))
