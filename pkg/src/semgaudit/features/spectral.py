"""Frequency-domain features from a one-sided power spectrum."""

import numpy as np
from scipy import signal

from .catalog import FeatureConfig, fd_names, fe_band_edges
from .time_domain import _safe_div


def power_spectrum(x, fs, config=None):
    """One-sided power per bin (units of x squared) of each mean-removed row.

    ``periodogram`` uses a rectangular window; its bins sum to the window
    variance. ``welch`` is available for smoother estimates.
    """
    cfg = config or FeatureConfig()
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if cfg.spectrum == "welch":
        nfft = min(cfg.welch_nperseg, x.shape[1])
        _, dens = signal.welch(x, fs, nperseg=nfft, detrend="constant", axis=-1)
    else:
        nfft = x.shape[1]
        _, dens = signal.periodogram(x, fs, window="boxcar", detrend="constant", axis=-1)
    # exact bin frequencies so band edges such as 20 Hz land on the intended side
    freqs = np.arange(dens.shape[-1]) * fs / nfft
    return freqs, dens * (fs / nfft)


def band_power(freqs, power, lo, hi, closed=False):
    sel = (freqs >= lo) & ((freqs <= hi) if closed else (freqs < hi))
    return power[:, sel].sum(axis=1)


def median_frequency(freqs, power):
    """First frequency where cumulative power reaches half the total, interpolated."""
    cum = np.cumsum(power, axis=1)
    total = cum[:, -1]
    half = total / 2.0
    k = np.argmax(cum >= half[:, None], axis=1)
    rows = np.arange(power.shape[0])
    prev = np.maximum(k - 1, 0)
    c_hi = cum[rows, k]
    c_lo = np.where(k > 0, cum[rows, prev], 0.0)
    f_lo = np.where(k > 0, freqs[prev], freqs[0])
    frac = _safe_div(half - c_lo, c_hi - c_lo)
    mdf = np.where(k > 0, f_lo + frac * (freqs[k] - f_lo), freqs[0])
    return np.where(total > 0, mdf, 0.0)


def fd_batch(x, fs, config=None):
    """All 56 frequency-domain features for each row; returns (m, 56)."""
    cfg = config or FeatureConfig()
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] < 64:
        raise ValueError(f"frequency-domain features need at least 64 samples, got {x.shape[1]}")
    if fs <= 0:
        raise ValueError("sampling rate must be positive")
    freqs, p = power_spectrum(x, fs, cfg)
    total = p.sum(axis=1)
    live = total > 0

    fd_wl = np.abs(np.diff(p, axis=1)).sum(axis=1)
    mnf = _safe_div(p @ freqs, total)
    mdf = median_frequency(freqs, p)
    is_peak = (p[:, 1:-1] > p[:, :-2]) & (p[:, 1:-1] > p[:, 2:])
    n_pk = is_peak.sum(axis=1)
    pk_vals = np.where(is_peak, p[:, 1:-1], 0.0)
    mpk = _safe_div(pk_vals.sum(axis=1), n_pk)
    pk_sq = _safe_div((np.where(is_peak, p[:, 1:-1] - mpk[:, None], 0.0) ** 2).sum(axis=1), n_pk)
    stdpk = np.sqrt(pk_sq)
    fr = _safe_div(
        band_power(freqs, p, *cfg.fr_low_band), band_power(freqs, p, *cfg.fr_high_band)
    )
    pkf = np.where(live, freqs[np.argmax(p, axis=1)], 0.0)

    edges = fe_band_edges()
    fe = np.stack(
        [band_power(freqs, p, lo, hi, closed=(i == len(edges) - 1)) for i, (lo, hi) in enumerate(edges)],
        axis=1,
    )
    out = np.concatenate([np.stack([fd_wl, mnf, mdf, mpk, stdpk, fr, pkf], axis=1), fe], axis=1)
    out[~live] = 0.0
    return out


def compute_fd(window, fs, config=None):
    """Named frequency-domain features of one window."""
    return dict(zip(fd_names(), fd_batch(np.asarray(window)[None, :], fs, config)[0]))
