"""Time-domain features, vectorized over a batch of windows (rows)."""

import numpy as np

from .catalog import N_HIST_BINS, FeatureConfig, td_names


def _safe_div(num, den):
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    out = np.zeros(np.broadcast(num, den).shape)
    np.divide(num, den, out=out, where=den != 0)
    return out


def _ls_slope(xs, ys):
    """Least-squares slope of each row of ys against xs."""
    xc = xs - xs.mean()
    return (ys - ys.mean(axis=-1, keepdims=True)) @ xc / (xc @ xc)


def box_scales(n):
    """Dyadic box sizes (in samples) used by the box-counting dimension."""
    scales = [2, 4]
    s = 8
    while s <= n / 8:
        scales.append(s)
        s *= 2
    return scales


def box_counting_dimension(x):
    """Box-counting dimension of the waveform graph.

    Amplitude is rescaled to span n - 1 units so both axes share the sample
    grid. For each dyadic box size s the graph is cut into columns of s
    sample steps and each column contributes the number of boxes spanned by
    its samples. The dimension is minus the log-log slope of count vs size.
    Constant windows return 0.
    """
    x = np.atleast_2d(x)
    m, n = x.shape
    lo = x.min(axis=1, keepdims=True)
    span = x.max(axis=1, keepdims=True) - lo
    scale = _safe_div(np.full_like(span, n - 1.0), span)
    y = (x - lo) * scale
    scales = box_scales(n)
    counts = np.empty((m, len(scales)))
    for j, s in enumerate(scales):
        ncol = -(-(n - 1) // s)
        pad = ncol * s + 1 - n
        yp = np.concatenate([y, np.repeat(y[:, -1:], pad, axis=1)], axis=1) if pad else y
        cols = np.lib.stride_tricks.sliding_window_view(yp, s + 1, axis=1)[:, ::s]
        boxes = np.floor(cols.max(axis=2) / s) - np.floor(cols.min(axis=2) / s) + 1.0
        counts[:, j] = boxes.sum(axis=1)
    dim = -_ls_slope(np.log(np.asarray(scales, float)), np.log(counts))
    return np.where(span.ravel() > 0, dim, 0.0)


def higuchi_fd(x, kmax=8):
    """Higuchi fractal dimension; 0 for signals with zero curve length."""
    x = np.atleast_2d(x)
    m, n = x.shape
    ks, logs = [], []
    for k in range(1, kmax + 1):
        lengths = []
        for start in range(k):
            sub = x[:, start::k]
            steps = sub.shape[1] - 1
            if steps < 1:
                continue
            norm = (n - 1) / (steps * k)
            lengths.append(np.abs(np.diff(sub, axis=1)).sum(axis=1) * norm / k)
        if lengths:
            ks.append(k)
            logs.append(np.mean(lengths, axis=0))
    if len(ks) < 2:
        return np.zeros(m)
    curve = np.stack(logs, axis=1)
    ok = (curve > 0).all(axis=1)
    out = np.zeros(m)
    if ok.any():
        out[ok] = _ls_slope(np.log(1.0 / np.asarray(ks, float)), np.log(curve[ok]))
    return out


def _hjorth(x, dx, ddx):
    var0 = x.var(axis=1)
    var1 = dx.var(axis=1)
    var2 = ddx.var(axis=1)
    mob = np.sqrt(_safe_div(var1, var0))
    mob_d = np.sqrt(_safe_div(var2, var1))
    com = _safe_div(mob_d, mob)
    return mob, com


def _histogram(x):
    """Per-row proportions in 10 equal-width bins over [min, max]; numpy's bin rule."""
    m, n = x.shape
    lo = x.min(axis=1, keepdims=True)
    hi = x.max(axis=1, keepdims=True)
    out = np.zeros((m, N_HIST_BINS))
    live = (hi > lo).ravel()
    if not live.any():
        return out
    xl, lo, hi = x[live], lo[live], hi[live]
    edges = np.linspace(lo[:, 0], hi[:, 0], N_HIST_BINS + 1, axis=1)
    idx = ((xl - lo) * (N_HIST_BINS / (hi - lo))).astype(np.intp)
    idx[idx == N_HIST_BINS] -= 1
    rows = np.arange(xl.shape[0])[:, None]
    idx[xl < edges[rows, idx]] -= 1
    bump = (xl >= edges[rows, idx + 1]) & (idx != N_HIST_BINS - 1)
    idx[bump] += 1
    counts = np.zeros((xl.shape[0], N_HIST_BINS))
    np.add.at(counts, (np.broadcast_to(rows, idx.shape), idx), 1.0)
    out[live] = counts / n
    return out


def td_batch(x, config=None):
    """All 34 time-domain features for each row of ``x``; returns (m, 34)."""
    cfg = config or FeatureConfig()
    x = np.atleast_2d(np.asarray(x, dtype=float))
    m, n = x.shape
    if n < 3:
        raise ValueError(f"time-domain features need at least 3 samples, got {n}")
    a = np.abs(x)
    dx = np.diff(x, axis=1)
    adx = np.abs(dx)
    ddx = np.diff(dx, axis=1)

    mav = a.mean(axis=1)
    var = x.var(axis=1)
    std = np.sqrt(var)
    wl = adx.sum(axis=1)
    zc = ((x[:, :-1] * x[:, 1:] < 0) & (adx >= cfg.zc_threshold)).sum(axis=1)
    rms = np.sqrt((x * x).mean(axis=1))

    peaks = (a[:, 1:-1] > a[:, :-2]) & (a[:, 1:-1] > a[:, 2:])
    n_peaks = peaks.sum(axis=1)
    mpv = _safe_div((a[:, 1:-1] * peaks).sum(axis=1), n_peaks)
    first = np.where(peaks.any(axis=1), np.argmax(peaks, axis=1) + 1, 0)
    last = np.where(peaks.any(axis=1), n - 2 - np.argmax(peaks[:, ::-1], axis=1), 0)
    mfv = np.where(n_peaks >= 2, _safe_div(last - first, n_peaks - 1), 0.0)

    ssc = ((x[:, 1:-1] - x[:, :-2]) * (x[:, 1:-1] - x[:, 2:]) > cfg.ssc_threshold).sum(axis=1)
    damv = wl / (n - 1)
    fdim = box_counting_dimension(x)
    sq_len = (dx * dx).sum(axis=1)
    mfl = np.where(sq_len > 0, np.log10(np.sqrt(np.where(sq_len > 0, sq_len, 1.0))), 0.0)
    hfd = higuchi_fd(x, cfg.hfd_kmax)

    centered = x - x.mean(axis=1, keepdims=True)
    m2 = (centered**2).mean(axis=1)
    skew = _safe_div((centered**3).mean(axis=1), m2**1.5)
    kurt = _safe_div((centered**4).mean(axis=1), m2**2)

    iav = a.sum(axis=1)
    hmob, hcom = _hjorth(x, dx, ddx)
    er = (x * x).sum(axis=1)
    dasdv = np.sqrt((dx * dx).mean(axis=1))
    wam = (adx > cfg.wam_threshold).sum(axis=1)
    seg_mav = np.stack([s.mean(axis=1) for s in np.array_split(a, 3, axis=1)], axis=1)
    mavs = np.diff(seg_mav, axis=1).mean(axis=1)
    perc = np.percentile(a, 75, axis=1)

    scalars = np.stack(
        [mav, std, var, wl, zc, rms, n_peaks, mpv, mfv, ssc, damv, fdim,
         mfl, hfd, skew, iav, hmob, hcom, er, dasdv, wam, mavs, kurt, perc],
        axis=1,
    ).astype(float)
    return np.concatenate([scalars, _histogram(x)], axis=1)


def compute_td(window, config=None):
    """Named time-domain features of one window."""
    return dict(zip(td_names(), td_batch(np.asarray(window)[None, :], config)[0]))
