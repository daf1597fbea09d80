"""Reference implementations written as plain loops.

Nothing here imports the feature engine or the LMM; the test suite compares
the two paths. Slow by design, meant for a few hundred windows at most.
"""

import math
from functools import lru_cache

import numpy as np
from scipy import stats

# Symlet-5 decomposition low-pass taps.
SYM5_LO = (
    0.027333068345077982, 0.029519490925774643, -0.039134249302383094, 0.1993975339773936,
    0.7234076904024206, 0.6339789634582119, 0.01660210576452232, -0.17532808990845047,
    -0.021101834024758855, 0.019538882735286728,
)
SYM5_HI = tuple((-1) ** (k + 1) * SYM5_LO[len(SYM5_LO) - 1 - k] for k in range(len(SYM5_LO)))


def _mean(v):
    return math.fsum(v) / len(v)


def _pvar(v):
    mu = _mean(v)
    return math.fsum((a - mu) ** 2 for a in v) / len(v)


def _div(a, b):
    return a / b if b != 0 else 0.0


def _slope(xs, ys):
    mx, my = _mean(xs), _mean(ys)
    num = math.fsum((a - mx) * (b - my) for a, b in zip(xs, ys))
    den = math.fsum((a - mx) ** 2 for a in xs)
    return num / den


# ---------------------------------------------------------------------------
# time domain


def _box_dimension(x):
    n = len(x)
    lo, hi = min(x), max(x)
    if hi == lo:
        return 0.0
    scale = (n - 1.0) / (hi - lo)
    y = [(v - lo) * scale for v in x]
    sizes = [2, 4]
    s = 8
    while s <= n / 8:
        sizes.append(s)
        s *= 2
    logs, logn = [], []
    for s in sizes:
        total = 0.0
        col = 0
        while col * s < n - 1:
            seg = y[col * s : min(col * s + s + 1, n)]
            total += math.floor(max(seg) / s) - math.floor(min(seg) / s) + 1
            col += 1
        logs.append(math.log(s))
        logn.append(math.log(total))
    return -_slope(logs, logn)


def _higuchi(x, kmax):
    n = len(x)
    ks, lk = [], []
    for k in range(1, kmax + 1):
        vals = []
        for m in range(k):
            idx = list(range(m, n, k))
            if len(idx) < 2:
                continue
            length = 0.0
            for a, b in zip(idx[:-1], idx[1:]):
                length += abs(x[b] - x[a])
            steps = len(idx) - 1
            vals.append(length * (n - 1) / (steps * k) / k)
        if vals:
            ks.append(k)
            lk.append(_mean(vals))
    if len(ks) < 2 or min(lk) <= 0:
        return 0.0
    return _slope([math.log(1.0 / k) for k in ks], [math.log(v) for v in lk])


def _percentile(values, q):
    v = sorted(values)
    pos = q / 100.0 * (len(v) - 1)
    lo = int(math.floor(pos))
    hi = min(lo + 1, len(v) - 1)
    return v[lo] + (v[hi] - v[lo]) * (pos - lo)


def oracle_td(x, zc_eps=0.0, ssc_eps=0.0, wam_theta=0.05, kmax=8):
    x = [float(v) for v in x]
    n = len(x)
    ax = [abs(v) for v in x]
    d = [x[i + 1] - x[i] for i in range(n - 1)]
    f = {}
    f["MAV"] = _mean(ax)
    f["Var"] = _pvar(x)
    f["STD"] = math.sqrt(f["Var"])
    f["WL"] = math.fsum(abs(v) for v in d)
    zc = 0
    for i in range(n - 1):
        if x[i] * x[i + 1] < 0 and abs(x[i] - x[i + 1]) >= zc_eps:
            zc += 1
    f["ZC"] = float(zc)
    f["RMS"] = math.sqrt(_mean([v * v for v in x]))
    peaks = [i for i in range(1, n - 1) if ax[i] > ax[i - 1] and ax[i] > ax[i + 1]]
    f["NP"] = float(len(peaks))
    f["MPV"] = _mean([ax[i] for i in peaks]) if peaks else 0.0
    gaps = [b - a for a, b in zip(peaks[:-1], peaks[1:])]
    f["MFV"] = _mean(gaps) if gaps else 0.0
    ssc = 0
    for i in range(1, n - 1):
        if (x[i] - x[i - 1]) * (x[i] - x[i + 1]) > ssc_eps:
            ssc += 1
    f["SSC"] = float(ssc)
    f["DAMV"] = f["WL"] / (n - 1)
    f["FDim"] = _box_dimension(x)
    sq = math.fsum(v * v for v in d)
    f["MFL"] = math.log10(math.sqrt(sq)) if sq > 0 else 0.0
    f["HFD"] = _higuchi(x, kmax)
    mu = _mean(x)
    m2 = _mean([(v - mu) ** 2 for v in x])
    m3 = _mean([(v - mu) ** 3 for v in x])
    m4 = _mean([(v - mu) ** 4 for v in x])
    f["Skew"] = m3 / m2**1.5 if m2 > 0 else 0.0
    f["IAV"] = math.fsum(ax)
    dd = [d[i + 1] - d[i] for i in range(len(d) - 1)]
    v0, v1, v2 = _pvar(x), _pvar(d), _pvar(dd)
    mob = math.sqrt(_div(v1, v0))
    mob_d = math.sqrt(_div(v2, v1))
    f["HMob"] = mob
    f["HCom"] = _div(mob_d, mob)
    f["ER"] = math.fsum(v * v for v in x)
    f["DASDV"] = math.sqrt(_mean([v * v for v in d]))
    f["WAM"] = float(sum(1 for v in d if abs(v) > wam_theta))
    # three near-equal segments, longer ones first
    base, extra = divmod(n, 3)
    bounds, start = [], 0
    for s in range(3):
        size = base + (1 if s < extra else 0)
        bounds.append((start, start + size))
        start += size
    mavs = [_mean(ax[a:b]) for a, b in bounds]
    f["MAVS"] = _mean([mavs[i + 1] - mavs[i] for i in range(2)])
    f["Kurt"] = m4 / m2**2 if m2 > 0 else 0.0
    f["Perc"] = _percentile(ax, 75)
    lo, hi = min(x), max(x)
    hist = [0.0] * 10
    if hi > lo:
        edges = np.linspace(lo, hi, 11)
        for v in x:
            b = 9
            for i in range(10):
                if edges[i] <= v < edges[i + 1]:
                    b = i
                    break
            hist[b] += 1
        hist = [h / n for h in hist]
    for i in range(10):
        f[f"Hist{i}"] = hist[i]
    return f


# ---------------------------------------------------------------------------
# frequency domain


@lru_cache(maxsize=4)
def _dft_basis(n):
    k = np.arange(n // 2 + 1)[:, None]
    j = np.arange(n)[None, :]
    phase = 2.0 * np.pi * ((k * j) % n) / n
    return np.cos(phase), np.sin(phase)


def oracle_spectrum(x, fs):
    """Rectangular-window one-sided power per bin via an explicit DFT sum."""
    x = np.asarray(x, dtype=float)
    n = x.size
    xc = x - _mean(list(x))
    nbins = n // 2 + 1
    cos, sin = _dft_basis(n)
    re = cos @ xc
    im = sin @ xc
    power = (re * re + im * im) / n**2
    for b in range(1, nbins):
        if not (n % 2 == 0 and b == n // 2):
            power[b] *= 2.0
    freqs = [b * fs / n for b in range(nbins)]
    return freqs, [float(p) for p in power]


def oracle_fd(x, fs, fr_low=(10.0, 100.0), fr_high=(100.0, 500.0)):
    freqs, p = oracle_spectrum(x, fs)
    names = ["FD_WL", "MNF", "MDF", "MPK", "STDPK", "FR", "PKF"] + [f"FE_{10 * j}Hz" for j in range(1, 50)]
    total = math.fsum(p)
    if total <= 0:
        return dict.fromkeys(names, 0.0)
    f = {}
    f["FD_WL"] = math.fsum(abs(p[i + 1] - p[i]) for i in range(len(p) - 1))
    f["MNF"] = math.fsum(a * b for a, b in zip(freqs, p)) / total
    cum = 0.0
    half = None
    running = []
    for v in p:
        cum += v
        running.append(cum)
    half_total = running[-1] / 2.0
    for i, c in enumerate(running):
        if c >= half_total:
            if i == 0:
                half = freqs[0]
            else:
                frac = (half_total - running[i - 1]) / (c - running[i - 1]) if c != running[i - 1] else 0.0
                half = freqs[i - 1] + frac * (freqs[i] - freqs[i - 1])
            break
    f["MDF"] = half
    pk = [p[i] for i in range(1, len(p) - 1) if p[i] > p[i - 1] and p[i] > p[i + 1]]
    f["MPK"] = _mean(pk) if pk else 0.0
    f["STDPK"] = math.sqrt(_pvar(pk)) if pk else 0.0

    def band(lo, hi, closed=False):
        return math.fsum(v for fr, v in zip(freqs, p) if fr >= lo and (fr <= hi if closed else fr < hi))

    f["FR"] = _div(band(*fr_low), band(*fr_high))
    best = 0
    for i in range(len(p)):
        if p[i] > p[best]:
            best = i
    f["PKF"] = freqs[best]
    for j in range(1, 50):
        lo = 0.0 if j == 1 else 10.0 * j
        f[f"FE_{10 * j}Hz"] = band(lo, 10.0 * (j + 1), closed=(j == 49))
    return f


# ---------------------------------------------------------------------------
# wavelets


def _sym_index(i, n):
    while i < 0 or i >= n:
        i = -1 - i if i < 0 else 2 * n - 1 - i
    return i


@lru_cache(maxsize=256)
def _tap_indices(n, k, n_out):
    return np.array([_sym_index(2 * i + 1 - k, n) for i in range(n_out)])


def _analysis_step(x, taps):
    """One filter-and-downsample step with half-point symmetric extension."""
    x = np.asarray(x, dtype=float)
    n = x.size
    L = len(taps)
    n_out = (n + L - 1) // 2
    out = np.zeros(n_out)
    for k in range(L):
        out += taps[k] * x[_tap_indices(n, k, n_out)]
    return out


def oracle_wavelet_packet(x, level=4):
    """Terminal packet nodes keyed by frequency index."""
    nodes = {0: np.asarray(x, dtype=float)}
    for _ in range(level):
        nxt = {}
        for f, data in nodes.items():
            lo = _analysis_step(data, SYM5_LO)
            hi = _analysis_step(data, SYM5_HI)
            # high-pass output is spectrally mirrored, so odd bands swap children
            if f % 2 == 0:
                nxt[2 * f], nxt[2 * f + 1] = lo, hi
            else:
                nxt[2 * f + 1], nxt[2 * f] = lo, hi
        nodes = nxt
    return [nodes[k] for k in range(2**level)]


def oracle_dwt(x, level=4):
    approx = np.asarray(x, dtype=float)
    details = []
    for _ in range(level):
        details.append(_analysis_step(approx, SYM5_HI))
        approx = _analysis_step(approx, SYM5_LO)
    return [approx] + details[::-1]


def oracle_tf(x, eps=1e-12):
    c = [float(v) for part in oracle_dwt(x) for v in part]
    f = {}
    f["WT_Var"] = _pvar(c)
    f["WT_STD"] = math.sqrt(f["WT_Var"])
    f["WT_WL"] = math.fsum(abs(c[i + 1] - c[i]) for i in range(len(c) - 1))
    f["WT_Energy"] = math.fsum(v * v for v in c)
    f["WT_MaxAV"] = max(abs(v) for v in c)
    f["WT_ZC"] = float(sum(1 for i in range(len(c) - 1) if c[i] * c[i + 1] < 0))
    f["WT_Mean"] = _mean(c)
    f["WT_MAV"] = _mean([abs(v) for v in c])
    nodes = oracle_wavelet_packet(x)
    energies = [math.fsum(float(v) ** 2 for v in d) for d in nodes]
    total = math.fsum(energies)
    for k, (d, e) in enumerate(zip(nodes, energies)):
        f[f"WPT_LogRMS_{k}"] = math.log(math.sqrt(e / len(d)) + eps)
        f[f"WPT_RE_{k}"] = e / total if total > 0 else 1.0 / 16
        f[f"WPT_NLE_{k}"] = math.log(e + eps) - math.log(total + eps)
    return f


def oracle_xch(trial, channel=None):
    """Mean Pearson correlation of each channel (or just ``channel``) with the others."""
    trial = [[float(v) for v in ch] for ch in trial]
    c = len(trial)

    def r(i, j):
        mi, mj = _mean(trial[i]), _mean(trial[j])
        a = [v - mi for v in trial[i]]
        b = [v - mj for v in trial[j]]
        den = math.sqrt(math.fsum(v * v for v in a) * math.fsum(v * v for v in b))
        return math.fsum(p * q for p, q in zip(a, b)) / den if den > 0 else 0.0

    rows = range(c) if channel is None else [channel]
    means = [math.fsum(r(i, j) for j in range(c) if j != i) / (c - 1) for i in rows]
    return means if channel is None else means[0]


def oracle_features(window, fs, others=None, channel=0, wam_theta=0.05, kmax=8):
    """All 147 features of one window as a name -> value dict.

    ``others`` is the full (channels, samples) trial window; when given, the
    inter-channel feature of row ``channel`` is included.
    """
    f = {}
    f.update(oracle_td(window, wam_theta=wam_theta, kmax=kmax))
    f.update(oracle_fd(window, fs))
    f.update(oracle_tf(window))
    if others is not None:
        f["XCH_MeanCorr"] = oracle_xch(others, channel)
    return f


# ---------------------------------------------------------------------------
# statistics


def oracle_ols(y, X):
    """Closed-form least squares with classical two-sided t-tests.

    Returns ``(coef, se, p)``.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    if np.linalg.matrix_rank(X) < p:
        raise np.linalg.LinAlgError("design matrix is rank deficient")
    xtx_inv = np.linalg.inv(X.T @ X)
    coef = xtx_inv @ (X.T @ y)
    resid = y - X @ coef
    s2 = resid @ resid / (n - p)
    se = np.sqrt(np.diag(xtx_inv) * s2)
    with np.errstate(divide="ignore"):
        t = np.where(se > 0, coef / np.where(se > 0, se, 1.0), np.inf)
    pval = 2.0 * stats.t.sf(np.abs(t), df=n - p)
    return coef, se, pval


def oracle_bh(p):
    """Step-up adjustment by brute force: adj_i = min over j with p_j >= p_i of p_j (m / rank_j)."""
    p = [float(v) for v in p]
    m = len(p)
    order = sorted(range(m), key=lambda i: p[i])
    rank = {}
    for r, i in enumerate(order, start=1):
        rank[i] = r
    out = []
    for i in range(m):
        best = 1.0
        for j in range(m):
            if rank[j] >= rank[i]:
                best = min(best, p[j] * (m / rank[j]))
        out.append(best)
    return out
