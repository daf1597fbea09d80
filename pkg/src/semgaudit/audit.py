"""FDR correction, dual-threshold flags and per-feature sensitivity ranking."""

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from . import DEMOGRAPHICS

P_THRESHOLD = 0.05
ETA2_THRESHOLD = 0.06


def bh_fdr(p):
    """Benjamini-Hochberg step-up adjusted p-values, returned in input order."""
    p = np.asarray(p, dtype=float)
    m = p.size
    if m == 0:
        return p.copy()
    if np.any((p <= 0) | (p > 1)) or not np.isfinite(p).all():
        raise ValueError("p-values must lie in (0, 1]")
    order = np.argsort(p, kind="stable")
    # m / rank first: a factor >= 1 cannot round the product below p
    scaled = p[order] * (m / np.arange(1, m + 1))
    adj = np.minimum.accumulate(scaled[::-1])[::-1]
    out = np.empty(m)
    out[order] = np.minimum(adj, 1.0)
    return out


@dataclass
class SensitivityResult:
    feature_name: str
    demographic_name: str
    beta: float
    p_raw: float
    p_fdr: float
    eta2_partial: float
    significant: bool


@dataclass
class FeatureSensitivitySummary:
    feature_name: str
    n_significant: int
    eta2_sum: float
    eta2_mean: float
    eta2_max: float
    top_demographics: list = field(default_factory=list)


def adjust(results, family="joint"):
    """Add ``p_fdr`` to a long results frame (feature, demographic, p, ...).

    ``family="joint"`` corrects all rows together; ``"per-demographic"``
    corrects within each demographic separately.
    """
    out = results.copy()
    if family == "joint":
        out["p_fdr"] = bh_fdr(out["p"].to_numpy())
    elif family == "per-demographic":
        out["p_fdr"] = np.nan
        for _, idx in out.groupby("demographic", sort=False).groups.items():
            out.loc[idx, "p_fdr"] = bh_fdr(out.loc[idx, "p"].to_numpy())
    else:
        raise ValueError(f"unknown FDR family {family!r}")
    return out


def apply_dual_threshold(results, alpha=P_THRESHOLD, eta2_min=ETA2_THRESHOLD):
    """Flag rows with p_fdr < alpha and eta2_partial >= eta2_min.

    Returns ``(flagged_frame, n_significant)``.
    """
    out = results.copy()
    out["significant"] = (out["p_fdr"] < alpha) & (out["eta2_partial"] >= eta2_min)
    return out, int(out["significant"].sum())


def to_records(results):
    return [
        SensitivityResult(r.feature, r.demographic, r.beta, r.p, r.p_fdr, r.eta2_partial, bool(r.significant))
        for r in results.itertuples()
    ]


def aggregate_features(results):
    """Per-feature counts and eta2 aggregates, ranked.

    Order: n_significant descending, eta2_max descending, feature name
    ascending. ``top_demographics`` lists significant demographics by
    decreasing eta2.
    """
    summaries = []
    for name, grp in results.groupby("feature", sort=False):
        eta = grp["eta2_partial"].to_numpy(dtype=float)
        sig = grp[grp["significant"]].sort_values(["eta2_partial", "demographic"], ascending=[False, True])
        summaries.append(
            FeatureSensitivitySummary(
                feature_name=name,
                n_significant=int(grp["significant"].sum()),
                eta2_sum=float(eta.sum()),
                eta2_mean=float(eta.mean()),
                eta2_max=float(eta.max()),
                top_demographics=list(sig["demographic"]),
            )
        )
    summaries.sort(key=lambda s: (-s.n_significant, -s.eta2_max, s.feature_name))
    return summaries


def summary_frame(summaries):
    return pd.DataFrame(
        [
            {
                "rank": i + 1,
                "feature": s.feature_name,
                "n_significant": s.n_significant,
                "eta2_sum": s.eta2_sum,
                "eta2_mean": s.eta2_mean,
                "eta2_max": s.eta2_max,
                "top_demographics": ";".join(s.top_demographics),
            }
            for i, s in enumerate(summaries)
        ]
    )


def count_groups(summaries):
    """Number of features per significant-association count, highest count first."""
    counts = {}
    for s in summaries:
        counts[s.n_significant] = counts.get(s.n_significant, 0) + 1
    return dict(sorted(counts.items(), reverse=True))


def _box_stats(values):
    v = np.sort(np.asarray(values, dtype=float))
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    iqr = q3 - q1
    lo, hi = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = v[(v >= lo) & (v <= hi)]
    return {
        "n": int(v.size),
        "median": float(med),
        "q1": float(q1),
        "q3": float(q3),
        "iqr": float(iqr),
        "whisker_low": float(inside.min()),
        "whisker_high": float(inside.max()),
        "outliers": [float(x) for x in v[(v < lo) | (v > hi)]],
    }


def effectsize_distributions(results):
    """Boxplot statistics of eta2 per demographic, ordered by decreasing median.

    Whiskers reach the most extreme values within 1.5 IQR of the quartiles.
    """
    stats = []
    for dem in DEMOGRAPHICS:
        vals = results.loc[results["demographic"] == dem, "eta2_partial"]
        if len(vals):
            stats.append({"demographic": dem, **_box_stats(vals)})
    stats.sort(key=lambda s: (-s["median"], s["demographic"]))
    return stats


def run_audit(results, family="joint", alpha=P_THRESHOLD, eta2_min=ETA2_THRESHOLD):
    """Adjust, flag and aggregate; returns (flagged frame, ranked summaries)."""
    flagged, _ = apply_dual_threshold(adjust(results, family), alpha, eta2_min)
    return flagged, aggregate_features(flagged)
