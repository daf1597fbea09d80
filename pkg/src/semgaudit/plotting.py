"""Figure emitters. Each figure is an SVG written next to the CSV it was drawn from."""

import io
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402
from scipy.cluster import hierarchy  # noqa: E402

from . import DEMOGRAPHICS  # noqa: E402
from .outputs import atomic_write_bytes, write_csv  # noqa: E402

PLACEHOLDER = "no significant associations"


def _save(fig, path, stamp):
    buf = io.BytesIO()
    with plt.rc_context({"svg.hashsalt": stamp, "svg.fonttype": "path"}):
        fig.savefig(buf, format="svg", metadata={"Date": None, "Description": stamp, "Creator": "semgaudit"})
    plt.close(fig)
    atomic_write_bytes(path, buf.getvalue())


def ranking_table(summary):
    """Feature-level counts with their count group; group sizes partition all features."""
    t = summary[["rank", "feature", "n_significant", "eta2_sum", "eta2_max"]].copy()
    sizes = t["n_significant"].value_counts()
    t["group_size"] = t["n_significant"].map(sizes).astype(int)
    return t


def figure_ranking(summary, path, stamp):
    """Horizontal bars of association counts for features with at least one flag."""
    table = ranking_table(summary)
    write_csv(table, Path(path).with_suffix(".csv"), stamp)
    shown = table[table["n_significant"] > 0]
    groups = table.drop_duplicates("n_significant")[["n_significant", "group_size"]]
    fig, ax = plt.subplots(figsize=(7, max(2.5, 0.18 * len(shown) + 1.2)))
    if shown.empty:
        ax.text(0.5, 0.5, PLACEHOLDER, ha="center", va="center", transform=ax.transAxes)
        ax.set_axis_off()
    else:
        cmap = plt.get_cmap("viridis")
        top = max(int(shown["n_significant"].max()), 1)
        colors = [cmap(k / top) for k in shown["n_significant"]]
        y = np.arange(len(shown))[::-1]
        ax.barh(y, shown["n_significant"], color=colors)
        ax.set_yticks(y, shown["feature"], fontsize=7)
        ax.set_xlabel("significant demographic associations")
        ax.xaxis.get_major_locator().set_params(integer=True)
    legend = ", ".join(f"{int(r.n_significant)}: {int(r.group_size)}" for r in groups.itertuples())
    ax.set_title(f"Features by association count ({legend})", fontsize=9)
    fig.tight_layout()
    _save(fig, path, stamp)


def figure_effect_sizes(results, stats, path, stamp):
    """Boxplots of eta2 per demographic (ordered by median) with jittered points."""
    order = [s["demographic"] for s in stats]
    rng = np.random.default_rng(0)
    data = results[["demographic", "feature", "eta2_partial", "significant"]].copy()
    data["position"] = data["demographic"].map({d: i for i, d in enumerate(order)})
    data = data.sort_values(["position", "feature"], kind="stable").reset_index(drop=True)
    data["jitter"] = rng.uniform(-0.18, 0.18, size=len(data))
    write_csv(data, Path(path).with_suffix(".csv"), stamp)

    fig, ax = plt.subplots(figsize=(9, 4.5))
    boxes = [
        {
            "med": s["median"],
            "q1": s["q1"],
            "q3": s["q3"],
            "whislo": s["whisker_low"],
            "whishi": s["whisker_high"],
            "fliers": [],
            "label": s["demographic"],
        }
        for s in stats
    ]
    ax.bxp(boxes, positions=np.arange(len(boxes)), showfliers=False, widths=0.6)
    colors = np.where(data["significant"], "tab:red", "0.5")
    ax.scatter(data["position"] + data["jitter"], data["eta2_partial"], s=4, c=colors, alpha=0.6, linewidths=0)
    ax.set_xticks(np.arange(len(order)), order, rotation=45, ha="right", fontsize=8)
    ax.set_ylabel("partial eta squared")
    ax.set_title(f"Effect sizes across {len(results)} feature-demographic pairs", fontsize=9)
    fig.tight_layout()
    _save(fig, path, stamp)


def heatmap_table(results):
    """Significant eta2 values (features with at least one flag x demographics); NaN elsewhere."""
    sig = results[results["significant"]]
    feats = list(dict.fromkeys(sig["feature"]))
    grid = pd.DataFrame(np.nan, index=pd.Index(feats, name="feature"), columns=list(DEMOGRAPHICS))
    for r in sig.itertuples():
        grid.loc[r.feature, r.demographic] = r.eta2_partial
    return grid


def figure_heatmap(results, path, stamp, feature_order=None):
    grid = heatmap_table(results)
    if feature_order is not None:
        grid = grid.loc[[f for f in feature_order if f in grid.index]]
    write_csv(grid.reset_index(), Path(path).with_suffix(".csv"), stamp)
    fig, ax = plt.subplots(figsize=(7, max(2.5, 0.18 * len(grid) + 1.5)))
    if grid.empty:
        ax.text(0.5, 0.5, PLACEHOLDER, ha="center", va="center", fontsize=12, transform=ax.transAxes)
        ax.set_axis_off()
    else:
        im = ax.imshow(np.ma.masked_invalid(grid.to_numpy()), aspect="auto", cmap="magma_r", vmin=0)
        ax.set_xticks(np.arange(grid.shape[1]), grid.columns, rotation=45, ha="right", fontsize=7)
        ax.set_yticks(np.arange(grid.shape[0]), grid.index, fontsize=7)
        fig.colorbar(im, ax=ax, label="partial eta squared")
    ax.set_title("Significant feature-demographic associations", fontsize=9)
    fig.tight_layout()
    _save(fig, path, stamp)


def cim_table(layout):
    rows = [layout.row_names[i] for i in layout.row_order]
    cols = [layout.col_names[j] for j in layout.col_order]
    grid = pd.DataFrame(layout.ordered_cells(), index=pd.Index(rows, name="feature"), columns=cols)
    return grid


def figure_cim(layout, path, stamp):
    """Loading-product heatmap with row and column dendrograms in leaf order."""
    grid = cim_table(layout)
    write_csv(grid.reset_index(), Path(path).with_suffix(".csv"), stamp)
    n_rows, n_cols = grid.shape
    fig = plt.figure(figsize=(7, max(6, 0.07 * n_rows + 2)))
    gs = fig.add_gridspec(2, 2, width_ratios=[1.2, 4], height_ratios=[1, 6], wspace=0.02, hspace=0.02)
    ax_corner = fig.add_subplot(gs[0, 0])
    ax_top = fig.add_subplot(gs[0, 1])
    ax_left = fig.add_subplot(gs[1, 0])
    ax = fig.add_subplot(gs[1, 1])
    # dendrogram leaves sit at 5, 15, 25, ...; pin limits so leaf i lines up with cell i
    if len(layout.col_linkage):
        hierarchy.dendrogram(layout.col_linkage, ax=ax_top, color_threshold=0, above_threshold_color="k", no_labels=True)
    ax_top.set_xlim(0, 10 * n_cols)
    if len(layout.row_linkage):
        hierarchy.dendrogram(
            layout.row_linkage, ax=ax_left, orientation="left", color_threshold=0,
            above_threshold_color="k", no_labels=True,
        )
    ax_left.set_ylim(10 * n_rows, 0)
    for a in (ax_top, ax_left, ax_corner):
        a.set_axis_off()
    lim = float(np.abs(grid.to_numpy()).max()) or 1.0
    im = ax.imshow(grid.to_numpy(), aspect="auto", cmap="RdBu_r", vmin=-lim, vmax=lim, interpolation="nearest")
    ax.set_xticks(np.arange(n_cols), grid.columns, rotation=90, fontsize=7)
    ax.yaxis.tick_right()
    fs = 7 if n_rows <= 60 else 3
    ax.set_yticks(np.arange(n_rows), grid.index, fontsize=fs)
    cax = ax_corner.inset_axes([0.1, 0.45, 0.8, 0.12])
    fig.colorbar(im, cax=cax, orientation="horizontal")
    cax.tick_params(labelsize=6)
    comps = ", ".join(str(c + 1) for c in layout.components)
    ax_top.set_title(f"sPLS clustered image map (component {comps})", fontsize=9)
    _save(fig, path, stamp)
