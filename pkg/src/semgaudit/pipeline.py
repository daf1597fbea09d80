"""Staged pipeline with outputs cached by configuration hash.

Stages run in order ingest, impute, extract, fit, audit, pls, report. A
stage is skipped when its cache record holds the same key and every listed
output still has the recorded digest. Downstream stages always read their
inputs back from the upstream files, so cached and fresh runs see identical
numbers.
"""

import hashlib
import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__, audit, plotting
from .dataset import apply_exclusion, load_dataset, read_demographics, write_dataset
from .errors import DataError, NumericError, SemgAuditError
from .features import build_feature_matrix
from .features.matrix import FeatureMatrix
from .lmm import fit_all, results_tables, standardize_design
from .mice import mice_impute
from .outputs import atomic_write_bytes, file_digest, read_csv, read_json, write_csv, write_json
from .spls import build_cim, fit_spls, q2_crossval, subject_matrices

log = logging.getLogger(__name__)

STAGES = ("ingest", "impute", "extract", "fit", "audit", "pls", "report")
UPSTREAM = {
    "ingest": (),
    "impute": ("ingest",),
    "extract": ("ingest",),
    "fit": ("extract", "impute"),
    "audit": ("fit",),
    "pls": ("extract", "impute"),
    "report": ("audit", "pls"),
}

F = {
    "ingest": "ingest.json",
    "included": "demographics_included.csv",
    "imputed": "demographics_imputed.csv",
    "impute_report": "imputation_report.json",
    "features": "features.csv",
    "features_meta": "features.json",
    "lmm": "lmm_results.csv",
    "variance": "lmm_variance.csv",
    "sensitivity": "sensitivity.csv",
    "summary": "feature_summary.csv",
    "effects": "effect_sizes.json",
    "loadings": "spls_loadings.csv",
    "q2": "spls_q2.csv",
    "cim": "cim_layout.json",
    "fig1": "fig1_ranking.svg",
    "fig2": "fig2_effect_sizes.svg",
    "fig3": "fig3_heatmap.svg",
    "fig4": "fig4_cim.svg",
}


class StageError(SemgAuditError):
    def __init__(self, stage, cause):
        super().__init__(f"stage {stage} failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 1)


@dataclass
class Context:
    cfg: object
    out: Path
    jobs: int = 1

    @property
    def stamp(self):
        return self.cfg.stamp()

    def path(self, key):
        return self.out / F[key]

    def csv(self, frame, key):
        write_csv(frame, self.path(key), self.stamp)
        return F[key]

    def json(self, obj, key):
        write_json(obj, self.path(key), self.stamp)
        return F[key]


# ---------------------------------------------------------------------------
# stages; each returns the list of files it wrote (relative to the output dir)


def _data_root(ctx):
    if ctx.cfg.data.source == "synth":
        return ctx.out / "data"
    return Path(ctx.cfg.data.path)


def _input_fingerprint(cfg):
    """Cheap digest of the on-disk dataset: manifest and demographics bytes plus bin sizes and mtimes."""
    if cfg.data.source == "synth":
        return "synth"
    root = Path(cfg.data.path)
    manifest = root / "manifest.json" if root.is_dir() else root
    if not manifest.exists():
        return "missing"
    h = hashlib.sha256(manifest.read_bytes())
    try:
        m = json.loads(manifest.read_text())
        demo = manifest.parent / m.get("demographics", "")
        if demo.is_file():
            h.update(demo.read_bytes())
        for entry in m.get("subjects", []):
            b = manifest.parent / entry.get("path", entry.get("id", "")) / "emg.bin"
            if b.exists():
                st = b.stat()
                h.update(f"{b}:{st.st_size}:{st.st_mtime_ns}".encode())
    except (ValueError, AttributeError, TypeError):
        pass
    return h.hexdigest()[:16]


def stage_ingest(ctx):
    from .synth.generator import generate_population, write_ground_truth

    written = []
    if ctx.cfg.data.source == "synth":
        spec = ctx.cfg.synth_spec()
        tensors, table, truth = generate_population(spec, jobs=ctx.jobs)
        root = _data_root(ctx)
        write_dataset(root, tensors, table)
        write_ground_truth(truth, root / "ground_truth.json")
        written += [str(p.relative_to(ctx.out)) for p in sorted(root.rglob("*")) if p.is_file()]
    tensors, table = load_dataset(_data_root(ctx))
    kept, removed = apply_exclusion(table)
    if len(kept) == 0:
        raise DataError("no subjects remain after exclusion")
    summary = {
        "n_subjects_listed": len(tensors),
        "excluded": removed,
        "included": kept.subjects,
        "missing_cells": {c: int(n) for c, n in kept.missing_mask.sum().items()},
        "subjects": [
            {
                "id": t.subject_id,
                "shape": list(t.data.shape),
                "sampling_rate_hz": t.sampling_rate_hz,
                "gestures": sorted(int(g) for g in np.unique(t.labels)),
            }
            for t in tensors
        ],
    }
    frame = kept.frame.reset_index()
    written.append(ctx.csv(frame, "included"))
    written.append(ctx.json(summary, "ingest"))
    return written


def _included(ctx):
    return read_demographics(ctx.path("included"))


def stage_impute(ctx):
    m = ctx.cfg.mice
    table, report = mice_impute(_included(ctx), n_iter=m.n_iter, seed=m.seed, noise=m.noise)
    return [ctx.csv(table.frame.reset_index(), "imputed"), ctx.json(report.to_dict(), "impute_report")]


def stage_extract(ctx):
    included = set(_included(ctx).subjects)
    tensors, _ = load_dataset(_data_root(ctx))
    tensors = [t for t in tensors if t.subject_id in included]
    fm = build_feature_matrix(tensors, ctx.cfg.features, ctx.cfg.data.window_fraction, jobs=ctx.jobs)
    meta = fm.metadata()
    meta["n_rows"] = len(fm)
    meta["subjects"] = fm.subjects
    return [ctx.csv(fm.frame, "features"), ctx.json(meta, "features_meta")]


def load_features(path):
    frame = read_csv(path, dtype={"subject": str})
    return FeatureMatrix(frame)


def stage_fit(ctx):
    fm = load_features(ctx.path("features"))
    demo = read_demographics(ctx.path("imputed"))
    design = standardize_design(fm, demo)
    lm = ctx.cfg.lmm
    fits = fit_all(design, tol=lm.tol, maxiter=lm.maxiter, df_method=lm.df_method, jobs=ctx.jobs)
    results, variance = results_tables(fits)
    n_bad = int((~variance["converged"] & ~variance["degenerate"]).sum())
    if n_bad:
        log.warning("%d of %d mixed models did not converge", n_bad, len(fits))
    return [ctx.csv(results, "lmm"), ctx.csv(variance, "variance")]


def stage_audit(ctx):
    results = read_csv(ctx.path("lmm"))
    a = ctx.cfg.audit
    flagged, summaries = audit.run_audit(results, a.fdr_family, a.alpha, a.eta2_min)
    table = flagged.rename(columns={"p": "p_raw"})[
        ["feature", "demographic", "beta", "se", "z", "p_raw", "p_fdr", "eta2_partial", "df_res", "significant"]
    ]
    summary = audit.summary_frame(summaries)
    effects = {
        "fdr_family": a.fdr_family,
        "alpha": a.alpha,
        "eta2_min": a.eta2_min,
        "n_pairs": len(table),
        "n_significant": int(table["significant"].sum()),
        "count_groups": {str(k): v for k, v in audit.count_groups(summaries).items()},
        "boxplots": audit.effectsize_distributions(flagged),
    }
    return [ctx.csv(table, "sensitivity"), ctx.csv(summary, "summary"), ctx.json(effects, "effects")]


def stage_pls(ctx):
    fm = load_features(ctx.path("features"))
    demo = read_demographics(ctx.path("imputed"))
    X, Y, fnames, dnames, _ = subject_matrices(fm, demo)
    s = ctx.cfg.spls
    n_comp = min(s.n_comp, X.shape[0] - 1)
    model = fit_spls(X, Y, keep_x=s.keep_x, n_comp=n_comp, feature_names=fnames, demographic_names=dnames)
    k = min(s.k_folds, X.shape[0])
    model.q2 = q2_crossval(X, Y, n_comp, k, s.seed, keep_x=s.keep_x)
    retained = model.retained(s.q2_threshold)
    layout = build_cim(model, retained or [0])

    comps = [f"comp{h + 1}" for h in range(n_comp)]
    load = pd.concat(
        [
            pd.DataFrame(model.x_loadings, columns=comps).assign(block="X", variable=fnames),
            pd.DataFrame(model.y_loadings, columns=comps).assign(block="Y", variable=dnames),
        ],
        ignore_index=True,
    )[["block", "variable"] + comps]
    q2 = pd.DataFrame(
        {
            "component": np.arange(1, n_comp + 1),
            "q2": model.q2,
            "retained": [h in retained for h in range(n_comp)],
            "threshold": s.q2_threshold,
            "lambda": model.lambdas,
            "converged": model.converged,
        }
    )
    cim = layout.to_dict()
    cim["keep_x"] = model.keep_x
    cim["retained_components"] = [h + 1 for h in retained]
    cim["note"] = "rendered component(s) fall back to component 1 when none exceeds the Q2 threshold"
    return [ctx.csv(load, "loadings"), ctx.csv(q2, "q2"), ctx.json(cim, "cim")]


def stage_report(ctx):
    from .spls import CimLayout

    sens = read_csv(ctx.path("sensitivity"))
    summary = read_csv(ctx.path("summary"), keep_default_na=False)
    effects = read_json(ctx.path("effects"))
    cim = read_json(ctx.path("cim"))
    layout = CimLayout(
        cim["row_order"],
        cim["col_order"],
        np.array(cim["cells"]),
        np.array(cim["row_dendrogram"]),
        np.array(cim["col_dendrogram"]),
        [c - 1 for c in cim["components"]],
        cim["row_names"],
        cim["col_names"],
    )
    plotting.figure_ranking(summary, ctx.path("fig1"), ctx.stamp)
    plotting.figure_effect_sizes(sens, effects["boxplots"], ctx.path("fig2"), ctx.stamp)
    plotting.figure_heatmap(sens, ctx.path("fig3"), ctx.stamp, feature_order=list(summary["feature"]))
    plotting.figure_cim(layout, ctx.path("fig4"), ctx.stamp)
    out = []
    for key in ("fig1", "fig2", "fig3", "fig4"):
        out += [F[key], str(Path(F[key]).with_suffix(".csv"))]
    return out


RUNNERS = {
    "ingest": stage_ingest,
    "impute": stage_impute,
    "extract": stage_extract,
    "fit": stage_fit,
    "audit": stage_audit,
    "pls": stage_pls,
    "report": stage_report,
}


# ---------------------------------------------------------------------------
# cache


def stage_key(cfg, stage, upstream_keys):
    parts = [__version__, stage, cfg.hash()] + [upstream_keys[u] for u in UPSTREAM[stage]]
    if stage == "ingest":
        parts.append(_input_fingerprint(cfg))
    return hashlib.sha256("|".join(parts).encode()).hexdigest()[:16]


def _record_path(out, stage):
    return out / ".cache" / f"{stage}.json"


def is_cached(out, stage, key):
    rec_path = _record_path(out, stage)
    if not rec_path.exists():
        return False
    try:
        rec = json.loads(rec_path.read_text())
    except ValueError:
        return False
    if rec.get("key") != key:
        return False
    for rel, digest in rec.get("outputs", {}).items():
        p = out / rel
        if not p.exists() or file_digest(p) != digest:
            return False
    return True


def _write_record(out, stage, key, files):
    rec = {"key": key, "outputs": {f: file_digest(out / f) for f in sorted(set(files))}}
    atomic_write_bytes(_record_path(out, stage), (json.dumps(rec, indent=2, sort_keys=True) + "\n").encode())


def stages_until(until):
    if until not in STAGES:
        raise ValueError(f"unknown stage {until!r}")
    needed = set()

    def visit(s):
        if s not in needed:
            needed.add(s)
            for u in UPSTREAM[s]:
                visit(u)

    visit(until)
    return [s for s in STAGES if s in needed]


def run_pipeline(cfg, until="report", out=None, jobs=None, force=False, echo=print):
    """Run every stage needed for ``until``; returns {stage: "ran" | "cached"}."""
    out = Path(out or cfg.out_dir)
    ctx = Context(cfg, out, jobs or cfg.jobs)
    keys, status = {}, {}
    for stage in stages_until(until):
        keys[stage] = stage_key(cfg, stage, keys)
        if not force and is_cached(out, stage, keys[stage]):
            status[stage] = "cached"
            echo(f"{stage:8s} cached")
            continue
        t0 = time.perf_counter()
        try:
            files = RUNNERS[stage](ctx)
        except SemgAuditError as exc:
            raise StageError(stage, exc) from exc
        except (np.linalg.LinAlgError, FloatingPointError) as exc:
            raise StageError(stage, NumericError(str(exc))) from exc
        _write_record(out, stage, keys[stage], files)
        status[stage] = "ran"
        echo(f"{stage:8s} done in {time.perf_counter() - t0:.1f}s")
    return status

