"""Single-chain regression imputation by chained equations."""

import logging
from dataclasses import dataclass, field

import numpy as np

from .dataset import DemographicTable
from .errors import DataError

log = logging.getLogger(__name__)


@dataclass
class ImputationReport:
    seed: int
    n_iterations: int
    noise: bool
    cells: list = field(default_factory=list)  # dicts: subject, column, value, trace
    final_change: float = 0.0

    def to_dict(self):
        return {
            "seed": self.seed,
            "n_iterations": self.n_iterations,
            "noise": self.noise,
            "final_change": self.final_change,
            "cells": self.cells,
        }


def _regress(X, y):
    design = np.column_stack([np.ones(len(X)), X])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    dof = max(len(y) - np.linalg.matrix_rank(design), 1)
    return coef, float(np.sqrt(resid @ resid / dof))


def mice_impute(table, n_iter=10, seed=0, noise=True):
    """Fill missing demographic cells; observed cells are never touched.

    Missing cells start at their column mean. Each round regresses every
    incomplete column on all other columns (least squares with intercept,
    fitted on rows where the target is observed) and replaces the missing
    cells with the prediction, plus Gaussian noise at the residual sd when
    ``noise`` is set.

    Returns ``(completed_table, ImputationReport)``.
    """
    frame = table.frame
    values = frame.to_numpy(dtype=float).copy()
    missing = np.isnan(values)
    report = ImputationReport(seed=seed, n_iterations=n_iter, noise=noise)
    if not missing.any():
        return DemographicTable(frame.copy(), dict(table.sex_encoding)), report

    columns = list(frame.columns)
    for j in np.flatnonzero(missing.all(axis=0)):
        raise DataError(f"column {columns[j]} is entirely missing; cannot impute")
    if missing.all(axis=1).any():
        sid = frame.index[np.flatnonzero(missing.all(axis=1))[0]]
        raise DataError(f"subject {sid} has no observed demographics")

    rng = np.random.default_rng(seed)
    col_means = np.nanmean(values, axis=0)
    values[missing] = np.take(col_means, np.nonzero(missing)[1])
    targets = [j for j in range(values.shape[1]) if missing[:, j].any()]
    traces = {(i, j): [] for i, j in zip(*np.nonzero(missing))}

    change = np.inf
    for it in range(n_iter):
        before = values[missing].copy()
        for j in targets:
            obs = ~missing[:, j]
            others = np.delete(values, j, axis=1)
            coef, sd = _regress(others[obs], values[obs, j])
            rows = np.flatnonzero(missing[:, j])
            pred = coef[0] + others[rows] @ coef[1:]
            if noise:
                pred = pred + rng.normal(0.0, sd, size=rows.size)
            values[rows, j] = pred
            for i in rows:
                traces[(i, j)].append(float(values[i, j]))
        change = float(np.max(np.abs(values[missing] - before)))
        log.debug("mice round %d: max change %.3g", it, change)
    report.final_change = change

    for (i, j), trace in sorted(traces.items()):
        report.cells.append(
            {"subject": str(frame.index[i]), "column": columns[j], "value": trace[-1] if trace else float(values[i, j]), "trace": trace}
        )
    if not np.isfinite(values).all():
        raise DataError("imputation produced non-finite values")
    out = frame.copy()
    out.loc[:, :] = values
    return DemographicTable(out, dict(table.sex_encoding)), report
