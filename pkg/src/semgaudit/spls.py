"""Sparse PLS (regression mode), Q2 cross-validation and clustered image map layout."""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.cluster import hierarchy

from .errors import DataError, NumericError

log = logging.getLogger(__name__)

Q2_THRESHOLD = 0.0975


def soft_threshold(x, lam):
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.maximum(np.abs(x) - lam, 0.0)


def standardize_columns(A):
    """Center and scale to unit population sd; constant columns become zero."""
    A = np.asarray(A, dtype=float)
    A = A - A.mean(axis=0)
    sd = A.std(axis=0)
    out = np.zeros_like(A)
    live = sd > 0
    out[:, live] = A[:, live] / sd[live]
    return out


def keep_threshold(a, keep):
    """Smallest lambda leaving ``keep`` nonzeros after soft-thresholding ``a``."""
    mags = np.sort(np.abs(a))[::-1]
    if keep >= a.size:
        return 0.0
    return float(mags[keep])


@dataclass
class SplsModel:
    n_components: int
    keep_x: int
    x_loadings: np.ndarray  # (p, H), unit columns, sparse
    y_loadings: np.ndarray  # (q, H), unit columns
    x_scores: np.ndarray  # (n, H)
    y_scores: np.ndarray
    lambdas: list = field(default_factory=list)
    converged: list = field(default_factory=list)
    n_iter: list = field(default_factory=list)
    cov_norms: list = field(default_factory=list)  # ||X_h^T Y_h||_F before each component
    q2: np.ndarray = None
    feature_names: list = None
    demographic_names: list = None

    def retained(self, threshold=Q2_THRESHOLD):
        """Component indices whose Q2 exceeds the threshold (component 0 when Q2 is absent)."""
        if self.q2 is None:
            return [0]
        return [h for h, q in enumerate(self.q2) if q > threshold]


def _component(X, Y, keep_x, tol, max_iter):
    M = X.T @ Y
    if not np.any(M):
        raise NumericError("cross-covariance between X and Y is zero")
    _, _, vt = np.linalg.svd(M, full_matrices=False)
    v = vt[0]
    u = np.zeros(M.shape[0])
    lam = 0.0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        a = M @ v
        lam = keep_threshold(a, keep_x)
        u_new = soft_threshold(a, lam)
        nu = np.linalg.norm(u_new)
        if nu == 0:
            raise NumericError("all feature loadings were thresholded to zero")
        u_new /= nu
        b = M.T @ u_new
        v_new = b / np.linalg.norm(b)
        delta = max(np.abs(u_new - u).max(), np.abs(v_new - v).max())
        u, v = u_new, v_new
        if delta < tol:
            converged = True
            break
    k = np.argmax(np.abs(v))
    if v[k] < 0:
        u, v = -u, -v
    return u, v, lam, converged, it


def _deflate(A, t):
    return A - np.outer(t, A.T @ t / (t @ t))


def fit_spls(X, Y, keep_x=50, n_comp=1, tol=1e-9, max_iter=500, feature_names=None, demographic_names=None):
    """Sparse PLS in regression mode on column-standardized X (n, p) and Y (n, q).

    Each component alternates u = soft(X'Y v, lambda)/norm, v = Y'X u/norm
    from the leading singular pair of X'Y, with lambda set so exactly
    ``keep_x`` feature loadings stay nonzero. X and Y are then deflated by
    regression on the X score. The largest-magnitude demographic loading of
    each component is made positive.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.shape[0] != Y.shape[0]:
        raise DataError(f"X has {X.shape[0]} rows but Y has {Y.shape[0]}")
    n, p = X.shape
    q = Y.shape[1]
    keep_x = int(min(keep_x, p))
    if keep_x < 1:
        raise ValueError("keep_x must be at least 1")
    U, V, T, S = (np.zeros((p, n_comp)), np.zeros((q, n_comp)), np.zeros((n, n_comp)), np.zeros((n, n_comp)))
    model = SplsModel(n_comp, keep_x, U, V, T, S, feature_names=feature_names, demographic_names=demographic_names)
    Xh, Yh = X.copy(), Y.copy()
    for h in range(n_comp):
        model.cov_norms.append(float(np.linalg.norm(Xh.T @ Yh)))
        u, v, lam, ok, it = _component(Xh, Yh, keep_x, tol, max_iter)
        if not ok:
            log.warning("sPLS component %d did not converge in %d iterations", h + 1, max_iter)
        t = Xh @ u
        U[:, h], V[:, h], T[:, h], S[:, h] = u, v, t, Yh @ v
        model.lambdas.append(lam)
        model.converged.append(ok)
        model.n_iter.append(it)
        Xh, Yh = _deflate(Xh, t), _deflate(Yh, t)
    return model


def _fold_ids(n, k, seed):
    if k < 2:
        raise ValueError("k_folds must be at least 2")
    if k > n:
        raise ValueError(f"k_folds={k} exceeds {n} observations")
    perm = np.random.default_rng(seed).permutation(n)
    return np.array_split(perm, k)


def q2_crossval(X, Y, n_comp=1, k_folds=5, seed=0, keep_x=50, tol=1e-9, max_iter=500):
    """Q2_h = 1 - PRESS_h / RSS_{h-1} per component by k-fold cross-validation.

    Component h is evaluated on the full-data residual matrices left after
    h-1 components: each fold fits one sparse component on the training
    rows and predicts the held-out rows of the Y residual by regression on
    the X score. RSS_{h-1} is the squared norm of that Y residual.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    folds = _fold_ids(X.shape[0], k_folds, seed)
    q2 = np.zeros(n_comp)
    Xh, Yh = X.copy(), Y.copy()
    for h in range(n_comp):
        rss = float(np.sum(Yh**2))
        if rss == 0:
            raise NumericError(f"Y residual has zero variance before component {h + 1}")
        press = 0.0
        for i, test in enumerate(folds):
            train = np.setdiff1d(np.arange(X.shape[0]), test)
            Xt, Yt = Xh[train], Yh[train]
            if not np.any(Xt.std(axis=0)) or not np.any(Yt.std(axis=0)):
                raise NumericError(f"training fold {i} has zero variance")
            u, _, _, _, _ = _component(Xt, Yt, keep_x, tol, max_iter)
            t = Xt @ u
            d = Yt.T @ t / (t @ t)
            pred = np.outer(Xh[test] @ u, d)
            press += float(np.sum((Yh[test] - pred) ** 2))
        q2[h] = 1.0 - press / rss
        u, _, _, _, _ = _component(Xh, Yh, keep_x, tol, max_iter)
        t = Xh @ u
        Xh, Yh = _deflate(Xh, t), _deflate(Yh, t)
    return q2


@dataclass
class CimLayout:
    row_order: list
    col_order: list
    cells: np.ndarray  # (p, q) in original order
    row_linkage: np.ndarray
    col_linkage: np.ndarray
    components: list
    row_names: list = None
    col_names: list = None

    def ordered_cells(self):
        return self.cells[np.ix_(self.row_order, self.col_order)]

    def to_dict(self):
        return {
            "components": [int(c) + 1 for c in self.components],
            "linkage": "complete",
            "metric": "euclidean",
            "row_names": self.row_names,
            "col_names": self.col_names,
            "row_order": [int(i) for i in self.row_order],
            "col_order": [int(i) for i in self.col_order],
            "row_dendrogram": self.row_linkage.tolist(),
            "col_dendrogram": self.col_linkage.tolist(),
            "cells": self.cells.tolist(),
        }


def _cluster(rows):
    if rows.shape[0] < 2:
        return np.zeros((0, 4)), [0] * rows.shape[0]
    Z = hierarchy.linkage(rows, method="complete", metric="euclidean")
    return Z, [int(i) for i in hierarchy.leaves_list(Z)]


def cim_from_cells(cells, components=(0,), row_names=None, col_names=None):
    cells = np.asarray(cells, dtype=float)
    row_link, row_order = _cluster(cells)
    col_link, col_order = _cluster(cells.T)
    return CimLayout(row_order, col_order, cells, row_link, col_link, list(components), row_names, col_names)


def build_cim(model, components=None):
    """Cluster the loading-product matrix u v' of the retained components.

    Rows (features) and columns (demographics) are ordered by complete-linkage
    clustering on Euclidean distance.
    """
    comps = list(components) if components is not None else model.retained()
    if not comps:
        comps = [0]
    cells = model.x_loadings[:, comps] @ model.y_loadings[:, comps].T
    return cim_from_cells(cells, comps, model.feature_names, model.demographic_names)


def subject_matrices(features, demo):
    """Standardized subject-level X (feature means over gestures and channels) and Y."""
    from . import DEMOGRAPHICS

    means = features.subject_means()
    table = demo.frame.loc[means.index, list(DEMOGRAPHICS)]
    if table.isna().any().any():
        raise DataError("demographics contain missing cells; impute first")
    X = standardize_columns(means.to_numpy(dtype=float))
    Y = standardize_columns(table.to_numpy(dtype=float))
    return X, Y, list(means.columns), list(DEMOGRAPHICS), list(means.index)
