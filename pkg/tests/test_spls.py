import itertools

import numpy as np
import pytest

from semgaudit.errors import NumericError
from semgaudit.spls import (
    Q2_THRESHOLD,
    build_cim,
    cim_from_cells,
    fit_spls,
    keep_threshold,
    q2_crossval,
    soft_threshold,
    standardize_columns,
)


def orthogonal_design(seed, n=1000, p=147):
    """Centered X with X'X = n I exactly, so the X'Y direction of Y = Xw is w itself."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    X -= X.mean(axis=0)
    Q, _ = np.linalg.qr(X)
    return Q * np.sqrt(n), rng


def naive_complete_linkage(rows):
    """Merge order of brute-force complete linkage (list of frozensets)."""
    clusters = [frozenset([i]) for i in range(len(rows))]
    dist = lambda a, b: max(np.linalg.norm(rows[i] - rows[j]) for i in a for j in b)  # noqa: E731
    merges = []
    while len(clusters) > 1:
        a, b = min(itertools.combinations(clusters, 2), key=lambda ab: dist(*ab))
        clusters = [c for c in clusters if c not in (a, b)] + [a | b]
        merges.append(a | b)
    return merges


class TestOperators:
    def test_soft_threshold(self):
        assert soft_threshold(0.5, 0.2) == pytest.approx(0.3)
        assert soft_threshold(-0.1, 0.2) == 0
        assert soft_threshold(-0.5, 0.2) == pytest.approx(-0.3)

    def test_keep_threshold(self):
        a = np.array([0.1, -3.0, 2.0, 0.5])
        assert np.count_nonzero(soft_threshold(a, keep_threshold(a, 2))) == 2
        assert keep_threshold(a, 4) == 0.0

    def test_standardize_constant_column(self):
        A = np.column_stack([np.arange(5.0), np.full(5, 2.0)])
        S = standardize_columns(A)
        assert S[:, 1].tolist() == [0.0] * 5 and S[:, 0].std() == pytest.approx(1.0)


class TestFit:
    def _random(self, seed=0, n=81, p=147, q=12):
        rng = np.random.default_rng(seed)
        X = standardize_columns(rng.normal(size=(n, p)))
        Y = standardize_columns(X[:, :q] * 0.5 + rng.normal(size=(n, q)))
        return X, Y

    def test_invariants(self):
        X, Y = self._random()
        m = fit_spls(X, Y, keep_x=50, n_comp=3)
        for h in range(3):
            assert np.linalg.norm(m.x_loadings[:, h]) == pytest.approx(1, abs=1e-12)
            assert np.linalg.norm(m.y_loadings[:, h]) == pytest.approx(1, abs=1e-12)
            assert np.count_nonzero(m.x_loadings[:, h]) <= 50
            v = m.y_loadings[:, h]
            assert v[np.argmax(np.abs(v))] > 0
        T = m.x_scores
        G = T.T @ T
        off = G - np.diag(np.diag(G))
        assert np.abs(off).max() < 1e-8 * np.abs(np.diag(G)).max()
        assert all(np.diff(m.cov_norms) < 0)
        assert all(m.converged)

    def test_keep_one(self):
        X, Y = self._random(1)
        m = fit_spls(X, Y, keep_x=1)
        nz = np.flatnonzero(m.x_loadings[:, 0])
        v = m.y_loadings[:, 0]
        assert nz.size == 1 and nz[0] == np.argmax(np.abs(X.T @ Y @ v))

    def test_dense_matches_svd(self):
        for seed in range(5):
            X, Y = self._random(seed, n=40, p=15, q=6)
            m = fit_spls(X, Y, keep_x=15, n_comp=1)
            U, s, Vt = np.linalg.svd(X.T @ Y)
            u, v = U[:, 0], Vt[0]
            sign = np.sign(v[np.argmax(np.abs(v))])
            np.testing.assert_allclose(m.x_loadings[:, 0], sign * u, atol=1e-6)
            np.testing.assert_allclose(m.y_loadings[:, 0], sign * v, atol=1e-6)
            assert m.lambdas[0] == 0.0

    def test_rank_one_recovery(self):
        X, rng = orthogonal_design(0, n=300)
        w = rng.normal(size=147)
        w /= np.linalg.norm(w)
        m = fit_spls(X, X @ w, keep_x=147)
        assert abs(m.x_loadings[:, 0] @ w) > 0.999

    def test_column_negation_sign_convention(self):
        X, Y = self._random(2)
        a = fit_spls(X, Y)
        b = fit_spls(X, -Y)
        # negating every demographic flips v; the convention keeps its largest entry positive
        np.testing.assert_allclose(np.abs(a.y_loadings), np.abs(b.y_loadings), atol=1e-9)
        assert b.y_loadings[np.argmax(np.abs(b.y_loadings[:, 0])), 0] > 0
        np.testing.assert_allclose(
            build_cim(a).cells, -build_cim(b).cells, atol=1e-9
        )

    def test_zero_covariance(self):
        X = np.zeros((10, 3))
        with pytest.raises(NumericError):
            fit_spls(X, np.random.default_rng(0).normal(size=(10, 2)))


class TestQ2:
    def test_deterministic_and_loo(self):
        rng = np.random.default_rng(0)
        X = standardize_columns(rng.normal(size=(30, 20)))
        Y = standardize_columns(X[:, :3] + rng.normal(size=(30, 3)))
        a = q2_crossval(X, Y, n_comp=2, k_folds=30, seed=5, keep_x=10)
        b = q2_crossval(X, Y, n_comp=2, k_folds=30, seed=5, keep_x=10)
        assert a.tobytes() == b.tobytes()

    def test_rank_one_high(self):
        X, rng = orthogonal_design(1)
        w = rng.normal(size=147)
        w /= np.linalg.norm(w)
        assert q2_crossval(X, X @ w, keep_x=147)[0] > 0.9

    def test_noise_low(self):
        rng = np.random.default_rng(3)
        X = standardize_columns(rng.normal(size=(81, 147)))
        Y = standardize_columns(rng.normal(size=(81, 12)))
        assert q2_crossval(X, Y, keep_x=50)[0] < Q2_THRESHOLD

    @pytest.mark.parametrize("k", [1, 100])
    def test_bad_folds(self, k):
        X = np.random.default_rng(0).normal(size=(20, 4))
        with pytest.raises(ValueError):
            q2_crossval(X, X[:, :2], k_folds=k)

    def test_zero_variance_fold(self):
        X = np.zeros((20, 4))
        X[0] = 1.0
        Y = np.random.default_rng(0).normal(size=(20, 2))
        with pytest.raises(NumericError):
            q2_crossval(X, Y, k_folds=2, seed=0)


class TestCim:
    def test_identical_rows_merge_first(self):
        cells = np.array([[1.0, 2.0], [5.0, -1.0], [1.0, 2.0], [3.0, 3.0]])
        layout = cim_from_cells(cells)
        assert set(layout.row_linkage[0, :2].astype(int)) == {0, 2}
        assert layout.row_linkage[0, 2] == 0
        pos = {r: i for i, r in enumerate(layout.row_order)}
        assert abs(pos[0] - pos[2]) == 1

    def test_sign_blocks_contiguous_and_brute_force(self):
        u = np.array([0.6, 0.5, 0.4, -0.3, -0.2, -0.35])
        v = np.array([0.7, 0.5, 0.51])
        cells = np.outer(u, v)
        layout = cim_from_cells(cells)
        neg = [i for i in layout.row_order if u[i] < 0]
        idx = [layout.row_order.index(i) for i in neg]
        assert max(idx) - min(idx) == len(neg) - 1
        # merge sets match a brute-force complete-linkage run
        ours, n = [], len(u)
        members = {i: frozenset([i]) for i in range(n)}
        for k, (a, b, _, _) in enumerate(layout.row_linkage):
            members[n + k] = members[int(a)] | members[int(b)]
            ours.append(members[n + k])
        assert ours == naive_complete_linkage(cells)

    def test_full_shape(self):
        rng = np.random.default_rng(0)
        X = standardize_columns(rng.normal(size=(81, 147)))
        Y = standardize_columns(X[:, :12] + rng.normal(size=(81, 12)))
        layout = build_cim(fit_spls(X, Y))
        assert sorted(layout.row_order) == list(range(147))
        assert sorted(layout.col_order) == list(range(12))
        assert np.linalg.matrix_rank(layout.cells) == 1
        d = layout.to_dict()
        assert d["linkage"] == "complete" and len(d["cells"]) == 147
