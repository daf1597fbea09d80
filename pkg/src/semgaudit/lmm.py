"""Linear mixed models with crossed random intercepts, fitted by REML.

Model: y = X b + Z_1 u_1 + ... + Z_k u_k + e with u_j ~ N(0, s_j^2 I) and
e ~ N(0, s^2 I). The REML criterion is profiled over b and s^2 and minimized
over the log variance ratios rho_j = log(s_j^2 / s^2).

All n-sized work is done once per design: the optimizer only sees q x q
cross-products (q = total number of random-effect levels).
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import linalg, optimize, sparse, stats

from . import DEMOGRAPHICS
from .errors import DataError, NumericError

log = logging.getLogger(__name__)

GROUP_FACTORS = ("subject", "gesture", "channel")
RHO_BOUNDS = (np.log(1e-12), np.log(1e6))
ZERO_VARIANCE = 1e-10


@dataclass
class LmmFit:
    feature_name: str
    names: list  # fixed-effect names, intercept first
    beta: np.ndarray
    se: np.ndarray
    z: np.ndarray
    p: np.ndarray
    sigma2: dict
    eta2_partial: np.ndarray  # one per non-intercept fixed effect
    r2_marginal: float
    r2_conditional: float
    n_obs: int
    df_res: np.ndarray
    converged: bool
    loglik_reml: float
    n_iter: int = 0
    grad_norm: float = 0.0
    criterion_trace: list = field(default_factory=list, repr=False)
    var_fixed: float = 0.0
    degenerate: bool = False

    @property
    def effects(self):
        return self.names[1:]

    def coef_table(self):
        return pd.DataFrame(
            {
                "beta": self.beta[1:],
                "se": self.se[1:],
                "z": self.z[1:],
                "p": self.p[1:],
                "eta2_partial": self.eta2_partial,
            },
            index=pd.Index(self.effects, name="demographic"),
        )


@dataclass
class Design:
    """Standardized fixed design, responses and grouping indices."""

    X: np.ndarray  # (n, 1 + n_demographics), intercept first
    Y: np.ndarray  # (n, n_features), z-scored
    groups: list  # integer level codes per factor
    fixed_names: list
    feature_names: list
    constant_features: list
    group_names: tuple = GROUP_FACTORS


def zscore(values, center_only=False):
    values = np.asarray(values, dtype=float)
    mu = values.mean(axis=0)
    if center_only:
        return values - mu
    sd = values.std(axis=0)
    if np.any(sd == 0):
        raise DataError("cannot standardize a zero-variance column")
    return (values - mu) / sd


def standardize_design(features, demo, binary=("Sex",)):
    """Build the standardized LMM design from a feature matrix and demographics.

    Demographic columns are z-scored over subjects (population sd); binary
    columns are only mean-centered. Feature responses are z-scored over all
    observations; constant features are left at zero and listed in
    ``constant_features``.
    """
    frame = features.frame
    subjects = list(dict.fromkeys(frame["subject"]))
    absent = [s for s in subjects if s not in demo.frame.index]
    if absent:
        raise DataError(f"subject {absent[0]} has feature rows but no demographics")
    table = demo.frame.loc[subjects, list(DEMOGRAPHICS)]
    if table.isna().any().any():
        raise DataError("demographics still contain missing cells; impute first")
    scaled = {}
    for col in DEMOGRAPHICS:
        vals = table[col].to_numpy(dtype=float)
        if vals.std() == 0:
            raise DataError(f"demographic column {col} has zero variance")
        scaled[col] = zscore(vals, center_only=col in binary)
    subj_scaled = pd.DataFrame(scaled, index=table.index)
    per_obs = subj_scaled.loc[frame["subject"]].to_numpy()
    X = np.column_stack([np.ones(len(frame)), per_obs])

    names = [c for c in frame.columns if c not in GROUP_FACTORS]
    raw = frame[names].to_numpy(dtype=float)
    sd = raw.std(axis=0)
    constant = [n for n, s in zip(names, sd) if s == 0]
    Y = np.zeros_like(raw)
    live = sd > 0
    Y[:, live] = (raw[:, live] - raw[:, live].mean(axis=0)) / sd[live]

    groups = [pd.factorize(frame[g])[0] for g in GROUP_FACTORS]
    return Design(X, Y, groups, ["Intercept"] + list(DEMOGRAPHICS), names, constant)


def partial_eta2(t, df_res):
    """Partial eta squared from a Wald statistic: t^2 / (t^2 + df)."""
    t2 = np.asarray(t, dtype=float) ** 2
    return t2 / (t2 + np.asarray(df_res, dtype=float))


def r2_decomposition(var_fixed, sigma2):
    """Marginal and conditional R^2 from the fixed-part variance and variance components."""
    random = sum(v for k, v in sigma2.items() if k != "residual")
    total = var_fixed + random + sigma2["residual"]
    if total <= 0:
        return 0.0, 0.0
    return var_fixed / total, (var_fixed + random) / total


class CrossedLmm:
    """REML fitter for one fixed design and a set of crossed grouping factors.

    Build once, then call :meth:`fit` for each response vector.
    """

    def __init__(self, X, groups, fixed_names=None, group_names=GROUP_FACTORS, df_method="residual"):
        X = np.asarray(X, dtype=float)
        self.n, self.p = X.shape
        self.X = X
        self.n_factors = len(groups)
        self.fixed_names = list(fixed_names or [f"x{i}" for i in range(self.p)])
        self.group_names = tuple(group_names)[: self.n_factors]
        if self.n <= self.p + self.n_factors:
            raise DataError(f"need more than {self.p + self.n_factors} observations, got {self.n}")
        blocks, self.block_of = [], []
        for k, g in enumerate(groups):
            codes, uniques = pd.factorize(np.asarray(g))
            if len(uniques) < 2:
                raise DataError(f"grouping factor {self.group_names[k]} needs at least 2 levels")
            if codes.size != self.n:
                raise DataError("grouping vector length does not match the design")
            blocks.append(sparse.csr_matrix((np.ones(self.n), (np.arange(self.n), codes)), shape=(self.n, len(uniques))))
            self.block_of += [k] * len(uniques)
        self.block_of = np.array(self.block_of)
        self.Z = sparse.hstack(blocks, format="csr")
        self.q = self.Z.shape[1]
        self.ZtZ = (self.Z.T @ self.Z).toarray()
        self.ZtX = np.asarray(self.Z.T @ X)
        self.XtX = X.T @ X
        self.rank = np.linalg.matrix_rank(X)
        if self.rank < self.p:
            raise NumericError("fixed-effect design is singular")
        self.df_method = df_method
        self.df_res = self._residual_df(groups)

    def _residual_df(self, groups):
        base = self.n - self.rank - self.n_factors
        df = np.full(self.p, float(base))
        if self.df_method == "residual":
            return df
        if self.df_method != "between":
            raise ValueError(f"unknown df_method {self.df_method!r}")
        # between-subject effects get df from the number of subjects
        codes = pd.factorize(np.asarray(groups[0]))[0]
        n_sub = codes.max() + 1
        between = []
        for j in range(self.p):
            col = self.X[:, j]
            means = np.bincount(codes, col) / np.bincount(codes)
            between.append(np.allclose(col, means[codes]))
        between = np.array(between)
        Xb = np.vstack([self.X[np.argmax(codes == s)] for s in range(n_sub)])[:, between]
        df[between] = n_sub - np.linalg.matrix_rank(Xb)
        return df

    # -- REML pieces ---------------------------------------------------------

    def _solve(self, rho, c, Xty, yty):
        gamma = np.exp(rho)
        lam = np.sqrt(gamma[self.block_of])
        M = np.eye(self.q) + lam[:, None] * self.ZtZ * lam[None, :]
        chol = linalg.cho_factor(M, lower=True)
        logdet_m = 2.0 * np.log(np.diag(chol[0])).sum()

        def hinv(UV, ZU, ZV):
            # U' H^-1 V given U'V, Z'U, Z'V; H = I + Z diag(gamma) Z'
            lz = lam * ZV if ZV.ndim == 1 else lam[:, None] * ZV
            solved = linalg.cho_solve(chol, lz)
            solved = lam * solved if solved.ndim == 1 else lam[:, None] * solved
            return UV - ZU.T @ solved

        lzx = lam[:, None] * self.ZtX
        lc = lam * c
        S_zx = linalg.cho_solve(chol, lzx)
        S_c = linalg.cho_solve(chol, lc)
        xhx = self.XtX - lzx.T @ S_zx
        xhy = Xty - lzx.T @ S_c
        yhy = yty - lc @ S_c
        try:
            xchol = linalg.cho_factor(xhx, lower=True)
        except linalg.LinAlgError as exc:
            raise NumericError("X' V^-1 X is not positive definite") from exc
        beta = linalg.cho_solve(xchol, xhy)
        ypy = yhy - xhy @ beta
        logdet_x = 2.0 * np.log(np.diag(xchol[0])).sum()
        return dict(
            gamma=gamma, lam=lam, chol=chol, xchol=xchol, beta=beta, ypy=ypy,
            logdet_m=logdet_m, logdet_x=logdet_x, hinv=hinv, xhx=xhx,
        )

    def _objective(self, rho, c, Xty, yty, with_grad=True):
        s = self._solve(rho, c, Xty, yty)
        dfree = self.n - self.p
        if s["ypy"] <= 0:
            raise NumericError("penalized residual sum of squares is not positive")
        dev = s["logdet_m"] + s["logdet_x"] + dfree * np.log(s["ypy"])
        if not with_grad:
            return dev, None, s
        hinv = s["hinv"]
        zhz = hinv(self.ZtZ, self.ZtZ, self.ZtZ)
        zhx = hinv(self.ZtX, self.ZtZ, self.ZtX)
        zhy = hinv(c, self.ZtZ, c)
        # Z'PZ diagonal and Z'Py
        xinv_xz = linalg.cho_solve(s["xchol"], zhx.T)
        diag_zpz = np.diag(zhz) - np.einsum("ij,ji->i", zhx, xinv_xz)
        zpy = zhy - zhx @ s["beta"]
        grad_gamma = np.empty(self.n_factors)
        for k in range(self.n_factors):
            sel = self.block_of == k
            grad_gamma[k] = diag_zpz[sel].sum() - dfree * (zpy[sel] @ zpy[sel]) / s["ypy"]
        return dev, grad_gamma * s["gamma"], s

    def reml_criterion(self, rho, y):
        """-2 x restricted log-likelihood at log variance ratios ``rho``."""
        c, Xty, yty = self._moments(y)
        dev, _, _ = self._objective(np.asarray(rho, float), c, Xty, yty, with_grad=False)
        dfree = self.n - self.p
        return dev + dfree * (1.0 + np.log(2.0 * np.pi / dfree))

    def _moments(self, y):
        y = np.asarray(y, dtype=float)
        return np.asarray(self.Z.T @ y).ravel(), self.X.T @ y, float(y @ y)

    # -- fitting ---------------------------------------------------------------

    def fit(self, y, feature_name="", tol=1e-6, maxiter=200, rho0=None):
        y = np.asarray(y, dtype=float)
        if y.shape != (self.n,):
            raise DataError(f"response has shape {y.shape}, expected ({self.n},)")
        if not np.isfinite(y).all():
            raise NumericError(f"non-finite response values for {feature_name}")
        c, Xty, yty = self._moments(y)
        x0 = np.zeros(self.n_factors) if rho0 is None else np.asarray(rho0, float)
        rho, dev, grad, s, nit, path = self._optimize(x0, c, Xty, yty, tol, maxiter)
        path = [x0] + path
        # d/d rho = gamma * d/d gamma vanishes as gamma -> 0, so a component can
        # stall near zero while the criterion still falls as it grows; rescan it
        for _ in range(3):
            escape = (rho < np.log(1e-8)) & (grad / s["gamma"] < -tol)
            if not escape.any():
                break
            start = rho.copy()
            for k in np.flatnonzero(escape):
                start[k] = self._scan_component(start, k, c, Xty, yty)
            if self._objective(start, c, Xty, yty, with_grad=False)[0] >= dev:
                break
            r2, d2, g2, s2, n2, p2 = self._optimize(start, c, Xty, yty, tol, maxiter)
            if d2 > dev:
                break
            rho, dev, grad, s = r2, d2, g2, s2
            nit += n2
            path += [start] + p2
        grad_norm = self._projected_norm(rho, grad)
        trace = [self._objective(r, c, Xty, yty, with_grad=False)[0] for r in path]
        converged = grad_norm < tol
        return self._summarize(y, rho, s, dev, feature_name, converged, nit, grad_norm, trace)

    def _scan_component(self, rho, k, c, Xty, yty):
        grid = np.linspace(np.log(1e-6), np.log(1e2), 25)
        vals = []
        for g in grid:
            r = rho.copy()
            r[k] = g
            vals.append(self._objective(r, c, Xty, yty, with_grad=False)[0])
        return grid[int(np.argmin(vals))]

    def _optimize(self, x0, c, Xty, yty, tol, maxiter):
        """L-BFGS-B on the log ratios, then guarded Newton polish; returns accepted iterates."""
        lo, hi = RHO_BOUNDS

        def fun(rho):
            dev, grad, _ = self._objective(rho, c, Xty, yty)
            return dev, grad

        accepted = []
        res = optimize.minimize(
            fun,
            x0,
            jac=True,
            method="L-BFGS-B",
            bounds=[(lo, hi)] * self.n_factors,
            options={"maxiter": maxiter, "gtol": tol, "ftol": 1e-15, "maxcor": 10},
            callback=lambda xk: accepted.append(np.array(xk)),
        )
        rho, nit = res.x, res.nit
        dev, grad, s = self._objective(rho, c, Xty, yty)
        grad_norm = self._projected_norm(rho, grad)
        # line-search stalls leave |grad| just above tol; finish with guarded Newton steps
        for _ in range(20):
            if grad_norm < tol:
                break
            step = self._newton_step(rho, grad, c, Xty, yty)
            if step is None:
                break
            t = 1.0
            while t > 1e-6:
                cand = np.clip(rho + t * step, lo, hi)
                cdev, cgrad, cs = self._objective(cand, c, Xty, yty)
                # decreases below the criterion's float resolution count as ties
                if cdev <= dev + 64 * np.finfo(float).eps * abs(dev) and (
                    cdev < dev or self._projected_norm(cand, cgrad) < grad_norm
                ):
                    break
                t *= 0.5
            else:
                break
            rho, dev, grad, s = cand, cdev, cgrad, cs
            accepted.append(rho.copy())
            grad_norm = self._projected_norm(rho, grad)
            nit += 1
        if not accepted or not np.array_equal(accepted[-1], rho):
            accepted.append(np.array(rho))
        return rho, dev, grad, s, nit, accepted

    @staticmethod
    def _projected_norm(rho, grad):
        # components pinned at a bound with an outward gradient do not count
        lo, hi = RHO_BOUNDS
        proj = grad.copy()
        proj[(rho <= lo + 1e-9) & (grad > 0)] = 0.0
        proj[(rho >= hi - 1e-9) & (grad < 0)] = 0.0
        return float(np.abs(proj).max())

    def _newton_step(self, rho, grad, c, Xty, yty, h=1e-5):
        lo, hi = RHO_BOUNDS
        free = ~(((rho <= lo + 1e-9) & (grad > 0)) | ((rho >= hi - 1e-9) & (grad < 0)))
        k = self.n_factors
        hess = np.empty((k, k))
        for j in range(k):
            e = np.zeros(k)
            e[j] = h
            gp = self._objective(rho + e, c, Xty, yty)[1]
            gm = self._objective(rho - e, c, Xty, yty)[1]
            hess[:, j] = (gp - gm) / (2 * h)
        hess = 0.5 * (hess + hess.T)
        idx = np.flatnonzero(free)
        if idx.size == 0:
            return None
        sub = hess[np.ix_(idx, idx)]
        w, v = np.linalg.eigh(sub)
        w = np.maximum(np.abs(w), 1e-8)
        step = np.zeros(k)
        step[idx] = -(v @ ((v.T @ grad[idx]) / w))
        return step

    def _summarize(self, y, rho, s, dev, feature_name, converged, nit, grad_norm, trace):
        dfree = self.n - self.p
        sigma2_res = s["ypy"] / dfree
        sigma2 = {}
        for k, name in enumerate(self.group_names):
            v = float(s["gamma"][k] * sigma2_res)
            sigma2[name] = 0.0 if v < ZERO_VARIANCE else v
        sigma2["residual"] = float(sigma2_res)
        beta = s["beta"]
        cov = sigma2_res * linalg.cho_solve(s["xchol"], np.eye(self.p))
        se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
        z = np.divide(beta, se, out=np.zeros_like(beta), where=se > 0)
        p = np.clip(2.0 * stats.norm.sf(np.abs(z)), np.finfo(float).tiny, 1.0)
        eta2 = partial_eta2(z[1:], self.df_res[1:])
        var_fixed = float(np.var(self.X[:, 1:] @ beta[1:])) if self.p > 1 else 0.0
        r2m, r2c = r2_decomposition(var_fixed, sigma2)
        loglik = -0.5 * (dev + dfree * (1.0 + np.log(2.0 * np.pi / dfree)))
        return LmmFit(
            feature_name=feature_name,
            names=list(self.fixed_names),
            beta=beta,
            se=se,
            z=z,
            p=p,
            sigma2=sigma2,
            eta2_partial=eta2,
            r2_marginal=float(r2m),
            r2_conditional=float(r2c),
            n_obs=self.n,
            df_res=self.df_res[1:].copy(),
            converged=bool(converged),
            loglik_reml=float(loglik),
            n_iter=int(nit),
            grad_norm=grad_norm,
            criterion_trace=[float(v) for v in trace],
            var_fixed=var_fixed,
        )

    def degenerate_fit(self, feature_name):
        """Placeholder result for a constant response: no effects, no variance."""
        k = self.p
        sigma2 = {name: 0.0 for name in self.group_names}
        sigma2["residual"] = 0.0
        return LmmFit(
            feature_name=feature_name,
            names=list(self.fixed_names),
            beta=np.zeros(k),
            se=np.zeros(k),
            z=np.zeros(k),
            p=np.ones(k),
            sigma2=sigma2,
            eta2_partial=np.zeros(k - 1),
            r2_marginal=0.0,
            r2_conditional=0.0,
            n_obs=self.n,
            df_res=self.df_res[1:].copy(),
            converged=False,
            loglik_reml=float("nan"),
            degenerate=True,
        )


def fit_lmm(y, X, groups, feature_name="", fixed_names=None, tol=1e-6, maxiter=200, df_method="residual"):
    """Fit one response; see :class:`CrossedLmm` for repeated fits on one design."""
    model = CrossedLmm(X, groups, fixed_names, df_method=df_method)
    return model.fit(y, feature_name, tol=tol, maxiter=maxiter)


def _fit_columns(args):
    model, Y, names, constant, tol, maxiter = args
    out = []
    for j, name in enumerate(names):
        if name in constant:
            out.append(model.degenerate_fit(name))
        else:
            out.append(model.fit(Y[:, j], name, tol=tol, maxiter=maxiter))
    return out


def fit_all(design, tol=1e-6, maxiter=200, df_method="residual", jobs=1):
    """Fit every feature column of a :class:`Design`; order follows ``design.feature_names``."""
    model = CrossedLmm(design.X, design.groups, design.fixed_names, design.group_names, df_method)
    names = design.feature_names
    constant = set(design.constant_features)
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        chunks = np.array_split(np.arange(len(names)), jobs)
        tasks = [(model, design.Y[:, idx], [names[i] for i in idx], constant, tol, maxiter) for idx in chunks if idx.size]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_fit_columns, tasks))
        fits = [f for part in parts for f in part]
    else:
        fits = _fit_columns((model, design.Y, names, constant, tol, maxiter))
    for f in fits:
        if not f.converged and not f.degenerate:
            log.warning("LMM for %s did not converge (grad %.2e)", f.feature_name, f.grad_norm)
    return fits


def results_tables(fits):
    """Long table (feature x demographic) and per-feature variance table."""
    rows, var_rows = [], []
    for f in fits:
        for j, dem in enumerate(f.effects):
            rows.append(
                {
                    "feature": f.feature_name,
                    "demographic": dem,
                    "beta": f.beta[j + 1],
                    "se": f.se[j + 1],
                    "z": f.z[j + 1],
                    "p": f.p[j + 1],
                    "eta2_partial": f.eta2_partial[j],
                    "df_res": f.df_res[j],
                }
            )
        var_rows.append(
            {
                "feature": f.feature_name,
                **{f"sigma2_{k}": v for k, v in f.sigma2.items()},
                "var_fixed": f.var_fixed,
                "r2_marginal": f.r2_marginal,
                "r2_conditional": f.r2_conditional,
                "n_obs": f.n_obs,
                "converged": f.converged,
                "degenerate": f.degenerate,
                "loglik_reml": f.loglik_reml,
                "n_iter": f.n_iter,
            }
        )
    return pd.DataFrame(rows), pd.DataFrame(var_rows)
