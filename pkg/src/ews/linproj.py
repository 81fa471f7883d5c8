"""Per-window linear projections: AR(k) residuals and covariate-lag fits.

Both regressions carry an intercept, pick their lag length by BIC over a
common effective sample and are solved by SVD least squares. Candidate
lags are nested, so one QR factorisation of the largest design yields the
residual sum of squares of every smaller one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ARFit:
    order: int
    coefficients: np.ndarray  # intercept first, then lags 1..order
    residuals: np.ndarray
    fitted: np.ndarray
    bic: float


@dataclass(frozen=True)
class CovProjection:
    lag: int
    intercept: float
    coefficients: np.ndarray  # shape (d, lag); [j, s-1] multiplies X_{t-s}^{(j)}
    fitted: np.ndarray
    rss: float
    tss: float
    rank: int

    @property
    def r_squared(self):
        return 0.0 if self.tss == 0 else 1.0 - self.rss / self.tss


def ols(design, y):
    """Least squares via SVD; returns ``(coef, fitted, rss, rank)``.

    Rank-deficient designs get the minimum-norm solution, so exactly
    degenerate columns receive a zero coefficient.
    """
    coef, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    fitted = design @ coef
    resid = y - fitted
    return coef, fitted, float(resid @ resid), int(rank)


def nested_rss(design, y, tol=1e-10):
    """RSS of ``y`` on each leading column block ``design[:, :j]``.

    Entry ``j - 1`` belongs to the first ``j`` columns. Entries from the
    first numerically dependent column on are NaN; callers fall back to
    :func:`ols` there.
    """
    Q, R = np.linalg.qr(design)
    z = Q.T @ y
    rss = float(y @ y) - np.cumsum(z * z)
    diag = np.abs(np.diag(R))
    bad = np.flatnonzero(diag <= tol * max(diag.max(), np.finfo(float).tiny))
    rss = np.maximum(rss, 0.0)
    if len(bad):
        rss[bad[0]:] = np.nan
    return rss


def bic(rss, n, n_params, tss):
    # relative floor keeps exact fits finite; they then tie and the
    # smaller model wins
    rss = max(rss, 1e-20 * tss, np.finfo(float).tiny)
    return n * np.log(rss / n) + n_params * np.log(n)


def ar_design(y, order, start):
    """Rows ``start..len(y)-1`` of ``[1, y_{t-1}, ..., y_{t-order}]``."""
    y = np.asarray(y, dtype=float)
    n = len(y) - start
    cols = [np.ones(n)]
    cols += [y[start - s:len(y) - s] for s in range(1, order + 1)]
    return np.column_stack(cols)


def lag_matrix(X, lag, n):
    """Lagged covariates for the last ``n`` rows of ``X``.

    Columns are ordered covariate-major: ``X^{(1)}_{t-1..t-lag}``, then
    ``X^{(2)}``, and so on. ``X`` needs at least ``n + lag`` rows.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    N = X.shape[0]
    if N < n + lag:
        raise ValueError("not enough covariate history for requested lag")
    cols = [X[N - n - s:N - s, j] for j in range(X.shape[1])
            for s in range(1, lag + 1)]
    return np.column_stack(cols) if cols else np.empty((n, 0))


def fit_ar(y, max_order, start=None) -> ARFit:
    """Fit AR(k) with intercept, choosing ``k in 0..max_order`` by BIC.

    Parameters
    ----------
    y : array_like
        Target values of one window.
    max_order : int
        Largest order tried.
    start : int, optional
        First row of the common effective sample. Defaults to ``max_order``;
        must be at least ``max_order``.

    Returns
    -------
    ARFit
        Residuals and fitted values cover rows ``start..len(y)-1``. Orders
        whose design is rank deficient are skipped.
    """
    y = np.asarray(y, dtype=float)
    start = max_order if start is None else start
    if start < max_order:
        raise ValueError("start must be >= max_order")
    if len(y) - start < max_order + 2:
        raise ValueError("window too short for requested AR order")
    target = y[start:]
    n = len(target)
    tss = float(np.sum((target - target.mean()) ** 2))
    if np.ptp(y) == 0:
        fitted = np.full(n, target.mean())
        return ARFit(0, np.array([target.mean()]), target - fitted, fitted,
                     bic(0.0, n, 1, 0.0))

    full = ar_design(y, max_order, start)
    rss_all = nested_rss(full, target)
    best_k, best_crit = None, np.inf
    for k in range(max_order + 1):
        rss = rss_all[k]
        if np.isnan(rss):
            _, _, rss, rank = ols(full[:, :k + 1], target)
            if rank < k + 1:
                continue
        crit = bic(rss, n, k + 1, tss)
        if best_k is None or crit < best_crit:
            best_k, best_crit = k, crit
    coef, fitted, _, _ = ols(full[:, :best_k + 1], target)
    return ARFit(best_k, coef, target - fitted, fitted, float(best_crit))


def project_on_covariates(e, X, max_lag) -> CovProjection:
    """Regress ``e`` on an intercept and lags ``1..l`` of every covariate.

    ``X`` holds ``len(e) + max_lag`` rows: the last ``len(e)`` align with
    ``e`` and the leading ``max_lag`` supply lag history. The lag ``l`` is
    chosen by BIC with the rank of the design as parameter count; lags with
    more regressors than observations are excluded.
    """
    e = np.asarray(e, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = len(e)
    if X.shape[0] != n + max_lag:
        raise ValueError("X must have len(e) + max_lag rows")
    tss = float(np.sum((e - e.mean()) ** 2))

    d = X.shape[1]
    feasible = [lag for lag in range(1, max_lag + 1) if 1 + d * lag <= n]
    if not feasible:
        raise ValueError("projection infeasible, shrink lags or grow window")
    # lag-major column order makes the candidate designs nested
    top = feasible[-1]
    lagged = lag_matrix(X, top, n).reshape(n, d, top)
    nested = np.column_stack(
        [np.ones(n), lagged.transpose(0, 2, 1).reshape(n, d * top)])
    rss_all = nested_rss(nested, e)

    def design(lag):
        return np.column_stack([np.ones(n), lag_matrix(X, lag, n)])

    best_lag, best_crit = None, np.inf
    for lag in feasible:
        p = 1 + d * lag
        rss, rank = rss_all[p - 1], p
        if np.isnan(rss):
            _, _, rss, rank = ols(design(lag), e)
        crit = bic(rss, n, rank, tss) if tss > 0 else 0.0
        if best_lag is None or crit < best_crit:
            best_lag, best_crit = lag, crit
    coef, fitted, rss, rank = ols(design(best_lag), e)
    return CovProjection(
        lag=best_lag,
        intercept=float(coef[0]),
        coefficients=coef[1:].reshape(d, best_lag),
        fitted=fitted,
        rss=rss,
        tss=tss,
        rank=rank,
    )
