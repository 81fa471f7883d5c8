import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ews.core import rng
from ews.linproj import (ar_design, bic, fit_ar, lag_matrix, nested_rss, ols,
                         project_on_covariates)
from ews.simlab import DGPSpec, gen_termination


def brute_force_order(y, max_order, start):
    """Reference BIC search: one least-squares fit per candidate order."""
    target = y[start:]
    tss = float(np.sum((target - target.mean()) ** 2))
    best = None
    for k in range(max_order + 1):
        _, _, rss, rank = ols(ar_design(y, k, start), target)
        if rank < k + 1:
            continue
        crit = bic(rss, len(target), k + 1, tss)
        if best is None or crit < best[0]:
            best = (crit, k)
    return best[1]


def test_constant_series_gives_order_zero():
    fit = fit_ar(np.full(40, 3.5), 5)
    assert fit.order == 0
    assert np.all(fit.residuals == 0)


def test_ar1_recovered_by_bic():
    hits = 0
    for s in range(100):
        g = rng(11, s)
        e = g.standard_normal(600)
        y = np.empty(600)
        y[0] = e[0]
        for t in range(1, 600):
            y[t] = 0.8 * y[t - 1] + e[t]
        hits += fit_ar(y[100:], 10).order == 1
    assert hits >= 90


def test_white_noise_selects_order_zero():
    hits = sum(fit_ar(rng(12, s).standard_normal(500), 10).order == 0
               for s in range(100))
    assert hits >= 80


def test_nested_search_matches_brute_force():
    g = rng(13)
    for _ in range(100):
        y = np.cumsum(g.standard_normal(51)) * 0.3 + g.standard_normal(51)
        assert fit_ar(y, 10, start=10).order == brute_force_order(y, 10, 10)


def test_residual_mean_zero_with_intercept():
    y = rng(14).standard_normal(80).cumsum()
    assert abs(fit_ar(y, 5).residuals.mean()) < 1e-8


def test_window_too_short_rejected():
    with pytest.raises(ValueError):
        fit_ar(np.arange(10.0), 9)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), c=st.floats(1e-3, 1e3))
def test_order_invariant_to_positive_scaling(seed, c):
    y = rng(seed).standard_normal(60).cumsum()
    assert fit_ar(c * y, 6).order == fit_ar(y, 6).order


def test_nested_rss_matches_separate_fits():
    g = rng(15)
    D = np.column_stack([np.ones(40), g.standard_normal((40, 6))])
    y = g.standard_normal(40)
    rss = nested_rss(D, y)
    for j in range(1, 8):
        assert rss[j - 1] == pytest.approx(ols(D[:, :j], y)[2], rel=1e-9)


def test_nested_rss_flags_dependent_columns():
    g = rng(16)
    a = g.standard_normal(30)
    D = np.column_stack([np.ones(30), a, 2 * a, g.standard_normal(30)])
    rss = nested_rss(D, g.standard_normal(30))
    assert np.isfinite(rss[:2]).all() and np.isnan(rss[2:]).all()


def test_lag_matrix_alignment():
    X = np.arange(10.0)[:, None]
    L = lag_matrix(X, 2, 5)
    # rows 5..9 of X, lags 1 and 2
    np.testing.assert_array_equal(L[:, 0], [4, 5, 6, 7, 8])
    np.testing.assert_array_equal(L[:, 1], [3, 4, 5, 6, 7])


def test_zero_target_projects_to_zero():
    X = rng(17).standard_normal((45, 2))
    p = project_on_covariates(np.zeros(40), X, 5)
    assert np.all(p.fitted == 0)
    assert np.all(p.coefficients == 0) and p.intercept == 0


def test_exact_linear_recovery():
    x = rng(18).standard_normal(61)
    e = 2.0 * x[:-1][-50:]  # e_t = 2 x_{t-1}
    p = project_on_covariates(e, x[-51:, None][:, :], 1)
    assert p.coefficients[0, 0] == pytest.approx(2.0, abs=1e-8)
    assert p.rss <= 1e-12


def test_zero_covariate_column_changes_nothing():
    g = rng(19)
    X = g.standard_normal((55, 1))
    e = 0.7 * X[4:-1, 0] + 0.1 * g.standard_normal(50)
    a = project_on_covariates(e, X, 5)
    b = project_on_covariates(e, np.column_stack([X, np.zeros(55)]), 5)
    np.testing.assert_allclose(a.fitted, b.fitted, atol=1e-10)


def test_infeasible_projection_rejected():
    X = rng(20).standard_normal((13, 4))
    with pytest.raises(ValueError, match="projection infeasible"):
        project_on_covariates(np.ones(3), X, 10)


def test_two_step_matches_one_step_regression():
    """Frisch-Waugh: residualising both sides on the AR block first."""
    g = rng(21)
    n, k, l = 200, 2, 2
    x = g.standard_normal(n + 10)
    y = np.zeros(n + 10)
    for t in range(2, n + 10):
        y[t] = 0.4 * y[t - 1] + 0.5 * x[t - 1] + 0.3 * g.standard_normal()
    start = 5
    target = y[start:]
    A = ar_design(y, k, start)
    B = lag_matrix(x[:, None], l, len(target))
    one_step = ols(np.column_stack([A, B]), target)
    proj_A = lambda v: v - A @ np.linalg.lstsq(A, v, rcond=None)[0]
    e = proj_A(target)
    _, fitted, _, _ = ols(proj_A(B), e)
    np.testing.assert_allclose(e - fitted, target - one_step[1], atol=1e-8)


def test_projection_explains_pre_change_termination():
    # joint F-test of all lag coefficients at the 1% level
    from scipy import stats

    hits = 0
    for s in range(100):
        f = gen_termination(DGPSpec(seed=s))
        y, X = f.target[:500], f.covariates[:500]
        ar = fit_ar(y, 10)
        p = project_on_covariates(ar.residuals, X, 10)
        n, q = len(ar.residuals), p.rank - 1
        F = (p.tss - p.rss) / q / (p.rss / (n - p.rank))
        hits += p.r_squared > 0 and stats.f.sf(F, q, n - p.rank) < 0.01
    assert hits >= 95
