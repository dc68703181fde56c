import numpy as np
import pytest
from hypothesis import given, strategies as st

from brail.errors import RejectedInputError
from brail.glm import GlmFamily
from brail.solver import (PenaltySpec, entry_order, first_k_entrants, fit_penalized,
                          lambda_max, lasso_path, null_intercept, path_prefix_fit,
                          penalized_objective, ridge_refit)

from kkt import kkt_violation


def _data(rng, n, p, family="gaussian", scale=1.0):
    X = rng.standard_normal((n, p))
    beta = np.zeros(p)
    beta[: min(3, p)] = scale * np.array([1.0, -0.8, 0.6])[: min(3, p)]
    eta = X @ beta
    if family == "gaussian":
        y = eta + rng.standard_normal(n)
    elif family == "bernoulli":
        y = (rng.random(n) < 1 / (1 + np.exp(-eta))).astype(float)
    else:
        y = rng.poisson(np.exp(0.3 * eta)).astype(float)
    return X, y


def test_soft_threshold_single_feature(rng):
    n = 50
    x = rng.standard_normal(n)
    x -= x.mean()
    x /= np.sqrt(np.mean(x ** 2))
    y = 0.7 * x + rng.standard_normal(n) + 3.0
    for lam in (0.0, 0.1, 0.5, 5.0):
        fit = fit_penalized("gaussian", y, x[:, None], penalty=PenaltySpec.uniform(lam, 1))
        c = x @ (y - y.mean()) / n
        expect = np.sign(c) * max(abs(c) - lam, 0.0)
        assert fit.coefficients[0] == pytest.approx(expect, abs=1e-9)
        assert fit.intercept == pytest.approx(y.mean(), abs=1e-9)


def test_ridge_closed_form(rng):
    n, p, eps = 40, 6, 0.3
    X, y = _data(rng, n, p)
    Xc = X - X.mean(0)
    expect = np.linalg.solve(Xc.T @ Xc / n + 2 * eps * np.eye(p), Xc.T @ (y - y.mean()) / n)
    fit = fit_penalized("gaussian", y, X, penalty=PenaltySpec(np.zeros(p), eps), tol=1e-12)
    np.testing.assert_allclose(fit.coefficients, expect, atol=1e-8)
    refit = ridge_refit("gaussian", y, X, eps=eps)
    np.testing.assert_allclose(refit.coefficients, expect, atol=1e-10)


@pytest.mark.parametrize("family", ["gaussian", "bernoulli", "poisson"])
def test_kkt_all_families(family, rng):
    X, y = _data(rng, 80, 12, family)
    offset = 0.1 * rng.standard_normal(80)
    l1 = 0.05 * (1 + rng.random(12))
    fit = fit_penalized(family, y, X, offset, PenaltySpec(l1, 0.01))
    assert fit.converged
    assert kkt_violation(family, y, X, offset, fit, l1, 0.01) < 1e-6


@given(st.integers(0, 500))
def test_kkt_property_gaussian(seed):
    r = np.random.default_rng(seed)
    n, p = int(r.integers(20, 61)), int(r.integers(5, 41))
    X, y = _data(r, n, p)
    l1 = r.uniform(0.01, 0.5) * r.uniform(0.5, 1.5, p)
    fit = fit_penalized("gaussian", y, X, penalty=PenaltySpec(l1))
    assert kkt_violation("gaussian", y, X, None, fit, l1) < 1e-6


@pytest.mark.parametrize("family", ["bernoulli", "poisson"])
def test_irls_beats_perturbations(family, rng):
    X, y = _data(rng, 60, 5, family)
    l1 = np.full(5, 0.02)
    fit = fit_penalized(family, y, X, penalty=PenaltySpec(l1))
    base = penalized_objective(GlmFamily(family), y, X, np.zeros(60), fit.intercept,
                               fit.coefficients, l1, 0.0)
    for _ in range(20):
        d = 1e-3 * rng.standard_normal(5)
        assert penalized_objective(GlmFamily(family), y, X, np.zeros(60), fit.intercept,
                                   fit.coefficients + d, l1, 0.0) >= base - 1e-12


def test_sweep_objective_monotone_debug(rng):
    X, y = _data(rng, 50, 20)
    fit = fit_penalized("gaussian", y, X, penalty=PenaltySpec.uniform(0.05, 20), debug=True)
    trace = np.concatenate(fit.info["sweep_objectives"])
    assert np.all(np.diff(trace) <= 1e-12 * np.abs(trace[1:]).max())


def test_lambda_max_gives_null_model(rng):
    X, y = _data(rng, 40, 8, "bernoulli")
    lmax = lambda_max("bernoulli", y, X)
    fit = fit_penalized("bernoulli", y, X, penalty=PenaltySpec.uniform(lmax * 1.0001, 8))
    assert not fit.support.size
    fit = fit_penalized("bernoulli", y, X, penalty=PenaltySpec.uniform(lmax * 0.95, 8))
    assert fit.support.size >= 1


def test_null_intercept_offsets(rng):
    y = rng.poisson(2.0, 30).astype(float)
    off = 0.3 * rng.standard_normal(30)
    a = null_intercept("poisson", y, off)
    assert np.sum(y - np.exp(a + off)) == pytest.approx(0.0, abs=1e-9)
    yb = (rng.random(30) < 0.4).astype(float)
    a = null_intercept("bernoulli", yb, off)
    assert np.sum(yb - 1 / (1 + np.exp(-(a + off)))) == pytest.approx(0.0, abs=1e-9)


def test_path_first_point_is_exact_null(rng):
    X, y = _data(rng, 40, 10)
    path = lasso_path("gaussian", y, X, n_lambda=20)
    assert not path[0].support.size
    assert path[0].intercept == pytest.approx(y.mean())
    lams = [f.lam for f in path]
    assert np.all(np.diff(lams) < 0)
    assert lams[-1] == pytest.approx(0.01 * lams[0])


def test_path_warm_start_agrees_with_cold(rng):
    X, y = _data(rng, 40, 10)
    path = lasso_path("gaussian", y, X, n_lambda=15)
    for fit in path[1::4]:
        cold = fit_penalized("gaussian", y, X, penalty=PenaltySpec.uniform(fit.lam, 10))
        np.testing.assert_allclose(fit.coefficients, cold.coefficients, atol=1e-6)


def test_entry_order_and_prefix(rng):
    X, y = _data(rng, 60, 10, scale=3.0)
    path = lasso_path("gaussian", y, X)
    order = entry_order(path)
    assert set(order[:3]) == {0, 1, 2}
    fit, chosen = path_prefix_fit(path, 3)
    np.testing.assert_array_equal(np.sort(fit.support), np.sort(chosen))
    assert len(first_k_entrants(path, 0)) == 0


def test_prefix_fit_k_zero(rng):
    X, y = _data(rng, 30, 5)
    fit, chosen = path_prefix_fit(lasso_path("gaussian", y, X), 0)
    assert chosen.size == 0 and not fit.support.size


def test_ridge_refit_empty_design(rng):
    y = rng.poisson(3.0, 20).astype(float)
    fit = ridge_refit("poisson", y, np.zeros((20, 0)), eps=0.1)
    assert fit.coefficients.shape == (0,)
    assert fit.intercept == pytest.approx(np.log(y.mean()), abs=1e-8)


@pytest.mark.parametrize("family", ["bernoulli", "poisson"])
def test_ridge_refit_stationary(family, rng):
    X, y = _data(rng, 50, 4, family)
    eps = 0.05
    fit = ridge_refit(family, y, X, eps=eps)
    assert kkt_violation(family, y, X, None, fit, np.zeros(4), eps) < 1e-8


def test_penalty_validation():
    with pytest.raises(RejectedInputError):
        PenaltySpec(np.array([-1.0]))
    with pytest.raises(RejectedInputError):
        PenaltySpec(np.array([1.0]), ridge_eps=-1)
    with pytest.raises(RejectedInputError):
        fit_penalized("gaussian", np.zeros(3), np.zeros((3, 2)), penalty=PenaltySpec.uniform(1, 3))


def test_separable_bernoulli_stays_finite():
    X = np.array([[-2.0], [-1.0], [1.0], [2.0]])
    y = np.array([0.0, 0.0, 1.0, 1.0])
    fit = fit_penalized("bernoulli", y, X, penalty=PenaltySpec.uniform(0.01, 1))
    assert np.all(np.isfinite(fit.coefficients)) and fit.coefficients[0] > 0


def test_soft_threshold_noise_free_example():
    x = np.linspace(-1, 1, 21)
    x = (x - x.mean()) / np.sqrt(np.mean((x - x.mean()) ** 2))
    fit = fit_penalized("gaussian", 2 * x, x[:, None], penalty=PenaltySpec.uniform(0.5, 1))
    assert fit.coefficients[0] == pytest.approx(1.5, abs=1e-10)


def test_strong_features_enter_first(rng):
    X = rng.standard_normal((50, 10))
    beta = np.zeros(10)
    beta[[2, 5, 7]] = [4.0, -5.0, 6.0]
    y = X @ beta + rng.standard_normal(50)
    assert set(first_k_entrants(lasso_path("gaussian", y, X), 3)) == {2, 5, 7}


def test_ridge_vanishing_is_ols(rng):
    x = rng.standard_normal(30)
    y = 1.5 * x + rng.standard_normal(30)
    slope = np.polyfit(x, y, 1)[0]
    assert ridge_refit("gaussian", y, x[:, None], eps=1e-9).coefficients[0] == pytest.approx(
        slope, abs=1e-4)


def test_ridge_wide_is_well_posed(rng):
    X = rng.standard_normal((10, 15))
    y = rng.standard_normal(10)
    fit = ridge_refit("gaussian", y, X, eps=0.01)
    assert np.all(np.isfinite(fit.coefficients))
    assert kkt_violation("gaussian", y, X, None, fit, np.zeros(15), 0.01) < 1e-10
