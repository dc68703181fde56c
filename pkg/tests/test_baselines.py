import math
from itertools import combinations

import numpy as np
import pytest

from brail.baselines import (CrossValidation, ExtendedBic, OracleFirstK, Stability, WEIGHT_CAP,
                             adaptive_lasso, adaptive_weights, attach_loglik, cv_folds,
                             ebic_value, lasso_global, lasso_per_block, ridge_cv, select_ebic,
                             separate_lassos)
from brail.data import Domain, blocks_from_widths, standardize
from brail.errors import ConfigError
from brail.glm import GlmFamily
from brail.baselines import _grid_fits
from brail.simgen import DesignKind, SimDesign, score, simulate
from brail.solver import FitResult, PenaltySpec, fit_penalized, lasso_path

from kkt import kkt_violation


def _design(rng, n, widths):
    raw = rng.standard_normal((n, sum(widths)))
    return standardize(raw, blocks_from_widths(widths, [Domain.CONTINUOUS] * len(widths)))


def _signal(rng, mv, idx, scale=2.0):
    beta = np.zeros(mv.p)
    beta[idx] = scale
    return mv.X @ beta + rng.standard_normal(mv.n)


def test_rule_validation():
    with pytest.raises(ConfigError):
        OracleFirstK(-1)
    with pytest.raises(ConfigError):
        CrossValidation(folds=1)
    with pytest.raises(ConfigError):
        ExtendedBic(gamma=2)
    with pytest.raises(ConfigError):
        Stability(tau=1.0)


def test_unknown_rule_rejected(rng):
    mv = _design(rng, 20, [4])
    with pytest.raises(ConfigError):
        lasso_global(mv, rng.standard_normal(20), "gaussian", "cv")


def test_cv_folds_partition():
    labels = cv_folds(23, 5, seed=4)
    counts = np.bincount(labels)
    assert counts.sum() == 23 and counts.max() - counts.min() <= 1
    np.testing.assert_array_equal(labels, cv_folds(23, 5, seed=4))
    assert not np.array_equal(labels, cv_folds(23, 5, seed=5))
    with pytest.raises(ConfigError):
        cv_folds(3, 5)


def test_cv_matches_brute_force(rng):
    mv = _design(rng, 40, [10])
    y = _signal(rng, mv, [0, 3])
    rule = CrossValidation(folds=4, seed=2)
    fit = lasso_global(mv, y, "gaussian", rule)
    lambdas = np.array([f.lam for f in lasso_path("gaussian", y, mv.X)])
    labels = cv_folds(40, 4, 2)
    loss = np.zeros(len(lambdas))
    for f in range(4):
        tr, te = labels != f, labels == f
        for i, lam in enumerate(lambdas):
            cold = fit_penalized("gaussian", y[tr], mv.X[tr], penalty=PenaltySpec.uniform(lam, 10),
                                 tol=1e-10)
            resid = y[te] - cold.intercept - mv.X[te] @ cold.coefficients
            loss[i] += np.sum(0.5 * resid ** 2)
    loss /= 40
    np.testing.assert_allclose(fit.info["cv_loss"], loss, rtol=1e-6, atol=1e-8)
    assert fit.lam == lambdas[int(np.argmin(loss))]


def test_ebic_formula_and_bic_limit():
    n, p = 50, 20
    assert ebic_value(-1.3, 3, n, p, 0.0) == pytest.approx(2 * n * 1.3 + 3 * math.log(n))
    extra = 2 * 0.5 * math.log(math.comb(p, 3))
    assert ebic_value(-1.3, 3, n, p, 0.5) == pytest.approx(2 * n * 1.3 + 3 * math.log(n) + extra)


def test_ebic_path_brute_force(rng):
    mv = _design(rng, 30, [8])
    y = _signal(rng, mv, [1, 2], 1.0)
    path = lasso_path("gaussian", y, mv.X)
    chosen = select_ebic(attach_loglik(path, "gaussian", y, mv.X), "gaussian", 30, 8, 0.5)
    vals = []
    for fit in path:
        r = y - fit.intercept - mv.X @ fit.coefficients
        ll = np.sum(-0.5 * r ** 2)
        df = np.count_nonzero(fit.coefficients)
        vals.append(-2 * ll + df * math.log(30) + 2 * 0.5 * math.log(math.comb(8, df)))
    assert chosen is path[int(np.argmin(vals))]
    assert chosen.info["ebic"] == pytest.approx(min(vals))
    fit = lasso_global(mv, y, "gaussian", ExtendedBic(0.5))
    np.testing.assert_array_equal(fit.coefficients, chosen.coefficients)


def test_ebic_ties_prefer_smaller_support():
    small = FitResult(0.0, np.array([1.0, 0.0]), 0.0, 1, True, info={"mean_loglik": -1.0})
    large = FitResult(0.0, np.array([1.0, 1.0]), 0.0, 1, True, info={"mean_loglik": -1.0})
    assert select_ebic([large, small], "gaussian", 40, 2, 0.0) is small
    twin = FitResult(0.0, np.array([0.0, 2.0]), 0.0, 1, True, info={"mean_loglik": -1.0})
    assert select_ebic([small, twin], "gaussian", 40, 2, 0.5) is small


def test_ebic_requires_loglik(rng):
    mv = _design(rng, 20, [3])
    with pytest.raises(ConfigError):
        select_ebic(lasso_path("gaussian", rng.standard_normal(20), mv.X), "gaussian", 20, 3)


def test_oracle_zero_is_empty(rng):
    mv = _design(rng, 40, [6, 6])
    y = _signal(rng, mv, [0, 7])
    for fit in (lasso_global(mv, y, "gaussian", OracleFirstK(0)),
                separate_lassos(mv, y, "gaussian", OracleFirstK(0, (0, 0))),
                adaptive_lasso(mv, y, "gaussian", OracleFirstK(0))):
        assert fit.support.size == 0


@pytest.mark.parametrize("seed", range(6))
def test_oracle_selects_at_most_k(seed):
    r = np.random.default_rng(seed)
    mv = _design(r, 50, [12, 8])
    y = _signal(r, mv, [0, 1, 13], 1.0)
    for k in (1, 3, 5):
        assert lasso_global(mv, y, "gaussian", OracleFirstK(k)).support.size <= k
        assert adaptive_lasso(mv, y, "gaussian", OracleFirstK(k)).support.size <= k
        fit = lasso_per_block(mv, y, "gaussian", OracleFirstK(k), truth_support=[0, 1, 13],
                              n_points=5)
        assert fit.support.size <= k
    sep = separate_lassos(mv, y, "gaussian", OracleFirstK(0, (2, 1)))
    assert np.count_nonzero(sep.coefficients[:12]) <= 2
    assert np.count_nonzero(sep.coefficients[12:]) <= 1


def test_oracle_first_entrants_are_strongest(rng):
    mv = _design(rng, 200, [30])
    y = _signal(rng, mv, [4, 9, 17], 3.0)
    assert set(lasso_global(mv, y, "gaussian", OracleFirstK(3)).support) == {4, 9, 17}


def test_separate_single_block_equals_global(rng):
    mv = _design(rng, 40, [10])
    y = _signal(rng, mv, [0, 5])
    for rule in (CrossValidation(5, 1), ExtendedBic(0.5), OracleFirstK(2)):
        a = separate_lassos(mv, y, "gaussian", rule)
        b = lasso_global(mv, y, "gaussian", rule)
        np.testing.assert_array_equal(a.coefficients, b.coefficients)


def test_separate_needs_block_ks(rng):
    mv = _design(rng, 30, [4, 4])
    with pytest.raises(ConfigError):
        separate_lassos(mv, rng.standard_normal(30), "gaussian", OracleFirstK(2))


def test_separate_orthogonal_blocks_pick_top_correlations(rng):
    n = 64
    Q, _ = np.linalg.qr(rng.standard_normal((n, 9)) - 0)
    Q -= Q.mean(axis=0)
    Q, _ = np.linalg.qr(Q)
    mv = standardize(Q, blocks_from_widths([5, 4], [Domain.CONTINUOUS] * 2))
    y = mv.X @ np.r_[3, 0, 2, 0, 1, 0, 4, 0, 0.5] + 0.1 * rng.standard_normal(n)
    fit = separate_lassos(mv, y, "gaussian", OracleFirstK(0, (2, 1)))
    c = np.abs(mv.X.T @ (y - y.mean()))
    expect = set(np.argsort(-c[:5])[:2]) | {5 + int(np.argmax(c[5:]))}
    assert set(fit.support) == expect
    assert set(fit.support) == set(lasso_global(mv, y, "gaussian", OracleFirstK(3)).support)


def test_per_block_grid_diagonal_is_global_lasso(rng):
    mv = _design(rng, 50, [6, 6])
    y = _signal(rng, mv, [0, 7])
    lams = list(np.geomspace(0.5, 0.02, 5))
    fits = _grid_fits(GlmFamily.GAUSSIAN, y, mv.X, mv, [lams, lams], [(i, i) for i in range(5)])
    for lam, fit in zip(lams, fits):
        joint = fit_penalized("gaussian", y, mv.X, penalty=PenaltySpec.uniform(lam, 12),
                              tol=1e-10)
        np.testing.assert_allclose(fit.coefficients, joint.coefficients, atol=1e-6)


def test_per_block_oracle_noise_block_gets_lambda_max():
    for seed in range(8):
        r = np.random.default_rng(seed)
        mv = _design(r, 100, [10, 10])
        beta = np.zeros(20)
        beta[[0, 1, 2]] = [1.0, -0.7, 0.5]
        y = mv.X @ beta + r.standard_normal(100)
        fit = lasso_per_block(mv, y, "gaussian", OracleFirstK(3), truth_support=[0, 1, 2])
        lmax2 = np.max(np.abs(mv.X[:, 10:].T @ (y - y.mean()))) / 100
        assert fit.info["lambdas"][1] >= lmax2 * (1 - 1e-12)
        assert np.count_nonzero(fit.coefficients[10:]) == 0


def test_per_block_grid_fits_are_optimal(rng):
    mv = _design(rng, 60, [6, 5])
    y = _signal(rng, mv, [0, 8])
    fit = lasso_per_block(mv, y, "gaussian", CrossValidation(5, 0), n_points=4)
    w = np.repeat(fit.info["lambdas"], mv.widths)
    assert kkt_violation("gaussian", y, mv.X, None, fit, w) < 1e-6


def test_per_block_noise_block_gets_top_lambda(rng):
    mv = _design(rng, 200, [10, 10])
    y = _signal(rng, mv, [0, 1, 2], 3.0)
    fit = lasso_per_block(mv, y, "gaussian", ExtendedBic(0.5))
    assert fit.info["grid_point"][1] == 0
    assert np.count_nonzero(fit.coefficients[10:]) == 0
    assert set(fit.support) == {0, 1, 2}


def test_per_block_limits(rng):
    mv = _design(rng, 30, [2, 2, 2, 2])
    with pytest.raises(ConfigError):
        lasso_per_block(mv, rng.standard_normal(30), "gaussian", CrossValidation())
    mv = _design(rng, 30, [3, 3])
    with pytest.raises(ConfigError):
        lasso_per_block(mv, rng.standard_normal(30), "gaussian", OracleFirstK(2))


def test_per_block_oracle_reaches_truth(rng):
    mv = _design(rng, 300, [20, 20])
    y = _signal(rng, mv, [0, 1, 21], 3.0)
    fit = lasso_per_block(mv, y, "gaussian", OracleFirstK(3), truth_support=[0, 1, 21])
    assert set(fit.support) == {0, 1, 21}


def test_adaptive_weights():
    w = adaptive_weights(np.array([2.0, -0.5, 0.0]))
    np.testing.assert_allclose(w, [0.5, 2.0, WEIGHT_CAP])
    np.testing.assert_allclose(adaptive_weights(np.array([2.0]), 2.0), [0.25])


def test_adaptive_constant_weights_is_lasso(rng):
    mv = _design(rng, 50, [8])
    y = _signal(rng, mv, [0, 3])
    for rule in (CrossValidation(5, 3), OracleFirstK(2)):
        a = adaptive_lasso(mv, y, "gaussian", rule, ridge_coefficients=np.ones(8))
        b = lasso_global(mv, y, "gaussian", rule)
        np.testing.assert_allclose(a.coefficients, b.coefficients, atol=1e-12)


def test_adaptive_zero_ridge_coefficient_excluded(rng):
    mv = _design(rng, 80, [6])
    y = _signal(rng, mv, [0, 1], 3.0)
    ridge = np.array([0.0, 1.0, 0.1, 0.1, 0.1, 0.1])
    fit = adaptive_lasso(mv, y, "gaussian", CrossValidation(), ridge_coefficients=ridge)
    assert fit.coefficients[0] == 0 and fit.coefficients[1] != 0


def test_ridge_cv_matches_closed_form(rng):
    mv = _design(rng, 40, [5])
    y = _signal(rng, mv, [0])
    fit = ridge_cv(mv, y, "gaussian")
    Xc = mv.X - mv.X.mean(axis=0)
    A = Xc.T @ Xc / 40 + 2 * fit.lam * np.eye(5)
    np.testing.assert_allclose(fit.coefficients, np.linalg.solve(A, Xc.T @ (y - y.mean()) / 40),
                               atol=1e-10)
    gl = ridge_cv(mv, (y > np.median(y)).astype(float), "bernoulli")
    assert np.all(np.isfinite(gl.coefficients))


def test_stability_noise_with_high_tau(rng):
    mv = _design(rng, 80, [10])
    y = rng.standard_normal(80)
    fit = lasso_global(mv, y, "gaussian", Stability(tau=0.99, n_bootstrap=30))
    assert fit.support.size == 0


def test_stability_frequencies_deterministic(rng):
    mv = _design(rng, 60, [8])
    y = _signal(rng, mv, [0, 1])
    rule = Stability(n_bootstrap=20, seed=5)
    a = lasso_global(mv, y, "gaussian", rule)
    b = lasso_global(mv, y, "gaussian", rule)
    np.testing.assert_array_equal(a.info["freq"], b.info["freq"])
    assert np.all((a.info["freq"] >= 0) & (a.info["freq"] <= 1))
    assert set(a.support) == set(np.flatnonzero(a.info["freq"] >= 0.8))


@pytest.mark.parametrize("family", ["bernoulli", "poisson"])
def test_baselines_run_on_glm_families(rng, family):
    mv = _design(rng, 120, [6, 6])
    eta = 1.5 * mv.X[:, 0] - 1.5 * mv.X[:, 7]
    fam = GlmFamily(family)
    y = (rng.random(120) < fam.mean(eta)).astype(float) if family == "bernoulli" \
        else rng.poisson(np.exp(eta)).astype(float)
    for fit in (lasso_global(mv, y, family, CrossValidation()),
                adaptive_lasso(mv, y, family, ExtendedBic()),
                separate_lassos(mv, y, family, CrossValidation()),
                lasso_per_block(mv, y, family, ExtendedBic(), n_points=6)):
        assert np.all(np.isfinite(fit.coefficients))
        assert {0, 7} <= set(fit.support)


@pytest.fixture(scope="module")
def iid900_oracles():
    out = {"global": [], "per_block": [], "separate": []}
    for seed in range(20):
        mv, y, truth = simulate(SimDesign(DesignKind.IID, widths=(300, 300, 300),
                                          rng_seed=seed))
        kb = tuple(len(s) for s in truth.supports)
        k = sum(kb)
        fits = {"global": lasso_global(mv, y, "gaussian", OracleFirstK(k)),
                "per_block": lasso_per_block(mv, y, "gaussian", OracleFirstK(k), truth.support),
                "separate": separate_lassos(mv, y, "gaussian", OracleFirstK(k, kb))}
        for name, fit in fits.items():
            m = score(fit.support, truth)
            out[name].append((m.tpr, m.fdp))
    return {name: np.mean(v, axis=0) for name, v in out.items()}


def test_global_oracle_iid900(iid900_oracles):
    tpr, fdp = iid900_oracles["global"]
    assert abs(tpr - 0.63) <= 0.08 and abs(fdp - 0.37) <= 0.08


def test_per_block_oracle_iid900(iid900_oracles):
    tpr, _ = iid900_oracles["per_block"]
    assert abs(tpr - 0.74) <= 0.08


def test_separate_oracle_iid900(iid900_oracles):
    tpr, _ = iid900_oracles["separate"]
    assert abs(tpr - 0.53) <= 0.08


def test_adaptive_oracle_iid300():
    res = []
    for seed in range(20):
        mv, y, truth = simulate(SimDesign(DesignKind.IID, rng_seed=seed))
        fit = adaptive_lasso(mv, y, "gaussian", OracleFirstK(truth.support.size))
        m = score(fit.support, truth)
        res.append((m.tpr, m.fdp))
    tpr, fdp = np.mean(res, axis=0)
    assert abs(tpr - 1.0) <= 0.05 and fdp <= 0.05


def test_stability_bdmrf_global():
    res = []
    for seed in range(20):
        mv, y, truth = simulate(SimDesign(DesignKind.BLOCK_DIRECTED_GRAPH, rng_seed=seed))
        fit = lasso_global(mv, y, "gaussian", Stability(seed=seed))
        m = score(fit.support, truth)
        res.append((m.tpr, m.fdp))
    tpr, fdp = np.mean(res, axis=0)
    assert abs(tpr - 0.67) <= 0.08 and abs(fdp - 0.01) <= 0.08
