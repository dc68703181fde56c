"""Comparison estimators and model-selection rules.

Estimators: a single global Lasso penalty, a separate penalty per block
(full grid search), separate Lassos per block, and the ridge-weighted
Adaptive Lasso. Each takes a :data:`SelectionRule` that decides the
penalty level: the oracle first-k rule (needs the true support size),
K-fold cross-validation, extended BIC, or stability selection started at
the CV choice.

The oracle rules use ground truth and exist only to reproduce benchmark
tables; they are not usable on real data.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .algorithm import bootstrap_frequencies, draw_resamples, select_stable
from .errors import ConfigError
from .glm import GlmFamily, as_family
from .solver import (FitResult, PenaltySpec, fit_penalized, lambda_max, lasso_path,
                     null_intercept, path_prefix_fit, penalized_objective, ridge_refit)

log = logging.getLogger(__name__)

WEIGHT_CAP = 1e12
BLOCK_GRID_POINTS = 10
BLOCK_GRID_MIN_RATIO = 0.05
MAX_GRID_BLOCKS = 3


@dataclass(frozen=True)
class OracleFirstK:
    """Keep the first ``k`` path entrants; ``per_block`` gives one k per block."""

    k: int = 0
    per_block: tuple = None

    def __post_init__(self):
        if self.k < 0 or (self.per_block is not None and min(self.per_block) < 0):
            raise ConfigError("oracle k must be non-negative")


@dataclass(frozen=True)
class CrossValidation:
    folds: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.folds < 2:
            raise ConfigError(f"folds must be at least 2, got {self.folds}")


@dataclass(frozen=True)
class ExtendedBic:
    gamma: float = 0.5

    def __post_init__(self):
        if not 0 <= self.gamma <= 1:
            raise ConfigError(f"EBIC gamma must lie in [0, 1], got {self.gamma}")


@dataclass(frozen=True)
class Stability:
    """Stability selection at the CV-chosen penalty."""

    tau: float = 0.8
    n_bootstrap: int = 100
    folds: int = 5
    seed: int = 0
    gamma_range: tuple = (0.5, 1.5)

    def __post_init__(self):
        if not 0 < self.tau < 1:
            raise ConfigError(f"tau must lie in (0, 1), got {self.tau}")
        if self.n_bootstrap < 2:
            raise ConfigError("n_bootstrap must be at least 2")
        if self.folds < 2:
            raise ConfigError(f"folds must be at least 2, got {self.folds}")


SelectionRule = (OracleFirstK, CrossValidation, ExtendedBic, Stability)


def _check_rule(rule):
    if not isinstance(rule, SelectionRule):
        raise ConfigError(f"unknown selection rule {rule!r}")


# ---------------------------------------------------------------------------
# selection helpers

def cv_folds(n, folds, seed=0):
    """Fold label of each row: a seeded permutation dealt round-robin."""
    if folds < 2 or folds > n:
        raise ConfigError(f"need 2 <= folds <= n, got folds={folds}, n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    labels = np.empty(n, dtype=int)
    labels[perm] = np.arange(n) % folds
    return labels


def heldout_deviance(family, y, X, fit, offset=None):
    """Held-out negative mean log-likelihood of a fit."""
    eta = fit.intercept + X @ fit.coefficients
    if offset is not None:
        eta = eta + offset
    return -float(np.mean(family.pointwise_loglik(y, eta)))


def attach_loglik(path, family, y, X, offset=None):
    """Store each fit's mean log-likelihood in ``fit.info["mean_loglik"]``."""
    family = as_family(family)
    for fit in path:
        fit.info["mean_loglik"] = -heldout_deviance(family, y, X, fit, offset)
    return path


def log_binom(p, k):
    return float(gammaln(p + 1) - gammaln(k + 1) - gammaln(p - k + 1))


def ebic_value(mean_loglik, df, n, p, gamma):
    return -2.0 * n * mean_loglik + df * math.log(n) + 2.0 * gamma * log_binom(p, df)


def select_ebic(path, family, n, p, gamma=0.5):
    """Path point minimizing the extended BIC.

    Fits need ``info["mean_loglik"]`` (see :func:`attach_loglik`). Ties go to
    the earlier (sparser) point.
    """
    as_family(family)
    if not path:
        raise ConfigError("empty path")
    values = []
    for fit in path:
        if "mean_loglik" not in fit.info:
            raise ConfigError("path fits lack mean_loglik; call attach_loglik first")
        df = int(np.count_nonzero(fit.coefficients))
        values.append(ebic_value(fit.info["mean_loglik"], df, n, p, gamma))
    best = int(np.argmin(values))
    chosen = path[best]
    chosen.info["ebic"] = values[best]
    chosen.info["index"] = best
    return chosen


def _cv_curve(fit_all, family, y, X, n_points, rule):
    """Mean held-out deviance per candidate; ``fit_all(rows)`` returns candidate fits."""
    labels = cv_folds(len(y), rule.folds, rule.seed)
    loss = np.zeros(n_points)
    for f in range(rule.folds):
        test = labels == f
        fits = fit_all(np.flatnonzero(~test))
        for i, fit in enumerate(fits):
            loss[i] += test.sum() * heldout_deviance(family, y[test], X[test], fit)
    return loss / len(y)


def _stability_refit(family, y, X, lam_weights, rule, eps=None):
    """Randomized-Lasso bootstrap frequencies at fixed weights, then a ridge refit."""
    n, p = X.shape
    rng = np.random.default_rng(rule.seed)
    rows, gammas = draw_resamples(rng, n, p, rule.n_bootstrap, rule.gamma_range)
    freq, used = bootstrap_frequencies(family, y, X, np.zeros(n), lam_weights, rows, gammas)
    selected = select_stable(freq, rule.tau)
    eps = 0.001 / p if eps is None else eps
    refit = ridge_refit(family, y, X[:, selected], None, eps)
    beta = np.zeros(p)
    beta[selected] = refit.coefficients
    return FitResult(refit.intercept, beta, refit.objective, refit.n_iterations,
                     refit.converged, info={"freq": freq, "n_bootstrap_used": used})


# ---------------------------------------------------------------------------
# path-based estimators (one penalty level, possibly weighted per feature)

def _path_select(family, y, X, rule, penalty_factor=None, n_lambda=100,
                 lambda_min_ratio=0.01):
    """Fit a weighted Lasso path and pick a point on it by ``rule``."""
    n, p = X.shape
    path = lasso_path(family, y, X, None, n_lambda, lambda_min_ratio,
                      penalty_factor=penalty_factor)
    if isinstance(rule, OracleFirstK):
        fit, chosen = path_prefix_fit(path, rule.k)
        fit.info["chosen"] = chosen
        return fit
    if isinstance(rule, ExtendedBic):
        attach_loglik(path, family, y, X)
        return select_ebic(path, family, n, p, rule.gamma)
    lambdas = np.array([f.lam for f in path])

    def fit_all(rows):
        return lasso_path(family, y[rows], X[rows], None, lambdas=lambdas,
                          penalty_factor=penalty_factor)

    loss = _cv_curve(fit_all, family, y, X, len(path), rule)
    best = int(np.argmin(loss))
    chosen = path[best]
    chosen.info["cv_loss"] = loss
    if isinstance(rule, CrossValidation):
        return chosen
    pf = np.ones(p) if penalty_factor is None else np.asarray(penalty_factor, dtype=float)
    fit = _stability_refit(family, y, X, chosen.lam * pf, rule)
    fit.lam = chosen.lam
    return fit


def lasso_global(design, y, family, rule):
    """One L1 penalty over the concatenated standardized design."""
    _check_rule(rule)
    family = as_family(family)
    y = family.validate_response(y)
    if isinstance(rule, OracleFirstK) and rule.per_block is not None:
        rule = OracleFirstK(sum(rule.per_block))
    return _path_select(family, y, design.X, rule)


def select_stability(design, y, family, lambda_init_rule=None, tau=0.8, n_bootstrap=100,
                     seed=0):
    """Global-penalty stability selection started at the CV-chosen penalty."""
    folds = lambda_init_rule.folds if lambda_init_rule is not None else 5
    if lambda_init_rule is not None:
        seed = lambda_init_rule.seed
    return lasso_global(design, y, family, Stability(tau, n_bootstrap, folds, seed))


def separate_lassos(design, y, family, rule):
    """An independent Lasso of ``y`` on each block; supports are unioned.

    The oracle variant needs one k per block (``OracleFirstK.per_block``).
    """
    _check_rule(rule)
    family = as_family(family)
    y = family.validate_response(y)
    if isinstance(rule, OracleFirstK):
        if design.K == 1 and rule.per_block is None:
            rule = OracleFirstK(rule.k, (rule.k,))
        if rule.per_block is None or len(rule.per_block) != design.K:
            raise ConfigError("separate Lassos with the oracle rule need one k per block")
    beta = np.zeros(design.p)
    fits = []
    for k, block in enumerate(design.blocks):
        rk = OracleFirstK(rule.per_block[k]) if isinstance(rule, OracleFirstK) else rule
        fit = _path_select(family, y, design.block_matrix(k), rk)
        beta[block.columns] = fit.coefficients
        fits.append(fit)
    intercept = float(np.mean([f.intercept for f in fits]))
    return FitResult(intercept, beta, float(sum(f.objective for f in fits)),
                     max(f.n_iterations for f in fits), all(f.converged for f in fits),
                     info={"block_fits": fits})


# ---------------------------------------------------------------------------
# Adaptive Lasso

def ridge_grid(X, n_points=30):
    """Geometric ridge strengths spanning the spread of X^T X / n."""
    n = X.shape[0]
    top = np.linalg.norm(X, 2) ** 2 / n
    return top * np.geomspace(10.0, 1e-4, n_points)


def _ridge_gaussian(y, X, eps_grid):
    """Closed-form ridge solutions of (X^T X / n + 2 eps I) b = X^T (y - ybar) / n via SVD."""
    n = X.shape[0]
    xm = X.mean(axis=0)
    ym = y.mean()
    U, s, Vt = np.linalg.svd(X - xm, full_matrices=False)
    uty = U.T @ (y - ym)
    fits = []
    for eps in eps_grid:
        d = (s / n) / (s ** 2 / n + 2.0 * eps)
        beta = Vt.T @ (d * uty)
        fits.append(FitResult(ym - xm @ beta, beta, np.nan, 1, True, lam=float(eps)))
    return fits


def ridge_cv(design, y, family, folds=5, seed=0, eps_grid=None):
    """Ridge coefficients at the cross-validated strength."""
    family = as_family(family)
    X = design.X
    eps_grid = ridge_grid(X) if eps_grid is None else np.asarray(eps_grid, dtype=float)

    def fit_all(rows):
        if family is GlmFamily.GAUSSIAN:
            return _ridge_gaussian(y[rows], X[rows], eps_grid)
        out, init = [], None
        for eps in eps_grid:
            fit = ridge_refit(family, y[rows], X[rows], None, eps, init=init)
            init = (fit.intercept, fit.coefficients)
            out.append(fit)
        return out

    loss = _cv_curve(fit_all, family, y, X, len(eps_grid), CrossValidation(folds, seed))
    best = int(np.argmin(loss))
    fit = fit_all(np.arange(len(y)))[best]
    fit.lam = float(eps_grid[best])
    fit.info["cv_loss"] = loss
    return fit


def adaptive_weights(beta, gamma=1.0):
    """1 / |beta|^gamma, capped so zero coefficients stay finite but never enter."""
    mag = np.abs(np.asarray(beta, dtype=float)) ** gamma
    with np.errstate(divide="ignore"):
        w = np.where(mag > 0, 1.0 / mag, WEIGHT_CAP)
    return np.minimum(w, WEIGHT_CAP)


def adaptive_lasso(design, y, family, rule, gamma=1.0, ridge_folds=5, ridge_seed=0,
                   ridge_coefficients=None):
    """Weighted Lasso with weights from a cross-validated ridge fit."""
    _check_rule(rule)
    family = as_family(family)
    y = family.validate_response(y)
    if ridge_coefficients is None:
        ridge_coefficients = ridge_cv(design, y, family, ridge_folds, ridge_seed).coefficients
    w = adaptive_weights(ridge_coefficients, gamma)
    if isinstance(rule, OracleFirstK) and rule.per_block is not None:
        rule = OracleFirstK(sum(rule.per_block))
    fit = _path_select(family, y, design.X, rule, penalty_factor=w)
    fit.info["weights"] = w
    return fit


# ---------------------------------------------------------------------------
# one penalty per block, full grid search

def block_lambda_grid(design, y, family, n_points=BLOCK_GRID_POINTS,
                      min_ratio=BLOCK_GRID_MIN_RATIO):
    """Per block, ``n_points`` geometric values from lambda_max_k down to ``min_ratio`` of it."""
    ratios = np.geomspace(1.0, min_ratio, n_points)
    return [lambda_max(family, y, design.block_matrix(k)) * ratios for k in range(design.K)]


def _grid_points(grids):
    """All grid index tuples in a snake order, so neighbours differ in one block."""
    sizes = [len(g) for g in grids]
    points = [()]
    for size in sizes:
        nxt = []
        for i, head in enumerate(points):
            seq = range(size) if i % 2 == 0 else range(size - 1, -1, -1)
            nxt.extend(head + (j,) for j in seq)
        points = nxt
    return points


def _grid_fits(family, y, X, design, grids, points):
    fits, init = [], None
    XT = np.ascontiguousarray(X.T)
    alpha0 = null_intercept(family, y)
    null_grad = np.abs(XT @ (y - family.mean(np.full(len(y), alpha0)))) / len(y)
    for pt in points:
        w = np.concatenate([np.full(b.p, grids[k][pt[k]]) for k, b in enumerate(design.blocks)])
        if np.all(null_grad <= w * (1 + 1e-10)):
            # the null model satisfies the optimality conditions exactly
            fit = FitResult(alpha0, np.zeros(X.shape[1]),
                            penalized_objective(family, y, X, np.zeros(len(y)), alpha0,
                                                np.zeros(X.shape[1]), w, 0.0), 0, True)
        else:
            fit = fit_penalized(family, y, X, None, PenaltySpec(w), init=init, _XT=XT)
        fit.info["grid_point"] = pt
        fit.info["weights"] = w
        init = (fit.intercept, fit.coefficients)
        fits.append(fit)
    return fits


def _grid_argmin(values, points, rtol=1e-9):
    """Index of the smallest value; near-ties go to the most penalized grid point."""
    values = np.asarray(values, dtype=float)
    best = values.min()
    tied = np.flatnonzero(values <= best + rtol * max(abs(best), 1.0))
    return int(min(tied, key=lambda i: (sum(points[i]), i)))


def top_k(beta, k):
    """Indices of the ``k`` largest |beta| among the nonzeros (ties to the lower index)."""
    nz = np.flatnonzero(beta)
    order = nz[np.lexsort((nz, -np.abs(beta[nz])))]
    return np.sort(order[:k])


def lasso_per_block(design, y, family, rule, truth_support=None, n_points=BLOCK_GRID_POINTS,
                    min_ratio=BLOCK_GRID_MIN_RATIO, oracle_ranking="support"):
    """A separate L1 level per block, chosen over the full K-dimensional grid.

    The oracle rule (needs ``truth_support``) picks the grid point whose
    k-feature selection has the most true positives. With
    ``oracle_ranking="support"`` a grid point's selection is its Lasso
    support, and only points selecting at most k features qualify, which
    mirrors the first-k-entrants rule of the global oracle. With
    ``"magnitude"`` every point qualifies and contributes its k largest
    |coefficients|. Among equal true-positive counts the smaller selection
    wins, then the most penalized point, then grid order. Under CV and
    EBIC, near-tied scores also go to the most penalized grid point.
    """
    _check_rule(rule)
    if design.K > MAX_GRID_BLOCKS:
        raise ConfigError(f"full grid search is limited to {MAX_GRID_BLOCKS} blocks "
                          f"(got {design.K}); refine the grid one block at a time instead")
    family = as_family(family)
    y = family.validate_response(y)
    X = design.X
    grids = block_lambda_grid(design, y, family, n_points, min_ratio)
    points = _grid_points(grids)
    fits = _grid_fits(family, y, X, design, grids, points)

    if isinstance(rule, OracleFirstK):
        if truth_support is None:
            raise ConfigError("the per-block oracle rule needs the true support")
        k = rule.k if rule.per_block is None else sum(rule.per_block)
        if oracle_ranking not in ("support", "magnitude"):
            raise ConfigError(f"unknown oracle ranking {oracle_ranking!r}")
        truth = set(int(j) for j in truth_support)
        best, best_key = None, None
        for i, fit in enumerate(fits):
            if oracle_ranking == "support":
                chosen = np.flatnonzero(fit.coefficients)
                if chosen.size > k:
                    continue
            else:
                chosen = top_k(fit.coefficients, k)
            key = (-len(truth.intersection(chosen.tolist())), chosen.size,
                   sum(fit.info["grid_point"]), i)
            if best_key is None or key < best_key:
                best, best_key = (fit, chosen), key
        # the first grid point is the exact null fit, so some point always qualifies
        fit, chosen = best
        beta = np.zeros(design.p)
        beta[chosen] = fit.coefficients[chosen]
        out = FitResult(fit.intercept, beta, fit.objective, fit.n_iterations, fit.converged,
                        info={"grid_point": fit.info["grid_point"], "chosen": chosen})
        out.info["lambdas"] = np.array([grids[k][j] for k, j in enumerate(fit.info["grid_point"])])
        return out

    if isinstance(rule, ExtendedBic):
        attach_loglik(fits, family, y, X)
        values = [ebic_value(f.info["mean_loglik"], int(np.count_nonzero(f.coefficients)),
                             design.n, design.p, rule.gamma) for f in fits]
        best = _grid_argmin(values, points)
        fit = fits[best]
        fit.info["ebic"] = values[best]
    else:
        def fit_all(rows):
            return _grid_fits(family, y[rows], X[rows], design, grids, points)

        loss = _cv_curve(fit_all, family, y, X, len(fits), rule)
        fit = fits[_grid_argmin(loss, points)]
        fit.info["cv_loss"] = loss
        if isinstance(rule, Stability):
            stab = _stability_refit(family, y, X, fit.info["weights"], rule)
            stab.info["grid_point"] = fit.info["grid_point"]
            fit = stab
    gp = fit.info["grid_point"]
    fit.info["lambdas"] = np.array([grids[k][j] for k, j in enumerate(gp)])
    return fit


__all__ = [
    "OracleFirstK", "CrossValidation", "ExtendedBic", "Stability", "SelectionRule",
    "cv_folds", "heldout_deviance", "attach_loglik", "select_ebic", "ebic_value",
    "lasso_global", "lasso_per_block", "separate_lassos", "adaptive_lasso",
    "select_stability", "ridge_cv", "adaptive_weights", "block_lambda_grid", "top_k",
    "WEIGHT_CAP",
]
