"""Penalized GLM solver.

Minimizes

    -(1/n) l(y; alpha + X beta + offset) + sum_j w_j |beta_j| + eps ||beta||^2

by IRLS: each outer step replaces the likelihood with its quadratic
approximation at the current point, and the weighted least-squares
subproblem is solved by cyclic coordinate descent with active-set sweeps.
The Gaussian family needs a single outer step. The intercept is never
penalized.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from numba import njit

from .errors import NumericError, RejectedInputError
from .glm import BERNOULLI_WEIGHT_FLOOR, GlmFamily, as_family

log = logging.getLogger(__name__)

COEF_TOL = 1e-7
MAX_OUTER = 100
MAX_SWEEPS = 10_000
DIVERGENCE_PATIENCE = 5


@dataclass
class PenaltySpec:
    """Per-feature L1 weights (random multipliers already applied) and ridge strength."""

    l1_weights: np.ndarray
    ridge_eps: float = 0.0
    fit_intercept: bool = True

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.l1_weights, dtype=float))
        if w.ndim != 1:
            raise RejectedInputError("l1_weights must be a vector")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise RejectedInputError("l1_weights must be finite and non-negative")
        if not np.isfinite(self.ridge_eps) or self.ridge_eps < 0:
            raise RejectedInputError("ridge_eps must be finite and non-negative")
        self.l1_weights = w
        self.ridge_eps = float(self.ridge_eps)

    @classmethod
    def uniform(cls, lam, p, ridge_eps=0.0, fit_intercept=True):
        return cls(np.full(p, float(lam)), ridge_eps, fit_intercept)


@dataclass
class FitResult:
    intercept: float
    coefficients: np.ndarray
    objective: float
    n_iterations: int
    converged: bool
    lam: float = None
    info: dict = field(default_factory=dict)

    @property
    def support(self):
        return np.flatnonzero(self.coefficients)

    def signed_support(self):
        return np.sign(self.coefficients).astype(np.int8)


@njit(cache=True, nogil=True)
def _cd_kernel(XT, z, w, l1, ridge, beta, alpha, fit_intercept, tol, max_sweeps, trace):
    """Coordinate descent for (1/2n) sum w_i (z_i - alpha - x_i'beta)^2 + penalties.

    Updates ``beta`` in place; returns (alpha, sweeps, converged).
    """
    p, n = XT.shape
    r = z - alpha
    for j in range(p):
        bj = beta[j]
        if bj != 0.0:
            for i in range(n):
                r[i] -= XT[j, i] * bj
    wsum = 0.0
    for i in range(n):
        wsum += w[i]
    wsum /= n
    xwx = np.zeros(p)
    for j in range(p):
        s = 0.0
        for i in range(n):
            s += w[i] * XT[j, i] * XT[j, i]
        xwx[j] = s / n

    full = True
    converged = False
    sweeps = 0
    while sweeps < max_sweeps:
        maxd = 0.0
        for j in range(p):
            bj = beta[j]
            if not full and bj == 0.0:
                continue
            denom = xwx[j] + 2.0 * ridge
            if denom <= 0.0:
                continue
            g = 0.0
            for i in range(n):
                g += w[i] * XT[j, i] * r[i]
            g = g / n + xwx[j] * bj
            if g > l1[j]:
                new = (g - l1[j]) / denom
            elif g < -l1[j]:
                new = (g + l1[j]) / denom
            else:
                new = 0.0
            if new != bj:
                d = new - bj
                for i in range(n):
                    r[i] -= d * XT[j, i]
                beta[j] = new
                if abs(d) > maxd:
                    maxd = abs(d)
        if fit_intercept and wsum > 0.0:
            s = 0.0
            for i in range(n):
                s += w[i] * r[i]
            da = s / n / wsum
            if da != 0.0:
                alpha += da
                for i in range(n):
                    r[i] -= da
                if abs(da) > maxd:
                    maxd = abs(da)
        sweeps += 1
        if sweeps <= trace.shape[0]:
            obj = 0.0
            for i in range(n):
                obj += w[i] * r[i] * r[i]
            obj /= 2.0 * n
            for j in range(p):
                obj += l1[j] * abs(beta[j]) + ridge * beta[j] * beta[j]
            trace[sweeps - 1] = obj
        if maxd < tol:
            if full:
                converged = True
                break
            full = True
        else:
            full = False
    return alpha, sweeps, converged


def _check_inputs(family, y, X, offset):
    family = as_family(family)
    y = family.validate_response(y)
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise RejectedInputError(f"X has shape {X.shape}, y has length {y.shape[0]}")
    if offset is None:
        offset = np.zeros(y.shape[0])
    else:
        offset = np.asarray(offset, dtype=float)
        if offset.shape != y.shape:
            raise RejectedInputError(f"offset has shape {offset.shape}, expected {y.shape}")
    return family, y, X, offset


def penalized_objective(family, y, X, offset, intercept, beta, l1_weights, ridge_eps):
    eta = intercept + X @ beta + offset
    nll = -float(np.mean(family.pointwise_loglik(y, eta)))
    return nll + float(l1_weights @ np.abs(beta)) + ridge_eps * float(beta @ beta)


def null_intercept(family, y, offset=None):
    """Maximum-likelihood intercept of the model with no features."""
    family = as_family(family)
    y = np.asarray(y, dtype=float)
    offset = np.zeros_like(y) if offset is None else np.asarray(offset, dtype=float)
    if family is GlmFamily.GAUSSIAN:
        return float(np.mean(y - offset))
    if family is GlmFamily.POISSON:
        total = y.sum()
        if total == 0:
            return -30.0
        m = offset.max()
        return float(np.log(total) - m - np.log(np.exp(offset - m).sum()))
    ybar = np.clip(y.mean(), 1e-6, 1 - 1e-6)
    alpha = float(np.log(ybar / (1 - ybar)) - offset.mean())
    for _ in range(50):
        mu = family.mean(alpha + offset)
        h = np.sum(mu * (1 - mu))
        step = np.sum(y - mu) / max(h, 1e-12)
        alpha += step
        if abs(step) < 1e-12:
            break
    return float(alpha)


def fit_penalized(family, y, X, offset=None, penalty=None, *, init=None, tol=COEF_TOL,
                  max_outer=MAX_OUTER, max_sweeps=MAX_SWEEPS, debug=False, _XT=None):
    """Weighted-L1 (plus optional ridge) penalized GLM fit.

    ``init`` is an optional ``(intercept, coefficients)`` warm start. With
    ``debug=True`` the surrogate objective after every coordinate sweep is
    recorded in ``result.info["sweep_objectives"]`` and checked to be
    non-increasing.
    """
    family, y, X, offset = _check_inputs(family, y, X, offset)
    n, p = X.shape
    if penalty is None:
        penalty = PenaltySpec(np.zeros(p))
    l1 = penalty.l1_weights
    if l1.shape != (p,):
        raise RejectedInputError(f"l1_weights has length {l1.shape[0]}, expected {p}")
    ridge = penalty.ridge_eps
    XT = np.ascontiguousarray(X.T) if _XT is None else _XT

    if init is None:
        beta = np.zeros(p)
        alpha = null_intercept(family, y, offset) if penalty.fit_intercept else 0.0
    else:
        alpha = float(init[0]) if penalty.fit_intercept else 0.0
        beta = np.array(init[1], dtype=float)
    trace_len = max_sweeps if debug else 0
    sweep_objectives = []

    def run_kernel(z, w, beta, alpha):
        trace = np.full(trace_len, np.nan)
        alpha, sweeps, ok = _cd_kernel(XT, z, w, l1, ridge, beta, alpha,
                                       penalty.fit_intercept, tol, max_sweeps, trace)
        if debug:
            vals = trace[:sweeps]
            if np.any(np.diff(vals) > 1e-12 * np.maximum(1.0, np.abs(vals[1:]))):
                raise NumericError("coordinate descent objective increased between sweeps")
            sweep_objectives.append(vals)
        return alpha, sweeps, ok

    if family is GlmFamily.GAUSSIAN:
        z = y - offset
        alpha, sweeps, ok = run_kernel(z, np.ones(n), beta, alpha)
        obj = penalized_objective(family, y, X, offset, alpha, beta, l1, ridge)
        info = {"sweeps": sweeps}
        if debug:
            info["sweep_objectives"] = sweep_objectives
        return FitResult(alpha, beta, obj, 1, ok, info=info)

    obj = penalized_objective(family, y, X, offset, alpha, beta, l1, ridge)
    increases = 0
    converged = False
    total_sweeps = 0
    outer = 0
    for outer in range(1, max_outer + 1):
        eta = alpha + X @ beta + offset
        mu = family.mean(eta)
        w = family.variance_weights(eta)
        if family is GlmFamily.BERNOULLI:
            w = np.maximum(w, BERNOULLI_WEIGHT_FLOOR)
        else:
            w = np.maximum(w, 1e-10)
        if not np.all(np.isfinite(w)):
            raise NumericError("non-finite IRLS weights")
        z = eta - offset + (y - mu) / w
        new_beta = beta.copy()
        new_alpha, sweeps, inner_ok = run_kernel(z, w, new_beta, alpha)
        total_sweeps += sweeps
        new_obj = penalized_objective(family, y, X, offset, new_alpha, new_beta, l1, ridge)
        # step halving keeps the outer loop monotone
        halvings = 0
        while not new_obj <= obj + 1e-12 * max(1.0, abs(obj)) and halvings < 30:
            new_beta = 0.5 * (new_beta + beta)
            new_alpha = 0.5 * (new_alpha + alpha)
            new_obj = penalized_objective(family, y, X, offset, new_alpha, new_beta, l1, ridge)
            halvings += 1
        if not np.isfinite(new_obj):
            raise NumericError("IRLS produced a non-finite objective")
        if new_obj > obj:
            increases += 1
            if increases >= DIVERGENCE_PATIENCE:
                raise NumericError("IRLS diverged: objective increased over "
                                   f"{DIVERGENCE_PATIENCE} consecutive iterations")
        else:
            increases = 0
        change = max(np.max(np.abs(new_beta - beta), initial=0.0), abs(new_alpha - alpha))
        beta, alpha = new_beta, new_alpha
        rel = abs(obj - new_obj) / max(1.0, abs(new_obj))
        obj = new_obj
        if inner_ok and (change < tol or rel < 1e-14):
            converged = True
            break
    info = {"sweeps": total_sweeps}
    if debug:
        info["sweep_objectives"] = sweep_objectives
    return FitResult(alpha, beta, obj, outer, converged, info=info)


def lambda_max(family, y, X, offset=None, penalty_factor=None, fit_intercept=True):
    """Smallest uniform L1 level at which the null model is optimal."""
    family, y, X, offset = _check_inputs(family, y, X, offset)
    alpha = null_intercept(family, y, offset) if fit_intercept else 0.0
    g = np.abs(X.T @ (y - family.mean(alpha + offset))) / y.shape[0]
    if penalty_factor is not None:
        pf = np.asarray(penalty_factor, dtype=float)
        g = np.where(pf > 0, g / np.where(pf > 0, pf, 1.0), 0.0)
    return float(g.max()) if g.size else 0.0


def lasso_path(family, y, X, offset=None, n_lambda=100, lambda_min_ratio=0.01, *,
               lambdas=None, penalty_factor=None, ridge_eps=0.0, fit_intercept=True,
               tol=COEF_TOL):
    """Warm-started fits along a decreasing geometric lambda grid.

    Feature j is penalized by ``lam * penalty_factor[j]``. The first grid
    point is the null-model threshold and returns the null model exactly.
    Each result carries its grid value in ``.lam``.
    """
    family, y, X, offset = _check_inputs(family, y, X, offset)
    n, p = X.shape
    pf = np.ones(p) if penalty_factor is None else np.asarray(penalty_factor, dtype=float)
    if lambdas is None:
        if n_lambda < 2:
            raise RejectedInputError("n_lambda must be at least 2")
        lmax = lambda_max(family, y, X, offset, pf, fit_intercept)
        if lmax <= 0:
            lmax = 1e-12
        lambdas = lmax * np.geomspace(1.0, lambda_min_ratio, n_lambda)
        exact_null = True
    else:
        lambdas = np.asarray(lambdas, dtype=float)
        exact_null = False
    XT = np.ascontiguousarray(X.T)
    alpha0 = null_intercept(family, y, offset) if fit_intercept else 0.0
    init = (alpha0, np.zeros(p))
    path = []
    for i, lam in enumerate(lambdas):
        if i == 0 and exact_null:
            obj = penalized_objective(family, y, X, offset, alpha0, np.zeros(p), lam * pf, ridge_eps)
            fit = FitResult(alpha0, np.zeros(p), obj, 0, True)
        else:
            spec = PenaltySpec(lam * pf, ridge_eps, fit_intercept)
            fit = fit_penalized(family, y, X, offset, spec, init=init, tol=tol, _XT=XT)
        fit.lam = float(lam)
        path.append(fit)
        init = (fit.intercept, fit.coefficients)
    return path


def entry_order(path):
    """Features in order of first entry along ``path``.

    Ties (same entry point) go to the larger |coefficient| at entry, then to
    the smaller column index. Features that never enter are omitted.
    """
    if not path:
        return np.array([], dtype=int)
    coefs = np.array([f.coefficients for f in path])
    nonzero = coefs != 0
    entered = nonzero.any(axis=0)
    first = np.where(entered, nonzero.argmax(axis=0), len(path))
    magnitude = np.abs(coefs[np.minimum(first, len(path) - 1), np.arange(coefs.shape[1])])
    cols = np.flatnonzero(entered)
    keys = sorted(cols, key=lambda j: (first[j], -magnitude[j], j))
    return np.array(keys, dtype=int)


def first_k_entrants(path, k):
    """The first ``k`` features to enter the path (fewer if the path never gets there)."""
    if k <= 0:
        return np.array([], dtype=int)
    return entry_order(path)[:k]


def path_prefix_fit(path, k):
    """Coefficients of the path point where the k-th entrant first appears,
    restricted to the first ``k`` entrants.

    Returns ``(fit, chosen)``; ``fit`` is a copy with all other coefficients
    zeroed. If fewer than ``k`` features ever enter, all entrants are used at
    the last path point.
    """
    chosen = first_k_entrants(path, k)
    if chosen.size == 0:
        fit = path[0]
        return FitResult(fit.intercept, np.zeros_like(fit.coefficients), fit.objective,
                         fit.n_iterations, fit.converged, fit.lam), chosen
    coefs = np.array([f.coefficients for f in path])
    last = chosen[-1]
    idx = int(np.argmax(coefs[:, last] != 0))
    if chosen.size < k:
        idx = len(path) - 1
    src = path[idx]
    beta = np.zeros_like(src.coefficients)
    beta[chosen] = src.coefficients[chosen]
    # a chosen feature may have left the model by this point
    missing = chosen[beta[chosen] == 0]
    for j in missing:
        col = coefs[:, j]
        beta[j] = col[np.flatnonzero(col)[0]]
    return FitResult(src.intercept, beta, src.objective, src.n_iterations, src.converged,
                     src.lam), chosen


def ridge_refit(family, y, X, offset=None, eps=0.0, *, fit_intercept=True, init=None,
                tol=1e-10, max_iter=MAX_OUTER):
    """Ridge-penalized GLM on the given columns by damped Newton iterations.

    Each Newton system is solved exactly, so the result does not depend on
    coordinate-descent tolerances and remains well-defined when there are
    more columns than rows (for ``eps > 0``).
    """
    family, y, X, offset = _check_inputs(family, y, X, offset)
    n, m = X.shape
    if eps < 0:
        raise RejectedInputError("eps must be non-negative")
    A = np.hstack([np.ones((n, 1)), X]) if fit_intercept else X
    d = np.full(A.shape[1], 2.0 * eps)
    if fit_intercept:
        d[0] = 0.0
    theta = np.zeros(A.shape[1])
    if init is not None:
        if fit_intercept:
            theta[0] = init[0]
            theta[1:] = init[1]
        else:
            theta[:] = init[1]
    elif fit_intercept:
        theta[0] = null_intercept(family, y, offset)

    def objective(th):
        eta = A @ th + offset
        return -float(np.mean(family.pointwise_loglik(y, eta))) + 0.5 * float(d @ (th * th))

    obj = objective(theta)
    converged = False
    it = 0
    increases = 0
    for it in range(1, max_iter + 1):
        eta = A @ theta + offset
        mu = family.mean(eta)
        w = family.variance_weights(eta)
        if family is GlmFamily.BERNOULLI:
            w = np.maximum(w, BERNOULLI_WEIGHT_FLOOR)
        grad = -(A.T @ (y - mu)) / n + d * theta
        H = (A * w[:, None]).T @ A / n
        H[np.diag_indices_from(H)] += d
        try:
            step = scipy.linalg.solve(H, grad, assume_a="pos")
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
            step = np.linalg.lstsq(H, grad, rcond=None)[0]
        new = theta - step
        new_obj = objective(new)
        halvings = 0
        while not new_obj <= obj + 1e-12 * max(1.0, abs(obj)) and halvings < 30:
            step *= 0.5
            new = theta - step
            new_obj = objective(new)
            halvings += 1
        if not np.isfinite(new_obj):
            raise NumericError("ridge refit produced a non-finite objective")
        if new_obj > obj:
            increases += 1
            if increases >= DIVERGENCE_PATIENCE:
                raise NumericError("ridge refit diverged")
        else:
            increases = 0
        change = np.max(np.abs(new - theta), initial=0.0)
        theta, obj = new, new_obj
        if family is GlmFamily.GAUSSIAN or change < tol:
            converged = True
            break
    if fit_intercept:
        alpha, beta = float(theta[0]), theta[1:].copy()
    else:
        alpha, beta = 0.0, theta.copy()
    return FitResult(alpha, beta, obj, it, converged)
