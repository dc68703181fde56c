"""Block-randomized adaptive iterative Lasso and the plain blockwise Lasso.

Both iterate over the design blocks, refitting one block at a time with
the fitted contribution of every other block held fixed as an offset.
B-RAIL additionally adapts each block's penalty level from the previous
iterate, estimates the block's support by randomized-Lasso stability
selection on bootstrap resamples, and refits the selected coefficients
with a small ridge penalty. It stops once the signed support repeats.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import Domain
from .errors import ConfigError, NumericError
from .glm import GlmFamily, as_family, max_eigenvalue_gram
from .solver import (FitResult, PenaltySpec, fit_penalized, lasso_path, null_intercept,
                     path_prefix_fit, penalized_objective, ridge_refit)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BrailConfig:
    tau: float = 0.8
    n_bootstrap: int = 100
    init_sparsity: float = 0.2
    # None means 0.001 / p
    ridge_eps: float = None
    max_outer_iterations: int = 50
    rng_seed: int = 0
    gamma_range: tuple = (0.5, 1.5)
    n_lambda: int = 100
    lambda_min_ratio: float = 0.01
    max_drop_fraction: float = 0.2
    n_jobs: int = 1

    def __post_init__(self):
        if not 0 < self.tau < 1:
            raise ConfigError(f"tau must lie in (0, 1), got {self.tau}")
        if self.n_bootstrap < 2:
            raise ConfigError(f"n_bootstrap must be at least 2, got {self.n_bootstrap}")
        if not 0 < self.init_sparsity < 1:
            raise ConfigError(f"init_sparsity must lie in (0, 1), got {self.init_sparsity}")
        if self.max_outer_iterations < 1:
            raise ConfigError("max_outer_iterations must be positive")
        lo, hi = self.gamma_range
        if not 0 < lo <= hi:
            raise ConfigError(f"invalid gamma_range {self.gamma_range}")

    def eps_for(self, p):
        return 0.001 / p if self.ridge_eps is None else float(self.ridge_eps)


@dataclass
class BrailState:
    """Iteration state. Per-block lists are indexed by design block order."""

    t: int
    beta: list
    intercept: float
    eta: np.ndarray
    lambdas: list
    stability_freq: list
    support_history: list
    order: list
    converged: bool = False
    eta_history: list = field(default_factory=list)

    def full_beta(self):
        return np.concatenate(self.beta)


@dataclass
class BrailResult:
    intercept: float
    coefficients: np.ndarray
    blocks: list
    state: BrailState

    @property
    def support(self):
        return np.flatnonzero(self.coefficients)

    @property
    def converged(self):
        return self.state.converged

    @property
    def n_iterations(self):
        return self.state.t


def block_order(design):
    """Iteration order: by width if some block fits in n, else continuous blocks first."""
    K = design.K
    widths = design.widths
    if any(w <= design.n for w in widths):
        return sorted(range(K), key=lambda k: widths[k])
    continuous = [k for k in range(K) if design.blocks[k].domain is Domain.CONTINUOUS]
    return continuous + [k for k in range(K) if k not in continuous]


def initialize(design, y, family, config):
    """Over-selected starting point from a separate Lasso path per block."""
    family = as_family(family)
    y = family.validate_response(y)
    beta = []
    for k, block in enumerate(design.blocks):
        target = math.ceil(config.init_sparsity * block.p)
        path = lasso_path(family, y, design.block_matrix(k), None,
                          config.n_lambda, config.lambda_min_ratio)
        fit, chosen = path_prefix_fit(path, target)
        if chosen.size < target:
            log.warning("block %s: lasso path reached %d of %d initial features",
                        block.name, chosen.size, target)
        beta.append(fit.coefficients)
    signed = np.sign(np.concatenate(beta)).astype(np.int8)
    return BrailState(
        t=0,
        beta=beta,
        intercept=null_intercept(family, y),
        eta=np.zeros(design.K),
        lambdas=[None] * design.K,
        stability_freq=[None] * design.K,
        support_history=[signed],
        order=block_order(design),
    )


def design_gram_max(design):
    return max_eigenvalue_gram(design.X)


def adaptive_eta(design, y, family, beta_prev, k, intercept=0.0, xtx_max=None):
    """Block penalty scale: domain correction x signal correction x Lasso rate.

    ``beta_prev`` is the full previous iterate. Returns 0 when block ``k``
    has no nonzero coefficients; callers apply :func:`eta_floor`.
    """
    family = as_family(family)
    n = design.n
    block = design.blocks[k]
    bk = np.asarray(beta_prev, dtype=float)[block.columns]
    l0 = int(np.count_nonzero(bk))
    if l0 == 0:
        return 0.0
    if family is GlmFamily.GAUSSIAN:
        domain = 1.0
    else:
        eta_lin = intercept + design.X @ beta_prev
        w = family.variance_weights(eta_lin)
        if not np.all(np.isfinite(w)):
            bad = int(np.flatnonzero(~np.isfinite(w))[0])
            raise NumericError(f"non-finite variance weight at row {bad}")
        if xtx_max is None:
            xtx_max = design_gram_max(design)
        domain = max_eigenvalue_gram(design.X, w) / xtx_max
    signal = np.linalg.norm(bk) / math.sqrt(n)
    rate = math.sqrt(math.log(block.p) / n * l0)
    return domain * signal * rate


def eta_floor(etas, k, p_k, n):
    """Replacement scale for a block whose previous estimate is empty."""
    others = [e for j, e in enumerate(etas) if j != k and e > 0]
    if others:
        return float(np.mean(others))
    return math.sqrt(math.log(max(p_k, 2)) / n)


def block_penalties(eta_k, beta_prev_k):
    """eta for previously selected features, 2 eta for the rest."""
    beta_prev_k = np.asarray(beta_prev_k)
    return np.where(beta_prev_k != 0, eta_k, 2.0 * eta_k)


def select_stable(freq, tau):
    """Indices whose selection frequency reaches ``tau``."""
    return np.flatnonzero(np.asarray(freq) >= tau)


def draw_resamples(rng, n, p_k, n_bootstrap, gamma_range=(0.5, 1.5)):
    """Bootstrap row indices and penalty multipliers, all drawn up front."""
    rows = rng.integers(0, n, size=(n_bootstrap, n))
    gammas = rng.uniform(gamma_range[0], gamma_range[1], size=(n_bootstrap, p_k))
    return rows, gammas


def bootstrap_frequencies(family, y, Xk, offset, lam, rows, gammas, init=None, n_jobs=1,
                          max_drop_fraction=0.2):
    """Selection frequency of each column over randomized-Lasso bootstrap fits.

    Returns ``(freq, n_used)``. A resample whose fit fails numerically is
    dropped; more than ``max_drop_fraction`` drops is an error.
    """
    B = rows.shape[0]
    lam = np.asarray(lam, dtype=float)

    def one(b):
        idx = rows[b]
        spec = PenaltySpec(gammas[b] * lam)
        try:
            fit = fit_penalized(family, y[idx], Xk[idx], offset[idx], spec, init=init)
        except NumericError:
            return None
        return fit.coefficients != 0

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            picks = list(pool.map(one, range(B)))
    else:
        picks = [one(b) for b in range(B)]
    kept = [s for s in picks if s is not None]
    dropped = B - len(kept)
    if dropped > max_drop_fraction * B:
        raise NumericError(f"{dropped} of {B} bootstrap fits failed")
    if dropped:
        log.warning("%d of %d bootstrap fits failed and were dropped", dropped, B)
    freq = np.mean(kept, axis=0) if kept else np.zeros(Xk.shape[1])
    return freq, len(kept)


def stability_select_block(design, y, family, k, lam_k, offset, config, rng, init=None,
                           tau=None):
    """Randomized-Lasso stability selection for block ``k``.

    Rows of ``(y, X_k, offset)`` are resampled jointly. Returns the selected
    block-local indices and the frequency vector.
    """
    family = as_family(family)
    Xk = design.block_matrix(k)
    rows, gammas = draw_resamples(rng, design.n, Xk.shape[1], config.n_bootstrap,
                                  config.gamma_range)
    freq, _ = bootstrap_frequencies(family, y, Xk, np.asarray(offset, dtype=float), lam_k,
                                    rows, gammas, init, config.n_jobs,
                                    config.max_drop_fraction)
    return select_stable(freq, config.tau if tau is None else tau), freq


def fit_brail(design, y, family, config=None):
    """Run B-RAIL to signed-support convergence (or the iteration cap)."""
    config = config or BrailConfig()
    family = as_family(family)
    y = family.validate_response(y)
    X = design.X
    n, p = X.shape
    eps = config.eps_for(p)
    rng = np.random.default_rng(config.rng_seed)
    state = initialize(design, y, family, config)
    xtx_max = None if family is GlmFamily.GAUSSIAN else design_gram_max(design)
    alpha = state.intercept

    for t in range(1, config.max_outer_iterations + 1):
        state.t = t
        beta_prev = state.full_beta()
        alpha_prev = alpha
        fitted = X @ beta_prev
        # every eta^(t) depends on beta^(t-1) only, so all are known up front
        try:
            raw = np.array([adaptive_eta(design, y, family, beta_prev, k, alpha_prev, xtx_max)
                            for k in range(design.K)])
        except NumericError as exc:
            raise NumericError(f"t={t}: {exc}") from exc
        for k in range(design.K):
            if raw[k] <= 0:
                raw[k] = eta_floor(raw, k, design.blocks[k].p, n)
                log.info("t=%d block %s: empty previous estimate, eta floored to %.4g",
                         t, design.blocks[k].name, raw[k])
        state.eta = raw
        for k in state.order:
            block = design.blocks[k]
            Xk = design.block_matrix(k)
            try:
                lam = block_penalties(state.eta[k], beta_prev[block.columns])
                offset = fitted - Xk @ state.beta[k]
                selected, freq = stability_select_block(
                    design, y, family, k, lam, offset, config, rng,
                    init=(alpha, state.beta[k]))
                refit = ridge_refit(family, y, Xk[:, selected], offset, eps)
            except NumericError as exc:
                raise NumericError(f"t={t}, block {block.name!r}: {exc}") from exc
            new_k = np.zeros(block.p)
            new_k[selected] = refit.coefficients
            fitted = offset + Xk @ new_k
            state.beta[k] = new_k
            state.lambdas[k] = lam
            state.stability_freq[k] = freq
            alpha = refit.intercept
        state.intercept = alpha
        state.eta_history.append(state.eta.copy())
        signed = np.sign(state.full_beta()).astype(np.int8)
        state.support_history.append(signed)
        if np.array_equal(signed, state.support_history[-2]):
            state.converged = True
            break
    if not state.converged:
        log.warning("B-RAIL stopped at the %d-iteration cap without support convergence",
                    config.max_outer_iterations)

    coef = state.full_beta()
    eta_lin = alpha + X @ coef
    blocks = []
    for k, block in enumerate(design.blocks):
        bk = state.beta[k]
        obj = -float(np.mean(family.pointwise_loglik(y, eta_lin))) + eps * float(bk @ bk)
        blocks.append(FitResult(alpha, bk.copy(), obj, state.t, state.converged))
    return BrailResult(alpha, coef, blocks, state)


def fit_blockwise_lasso(design, y, family, l1_weights, init=None, *, max_iter=1000,
                        obj_tol=1e-8, coef_tol=1e-8, inner_tol=1e-10):
    """Block coordinate descent on the jointly penalized GLM with fixed weights.

    Block ``k`` is refit with the other blocks' fitted values as an offset and
    a shared intercept. Stops when the signed support repeats, the objective
    moves by less than ``obj_tol`` and no coefficient moves more than
    ``coef_tol`` over a full pass. The objective after every block update is
    kept in ``result.info["objective_trace"]``.
    """
    family = as_family(family)
    y = family.validate_response(y)
    X = design.X
    w = np.asarray(l1_weights, dtype=float)
    if w.ndim == 0:
        w = np.full(design.p, float(w))
    beta = np.zeros(design.p) if init is None else np.array(init, dtype=float)
    alpha = null_intercept(family, y)
    zero = np.zeros(design.n)
    obj = penalized_objective(family, y, X, zero, alpha, beta, w, 0.0)
    trace = [obj]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        before = beta.copy()
        obj_before = obj
        for k, block in enumerate(design.blocks):
            cols = block.columns
            Xk = X[:, cols]
            offset = X @ beta - Xk @ beta[cols]
            fit = fit_penalized(family, y, Xk, offset, PenaltySpec(w[cols]),
                                init=(alpha, beta[cols]), tol=inner_tol)
            beta[cols] = fit.coefficients
            alpha = fit.intercept
            obj = penalized_objective(family, y, X, zero, alpha, beta, w, 0.0)
            trace.append(obj)
        same_sign = np.array_equal(np.sign(beta), np.sign(before))
        moved = np.max(np.abs(beta - before), initial=0.0)
        if same_sign and abs(obj_before - obj) < obj_tol and moved < coef_tol:
            converged = True
            break
    return FitResult(alpha, beta, obj, it, converged, info={"objective_trace": trace})
