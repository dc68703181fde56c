"""Simulation designs, response models, and support-recovery scoring.

Covariate designs: iid blocks, heteroscedastic blocks, and a block directed
Markov random field sampled blockwise (Poisson MRF, then an Ising CRF given
the counts, then a Gaussian CRF given both). True coefficients are 10 per
block with magnitudes Unif(4, 10) and random signs unless overridden.
"""

import logging
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy import stats
from numba import njit

from .data import Domain, blocks_from_widths, standardize
from .errors import ConfigError
from .glm import GlmFamily, as_family

log = logging.getLogger(__name__)


class DesignKind(str, Enum):
    IID = "iid"
    HETEROSCEDASTIC = "heteroscedastic"
    BLOCK_DIRECTED_GRAPH = "bdmrf"


@dataclass(frozen=True)
class GibbsParams:
    """Graph and sampler constants for the block directed MRF design."""

    gaussian_weight: float = 0.4
    binary_weight: float = 0.1
    poisson_weight: float = 0.4
    between_weight: float = 0.1
    between_edges_per_node: float = 1.0
    poisson_base_mean: float = 1.0
    poisson_truncation: int = 50
    burn_in: int = 1000
    thin: int = 10


@dataclass(frozen=True)
class SimDesign:
    kind: DesignKind = DesignKind.IID
    n: int = 200
    widths: tuple = (100, 100, 100)
    domains: tuple = (Domain.CONTINUOUS, Domain.BINARY, Domain.COUNT)
    n_true: tuple = (10, 10, 10)
    signal_low: float = 4.0
    signal_high: float = 10.0
    # multiplier on the continuous block's true magnitudes in non-iid designs
    gaussian_snr_multiplier: float = 0.5
    response: GlmFamily = GlmFamily.GAUSSIAN
    noise_sd: float = 1.0
    poisson_mean: float = 1.0
    gibbs: GibbsParams = field(default_factory=GibbsParams)
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", DesignKind(self.kind))
        object.__setattr__(self, "response", as_family(self.response))
        object.__setattr__(self, "domains", tuple(Domain(d) for d in self.domains))
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        object.__setattr__(self, "n_true", tuple(int(s) for s in self.n_true))
        if self.n < 1:
            raise ConfigError("n must be positive")
        if not len(self.widths) == len(self.domains) == len(self.n_true):
            raise ConfigError("widths, domains and n_true must have equal length")
        if any(s > w or s < 0 for s, w in zip(self.n_true, self.widths)):
            raise ConfigError("n_true must satisfy 0 <= s_k <= p_k")
        if self.kind is DesignKind.BLOCK_DIRECTED_GRAPH and set(self.domains) - {
                Domain.CONTINUOUS, Domain.BINARY, Domain.COUNT}:
            raise ConfigError("the block directed MRF supports continuous, binary, count blocks")


@dataclass(frozen=True)
class GroundTruth:
    beta: np.ndarray
    supports: tuple
    blocks: tuple
    # symmetric feature adjacency of the block directed MRF (None for other designs)
    graph: np.ndarray = None

    @property
    def support(self):
        return np.flatnonzero(self.beta)

    @property
    def signs(self):
        return np.sign(self.beta)

    def rows(self):
        """``(feature index, block name, coefficient)`` for every true feature."""
        out = []
        for block in self.blocks:
            for j in range(block.start, block.stop):
                if self.beta[j] != 0:
                    out.append((j, block.name, float(self.beta[j])))
        return out


@dataclass(frozen=True)
class RecoveryMetrics:
    tpr: float
    fdp: float
    block_tpr: dict
    block_fdp: dict

    @property
    def score(self):
        """TPR * (1 - FDP), the figure of merit used to rank methods."""
        return self.tpr * (1.0 - self.fdp)


def _tpr_fdp(selected, truth):
    hits = len(selected & truth)
    tpr = hits / len(truth) if truth else 0.0
    fdp = (len(selected) - hits) / max(1, len(selected))
    return tpr, fdp


def score(selected, truth, blocks=None):
    """Overall and per-block TPR / FDP of an estimated support."""
    blocks = truth.blocks if blocks is None else blocks
    est = {int(j) for j in np.asarray(selected, dtype=int).ravel()}
    true = {int(j) for j in truth.support}
    tpr, fdp = _tpr_fdp(est, true)
    btpr, bfdp = {}, {}
    for block in blocks:
        r = range(block.start, block.stop)
        btpr[block.name], bfdp[block.name] = _tpr_fdp(
            {j for j in est if j in r}, {j for j in true if j in r})
    return RecoveryMetrics(tpr, fdp, btpr, bfdp)


def draw_coefficients(design, blocks, rng):
    beta = np.zeros(sum(design.widths))
    supports = []
    for block, s, domain in zip(blocks, design.n_true, design.domains):
        idx = np.sort(rng.choice(block.p, size=s, replace=False)) + block.start
        mags = rng.uniform(design.signal_low, design.signal_high, size=s)
        signs = rng.choice([-1.0, 1.0], size=s)
        if domain is Domain.CONTINUOUS and design.kind is not DesignKind.IID:
            mags = mags * design.gaussian_snr_multiplier
        beta[idx] = mags * signs
        supports.append(idx)
    return GroundTruth(beta, tuple(supports), tuple(blocks))


def _iid_block(domain, n, p, rng, poisson_mean):
    if domain is Domain.CONTINUOUS:
        return rng.standard_normal((n, p))
    if domain is Domain.BINARY:
        return (rng.random((n, p)) < 0.5).astype(float)
    if domain is Domain.COUNT:
        return rng.poisson(poisson_mean, size=(n, p)).astype(float)
    return rng.random((n, p))


def _heteroscedastic_block(domain, n, p, rng):
    if domain is Domain.CONTINUOUS:
        sigma = rng.gamma(3.0, 0.6, size=p)
        return rng.standard_normal((n, p)) * sigma
    if domain is Domain.BINARY:
        prob = rng.uniform(0.2, 0.8, size=p)
        return (rng.random((n, p)) < prob).astype(float)
    if domain is Domain.COUNT:
        lam = rng.gamma(4.0, 0.6, size=p)
        return rng.poisson(lam, size=(n, p)).astype(float)
    a = rng.uniform(0.5, 3.0, size=p)
    return rng.beta(a, a, size=(n, p))


def chain_edges(p):
    return [(j, j + 1) for j in range(p - 1)]


def chain_matrix(p, weight):
    """Symmetric within-block chain adjacency with the given edge weight."""
    A = np.zeros((p, p))
    for i, j in chain_edges(p):
        A[i, j] = A[j, i] = weight
    return A


def between_matrix(p_to, p_from, weight, edges_per_node, rng):
    """Sparse random cross-block interaction matrix (p_to x p_from)."""
    m = int(round(edges_per_node * p_to))
    G = np.zeros((p_to, p_from))
    if m == 0 or p_from == 0:
        return G
    rows = rng.integers(0, p_to, size=m)
    cols = rng.integers(0, p_from, size=m)
    G[rows, cols] = weight
    return G


@njit(cache=True)
def _poisson_sweep(X, nbr_idx, nbr_w, nbr_ptr, theta, c, trunc, log_fact, U):
    n, p = X.shape
    logits = np.empty(trunc + 1)
    for j in range(p):
        for i in range(n):
            lr = theta[j]
            for e in range(nbr_ptr[j], nbr_ptr[j + 1]):
                lr += nbr_w[e] * (np.log1p(X[i, nbr_idx[e]]) - c)
            top = -np.inf
            for v in range(trunc + 1):
                logits[v] = lr * v - log_fact[v]
                if logits[v] > top:
                    top = logits[v]
            total = 0.0
            for v in range(trunc + 1):
                logits[v] = np.exp(logits[v] - top)
                total += logits[v]
            target = U[j, i] * total
            acc = 0.0
            draw = trunc
            for v in range(trunc + 1):
                acc += logits[v]
                if acc >= target:
                    draw = v
                    break
            X[i, j] = draw


@njit(cache=True)
def _ising_sweep(S, nbr_idx, nbr_w, nbr_ptr, field_in, U):
    n, p = S.shape
    for j in range(p):
        for i in range(n):
            h = field_in[i, j]
            for e in range(nbr_ptr[j], nbr_ptr[j + 1]):
                h += nbr_w[e] * S[i, nbr_idx[e]]
            prob = 1.0 / (1.0 + np.exp(-2.0 * h))
            S[i, j] = 1.0 if U[j, i] < prob else -1.0


def _adjacency_lists(A):
    """CSR-style neighbor lists of a symmetric interaction matrix."""
    ptr = [0]
    idx, w = [], []
    for j in range(A.shape[0]):
        nb = np.flatnonzero(A[j])
        idx.extend(nb.tolist())
        w.extend(A[j, nb].tolist())
        ptr.append(len(idx))
    return (np.array(idx, dtype=np.int64), np.array(w, dtype=float),
            np.array(ptr, dtype=np.int64))


def gibbs_poisson_mrf(n, A, params, rng, theta=None):
    """Pairwise Poisson MRF with truncated conditionals, sampled by Gibbs.

    Node j given the rest is Poisson with log-rate
    ``theta_j + sum_k A_jk (log(1 + x_k) - c)`` restricted to
    ``{0, ..., truncation}``. The log(1 + x) statistic keeps the
    positive-dependence chain from running away; ``c`` centers it at the
    base mean so theta fixes the marginal scale. The n samples are n
    independent chains, each read off after ``burn_in + thin`` sweeps.
    """
    p = A.shape[0]
    base = params.poisson_base_mean
    theta = np.full(p, np.log(base)) if theta is None else np.asarray(theta, dtype=float)
    trunc = int(params.poisson_truncation)
    log_fact = np.concatenate([[0.0], np.cumsum(np.log(np.arange(1, trunc + 1)))])
    X = np.minimum(rng.poisson(base, size=(n, p)), trunc).astype(float)
    idx, w, ptr = _adjacency_lists(A)
    for _ in range(params.burn_in + params.thin):
        _poisson_sweep(X, idx, w, ptr, theta, np.log1p(base), trunc, log_fact,
                       rng.random((p, n)))
    return X


def gibbs_ising_crf(n, A, field_in, rng, params):
    """Ising CRF over +-1 spins with an external field (n x p), returned as 0/1."""
    p = A.shape[0]
    S = rng.choice([-1.0, 1.0], size=(n, p))
    idx, w, ptr = _adjacency_lists(A)
    field_in = np.ascontiguousarray(field_in, dtype=float)
    for _ in range(params.burn_in + params.thin):
        _ising_sweep(S, idx, w, ptr, field_in, rng.random((p, n)))
    return (S > 0).astype(float)


def gaussian_crf(n, p, weight, field_in, rng):
    """Gaussian CRF with chain precision (1 on the diagonal, -weight off it).

    The conditional given the other blocks is Gaussian with precision
    ``Omega`` and mean ``Omega^{-1} field``, so it is drawn exactly.
    """
    Omega = np.eye(p) - chain_matrix(p, weight)
    L = np.linalg.cholesky(Omega)
    mean = np.linalg.solve(Omega, field_in.T).T
    z = rng.standard_normal((n, p))
    # L^{-T} z has covariance Omega^{-1}
    return mean + np.linalg.solve(L.T, z.T).T


def _bdmrf(design, rng):
    """Poisson block first, then binary given counts, then Gaussian given both.

    Returns the raw matrix and the symmetric adjacency of all pairwise
    interactions (within-block chains and between-block edges).
    """
    params = design.gibbs
    n = design.n
    starts = np.concatenate([[0], np.cumsum(design.widths)])
    A = np.zeros((starts[-1], starts[-1]))
    by_domain = {d: i for i, d in enumerate(design.domains)}
    cols = [None] * len(design.widths)

    def place(k, M, weight):
        sl = slice(starts[k], starts[k + 1])
        A[sl, sl] = (M != 0) * weight

    def link(k, sources, G):
        rows = np.arange(starts[k], starts[k + 1])
        src = np.concatenate([np.arange(starts[s], starts[s + 1]) for s in sources]) \
            if sources else np.zeros(0, dtype=int)
        for i, j in zip(*np.nonzero(G)):
            A[rows[i], src[j]] = A[src[j], rows[i]] = G[i, j]

    counts_std = np.zeros((n, 0))
    count_src = []
    if Domain.COUNT in by_domain:
        k = by_domain[Domain.COUNT]
        p = design.widths[k]
        C = chain_matrix(p, params.poisson_weight)
        place(k, C, params.poisson_weight)
        cols[k] = gibbs_poisson_mrf(n, C, params, rng)
        sd = cols[k].std(axis=0)
        counts_std = (cols[k] - cols[k].mean(axis=0)) / np.where(sd > 0, sd, 1.0)
        count_src = [k]
    spins_std = np.zeros((n, 0))
    spin_src = []
    if Domain.BINARY in by_domain:
        k = by_domain[Domain.BINARY]
        p = design.widths[k]
        G = between_matrix(p, counts_std.shape[1], params.between_weight,
                           params.between_edges_per_node, rng)
        link(k, count_src, G)
        field_in = counts_std @ G.T
        C = chain_matrix(p, params.binary_weight)
        place(k, C, params.binary_weight)
        cols[k] = gibbs_ising_crf(n, C, field_in, rng, params)
        spins_std = 2.0 * cols[k] - 1.0
        spin_src = [k]
    if Domain.CONTINUOUS in by_domain:
        k = by_domain[Domain.CONTINUOUS]
        p = design.widths[k]
        others = np.hstack([spins_std, counts_std])
        G = between_matrix(p, others.shape[1], params.between_weight,
                           params.between_edges_per_node, rng)
        link(k, spin_src + count_src, G)
        place(k, chain_matrix(p, params.gaussian_weight), params.gaussian_weight)
        cols[k] = gaussian_crf(n, p, params.gaussian_weight, others @ G.T, rng)
    return np.hstack(cols), A


def gen_design(design, rng=None):
    """Draw ``(raw X, blocks, GroundTruth)`` for a simulation design."""
    rng = np.random.default_rng(design.rng_seed) if rng is None else rng
    names = [f"X{k + 1}" for k in range(len(design.widths))]
    blocks = blocks_from_widths(design.widths, design.domains, names)
    if design.kind is DesignKind.IID:
        raw = np.hstack([_iid_block(d, design.n, w, rng, design.poisson_mean)
                         for d, w in zip(design.domains, design.widths)])
    elif design.kind is DesignKind.HETEROSCEDASTIC:
        raw = np.hstack([_heteroscedastic_block(d, design.n, w, rng)
                         for d, w in zip(design.domains, design.widths)])
    else:
        raw, graph = _bdmrf(design, rng)
    # a constant column cannot be standardized; redraw it from its own domain
    for block in blocks:
        for j in range(block.start, block.stop):
            tries = 0
            while np.ptp(raw[:, j]) == 0 and tries < 100:
                raw[:, j] = _iid_block(block.domain, design.n, 1, rng, design.poisson_mean)[:, 0]
                tries += 1
    truth = draw_coefficients(design, blocks, rng)
    if design.kind is DesignKind.BLOCK_DIRECTED_GRAPH:
        truth = replace(truth, graph=graph)
    return raw, blocks, truth


def gen_response(X, beta, family, rng, noise_sd=1.0, latent_snr=None, poisson_mean=5.0):
    """Response for standardized ``X`` and true coefficients ``beta``.

    Gaussian: ``X beta + noise_sd * N(0, 1)``. Bernoulli and Poisson use a
    Gaussian copula: the signal ``X beta`` plus unit-variance Gaussian noise
    (scaled so the latent signal-to-noise ratio is ``latent_snr``, by
    default the Gaussian model's own ``var(X beta) / noise_sd^2``) is
    standardized, mapped to a uniform by the normal CDF, and pushed
    through the Bernoulli(0.5) or Poisson(``poisson_mean``) quantile
    function. The response keeps the rank dependence on ``X beta``.
    """
    family = as_family(family)
    X = np.asarray(X, dtype=float)
    signal = X @ np.asarray(beta, dtype=float)
    n = X.shape[0]
    if family is GlmFamily.GAUSSIAN:
        return signal + noise_sd * rng.standard_normal(n)
    sig_sd = signal.std()
    if latent_snr is None:
        latent_snr = sig_sd ** 2 / max(noise_sd ** 2, 1e-12)
    noise = rng.standard_normal(n)
    if sig_sd > 0:
        latent = signal / sig_sd * np.sqrt(latent_snr) + noise
    else:
        latent = noise
    u = stats.norm.cdf((latent - latent.mean()) / max(latent.std(), 1e-12))
    u = np.clip(u, 1e-12, 1 - 1e-12)
    if family is GlmFamily.BERNOULLI:
        return (u > 0.5).astype(float)
    return stats.poisson.ppf(u, poisson_mean).astype(float)


def simulate(design, rng=None):
    """Full replicate: ``(MultiViewDesign, y, GroundTruth)`` on the standardized scale."""
    rng = np.random.default_rng(design.rng_seed) if rng is None else rng
    raw, blocks, truth = gen_design(design, rng)
    mv = standardize(raw, blocks)
    y = gen_response(mv.X, truth.beta, design.response, rng, design.noise_sd)
    return mv, y, truth


def snr_scale(X, beta, target):
    """Multiplier c so that ||X (c beta)||^2 / n equals ``target``."""
    power = float(np.sum((X @ beta) ** 2)) / X.shape[0]
    if power == 0:
        return 0.0
    return float(np.sqrt(target / power))


def signal_interference_scenario(snr_binary_grid, n, rng=None, *, p_per_block=1000,
                                 n_true=10, snr_gaussian=2.0, n_reps=1, seed=0,
                                 oracle_k="truth"):
    """Gaussian-block TPR of the oracle global Lasso as binary-block SNR varies.

    Each block's SNR is ``||X_k beta_k||^2 / n`` with unit noise variance.
    Returns an array with the mean Gaussian-block TPR for each grid value
    over ``n_reps`` replicates (seeds ``seed .. seed + n_reps - 1``).
    """
    from .baselines import OracleFirstK, lasso_global

    out = []
    for snr_b in snr_binary_grid:
        tprs = []
        for r in range(n_reps):
            g = np.random.default_rng([seed + r, 7919]) if rng is None else rng
            raw = np.hstack([g.standard_normal((n, p_per_block)),
                             (g.random((n, p_per_block)) < 0.5).astype(float)])
            blocks = blocks_from_widths([p_per_block, p_per_block],
                                        [Domain.CONTINUOUS, Domain.BINARY], ["X1", "X2"])
            mv = standardize(raw, blocks)
            beta = np.zeros(2 * p_per_block)
            for k, target in enumerate([snr_gaussian, snr_b]):
                idx = g.choice(p_per_block, size=n_true, replace=False) + k * p_per_block
                b = np.zeros_like(beta)
                b[idx] = g.uniform(4, 10, n_true) * g.choice([-1.0, 1.0], n_true)
                beta += b * snr_scale(mv.X, b, target)
            y = mv.X @ beta + g.standard_normal(n)
            truth = GroundTruth(beta, (), tuple(blocks))
            k = int(np.count_nonzero(beta))
            fit = lasso_global(mv, y, GlmFamily.GAUSSIAN, OracleFirstK(k))
            tprs.append(score(fit.support, truth).block_tpr["X1"])
        out.append(float(np.mean(tprs)))
    return np.array(out)


def ground_truth_rows(truth):
    return [{"feature": j, "block": b, "coefficient": c} for j, b, c in truth.rows()]

