"""Exponential-family primitives for the penalized GLM solvers.

All log-likelihoods drop terms that do not depend on the linear predictor
(``log y!`` for Poisson, ``log(2 pi)/2`` for Gaussian), and the Gaussian
family uses unit dispersion. Objective values are therefore comparable
within a family only.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import expit

from .errors import NumericError, RejectedInputError

POISSON_CLAMP = 30.0
BERNOULLI_WEIGHT_FLOOR = 1e-5


class GlmFamily(str, Enum):
    GAUSSIAN = "gaussian"
    BERNOULLI = "bernoulli"
    POISSON = "poisson"

    def mean(self, eta):
        """Inverse link: mean response for linear predictor ``eta``."""
        eta = np.asarray(eta, dtype=float)
        if self is GlmFamily.GAUSSIAN:
            return eta.copy()
        if self is GlmFamily.BERNOULLI:
            return expit(eta)
        return np.exp(np.clip(eta, -POISSON_CLAMP, POISSON_CLAMP))

    def variance_weights(self, eta):
        """IRLS weights, i.e. the diagonal of W at ``eta``."""
        eta = np.asarray(eta, dtype=float)
        if self is GlmFamily.GAUSSIAN:
            return np.ones_like(eta)
        mu = self.mean(eta)
        if self is GlmFamily.BERNOULLI:
            return mu * (1.0 - mu)
        return mu

    def pointwise_loglik(self, y, eta):
        eta = np.asarray(eta, dtype=float)
        if self is GlmFamily.GAUSSIAN:
            return -0.5 * (y - eta) ** 2
        if self is GlmFamily.BERNOULLI:
            # log(1 + e^eta) evaluated without overflow
            return y * eta - (np.maximum(eta, 0.0) + np.log1p(np.exp(-np.abs(eta))))
        clipped = np.clip(eta, -POISSON_CLAMP, POISSON_CLAMP)
        return y * clipped - np.exp(clipped)

    def validate_response(self, y):
        y = np.asarray(y, dtype=float)
        if y.ndim != 1:
            raise RejectedInputError(f"response must be 1-d, got shape {y.shape}")
        if not np.all(np.isfinite(y)):
            raise RejectedInputError("response contains non-finite values")
        if self is GlmFamily.BERNOULLI and not np.all((y == 0) | (y == 1)):
            raise RejectedInputError("bernoulli response must be in {0, 1}")
        if self is GlmFamily.POISSON and not (np.all(y >= 0) and np.all(y == np.round(y))):
            raise RejectedInputError("poisson response must be non-negative integers")
        return y


def as_family(family):
    if isinstance(family, GlmFamily):
        return family
    try:
        return GlmFamily(str(family).lower())
    except ValueError:
        raise RejectedInputError(f"unknown GLM family {family!r}") from None


@dataclass(frozen=True)
class LinearPredictor:
    """``intercept * 1 + xb + offset``, kept in its three parts."""

    intercept: float
    offset: np.ndarray
    xb: np.ndarray

    @classmethod
    def from_parts(cls, X, beta, intercept=0.0, offset=None):
        X = np.asarray(X, dtype=float)
        xb = X @ np.asarray(beta, dtype=float)
        if offset is None:
            offset = np.zeros(X.shape[0])
        return cls(float(intercept), np.asarray(offset, dtype=float), xb)

    def total(self):
        eta = self.intercept + self.xb + self.offset
        if not np.all(np.isfinite(eta)):
            bad = int(np.flatnonzero(~np.isfinite(eta))[0])
            raise NumericError(f"non-finite linear predictor at row {bad}")
        return eta


def _totals(pred, n=None):
    eta = pred.total() if isinstance(pred, LinearPredictor) else np.asarray(pred, dtype=float)
    if n is not None and eta.shape != (n,):
        raise RejectedInputError(f"predictor has shape {eta.shape}, expected ({n},)")
    if not np.all(np.isfinite(eta)):
        raise NumericError("non-finite linear predictor")
    return eta


def log_likelihood(family, y, pred):
    """Mean log-likelihood (1/n) sum_i l(y_i; eta_i).

    ``pred`` is a :class:`LinearPredictor` or an array of predictor totals.
    """
    family = as_family(family)
    y = family.validate_response(y)
    eta = _totals(pred, y.shape[0])
    return float(np.mean(family.pointwise_loglik(y, eta)))


def gradient(family, y, X, pred):
    """Gradient in beta of the negative mean log-likelihood, (1/n) X^T (mu - y)."""
    family = as_family(family)
    y = family.validate_response(y)
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise RejectedInputError(f"X has shape {X.shape}, y has length {y.shape[0]}")
    eta = _totals(pred, y.shape[0])
    return X.T @ (family.mean(eta) - y) / y.shape[0]


def fisher_info(family, X, beta, intercept=0.0, offset=None):
    """Estimated Fisher information X^T W(beta) X on the full design."""
    family = as_family(family)
    X = np.asarray(X, dtype=float)
    eta = LinearPredictor.from_parts(X, beta, intercept, offset).total()
    w = family.variance_weights(eta)
    bad = np.flatnonzero(~np.isfinite(w))
    if bad.size:
        raise NumericError(f"non-finite variance weight at row {int(bad[0])}")
    return (X * w[:, None]).T @ X


def max_eigenvalue(M, tol=1e-6, max_iter=1000, seed=0):
    """Largest eigenvalue of a symmetric PSD matrix by power iteration.

    The start vector is drawn from ``seed`` so repeated calls agree exactly.
    Iteration stops once the Rayleigh quotient changes by less than
    ``tol * 1e-2`` relative, which keeps the returned value well inside
    ``tol`` of the true eigenvalue.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise RejectedInputError(f"expected a square matrix, got shape {M.shape}")
    m = M.shape[0]
    if m == 0:
        return 0.0
    v = np.random.default_rng(seed).standard_normal(m)
    v /= np.linalg.norm(v)
    lam = float(v @ M @ v)
    for _ in range(max_iter):
        u = M @ v
        norm = np.linalg.norm(u)
        if norm == 0.0:
            return 0.0
        v = u / norm
        new = float(v @ M @ v)
        if abs(new - lam) <= 1e-2 * tol * max(abs(new), np.finfo(float).tiny):
            return new
        lam = new
    raise NumericError(f"power iteration did not converge in {max_iter} iterations")


def max_eigenvalue_gram(A, weights=None, **kwargs):
    """Largest eigenvalue of A^T diag(weights) A without forming it when n < p.

    The nonzero spectra of A^T W A and W^1/2 A A^T W^1/2 coincide, so the
    smaller of the two Gram matrices is used.
    """
    A = np.asarray(A, dtype=float)
    if weights is not None:
        A = A * np.sqrt(np.asarray(weights, dtype=float))[:, None]
    G = A @ A.T if A.shape[0] < A.shape[1] else A.T @ A
    return max_eigenvalue(G, **kwargs)
