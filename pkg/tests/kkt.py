"""Optimality certificate shared by the solver and acceptance tests."""

import numpy as np

from brail.glm import as_family


def kkt_violation(family, y, X, offset, fit, l1, ridge=0.0):
    """Largest violation of the stationarity conditions of the penalized objective.

    For g_j = (1/n) x_j'(y - mu) - 2 eps beta_j: g_j = l1_j sign(beta_j) on
    the support and |g_j| <= l1_j off it; the unpenalized intercept needs
    sum(y - mu) = 0.
    """
    family = as_family(family)
    n = len(y)
    offset = np.zeros(n) if offset is None else offset
    mu = family.mean(fit.intercept + X @ fit.coefficients + offset)
    g = X.T @ (y - mu) / n - 2.0 * ridge * fit.coefficients
    beta = fit.coefficients
    on = beta != 0
    viol = np.zeros_like(g)
    viol[on] = np.abs(g[on] - l1[on] * np.sign(beta[on]))
    viol[~on] = np.maximum(np.abs(g[~on]) - l1[~on], 0.0)
    return max(float(viol.max(initial=0.0)), abs(float(np.mean(y - mu))))
