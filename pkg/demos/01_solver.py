"""Penalized GLM fits: a Lasso path, its optimality check, and a ridge refit."""

import numpy as np

from brail.solver import PenaltySpec, fit_penalized, lasso_path, path_prefix_fit, ridge_refit

rng = np.random.default_rng(0)
n, p = 100, 20
X = rng.standard_normal((n, p))
beta = np.zeros(p)
beta[[2, 7, 11]] = [1.5, -1.0, 0.8]
y = X @ beta + rng.standard_normal(n)

# the path starts at the null model and adds features as lambda falls
path = lasso_path("gaussian", y, X, n_lambda=50)
for fit in path[::10]:
    print(f"lambda {fit.lam:.3f}  support {fit.support.tolist()}")

# first three entrants and their coefficients where the third one enters
fit, chosen = path_prefix_fit(path, 3)
print("first 3 entrants:", sorted(int(j) for j in chosen))

# stationarity: |x_j'(y - mu)/n| <= lambda off the support, = lambda on it
lam = 0.1
fit = fit_penalized("gaussian", y, X, penalty=PenaltySpec.uniform(lam, p))
g = X.T @ (y - fit.intercept - X @ fit.coefficients) / n
print("max |gradient| off support %.4f <= %.2f" % (np.abs(g[fit.coefficients == 0]).max(), lam))

# logistic fit and a ridge refit on the selected columns
yb = (rng.random(n) < 1 / (1 + np.exp(-X @ beta))).astype(float)
fit = fit_penalized("bernoulli", yb, X, penalty=PenaltySpec.uniform(0.06, p))
refit = ridge_refit("bernoulli", yb, X[:, fit.support], None, 0.001 / p)
print("logistic support", fit.support.tolist())
print("refit coefficients", np.round(refit.coefficients, 2).tolist())
