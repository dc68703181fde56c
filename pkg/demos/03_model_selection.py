"""Cross-validation and extended BIC for the global Lasso on a block directed MRF design.

Covariates come from a Poisson MRF, an Ising CRF given the counts, and a
Gaussian CRF given both.
"""

from brail.baselines import CrossValidation, ExtendedBic, lasso_global
from brail.simgen import DesignKind, SimDesign, score, simulate

design = SimDesign(DesignKind.BLOCK_DIRECTED_GRAPH, n=200, widths=(100, 100, 100), rng_seed=0)
mv, y, truth = simulate(design)

for name, rule in [("5-fold CV", CrossValidation(5, 0)), ("EBIC(0.5)", ExtendedBic(0.5))]:
    fit = lasso_global(mv, y, "gaussian", rule)
    m = score(fit.support, truth)
    print(f"{name:10s} selected {fit.support.size:3d}  TPR {m.tpr:.2f}  FDP {m.fdp:.2f}")
