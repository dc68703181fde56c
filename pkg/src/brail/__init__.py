"""Feature selection for multi-view data with heterogeneous feature types."""

from .algorithm import BrailConfig, BrailResult, fit_blockwise_lasso, fit_brail
from .baselines import (CrossValidation, ExtendedBic, OracleFirstK, Stability, adaptive_lasso,
                        lasso_global, lasso_per_block, select_ebic, select_stability,
                        separate_lassos)
from .data import Block, Domain, MultiViewDesign, load_csv, standardize, write_csv
from .errors import BrailError, ConfigError, NumericError, ParseError, RejectedInputError
from .glm import GlmFamily, LinearPredictor, fisher_info, gradient, log_likelihood
from .graphsel import (CombineRule, MixedGraph, NeighborhoodMethod, build_graph,
                       estimate_graph, estimate_neighborhood, respect_partial_ordering)
from .simgen import DesignKind, GroundTruth, RecoveryMetrics, SimDesign, score, simulate
from .solver import FitResult, PenaltySpec, fit_penalized, lasso_path, ridge_refit

__version__ = "0.1.0"
