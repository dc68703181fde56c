"""Node-wise mixed-graph estimation.

Each node (column) is regressed on the others with a GLM family chosen by
its domain. The per-feature stability frequencies of these regressions are
the directed neighbourhood weights; an undirected edge keeps the minimum
(AND) or maximum (OR) of its two directions and survives if that reaches
the threshold.
"""

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .algorithm import BrailConfig, fit_brail
from .baselines import Stability, lasso_global, lasso_per_block
from .data import Domain
from .errors import ConfigError, RejectedInputError
from .glm import GlmFamily

log = logging.getLogger(__name__)

PROPORTION_CUT = 0.5


class NeighborhoodMethod(str, Enum):
    BRAIL = "brail"
    LASSO_GLOBAL = "lasso_global"
    LASSO_PER_BLOCK = "lasso_per_block"


class CombineRule(str, Enum):
    AND = "and"
    OR = "or"


FAMILY_OF = {
    Domain.CONTINUOUS: GlmFamily.GAUSSIAN,
    Domain.BINARY: GlmFamily.BERNOULLI,
    Domain.PROPORTION: GlmFamily.BERNOULLI,
    Domain.COUNT: GlmFamily.POISSON,
}


@dataclass
class MixedGraph:
    """Undirected graph over typed nodes; ``edges`` maps (i, j), i < j, to a weight."""

    nodes: list
    edges: dict
    combine_rule: CombineRule
    threshold: float
    directed: np.ndarray = field(default=None, repr=False)

    def edge_set(self):
        return set(self.edges)

    def n_edges(self):
        return len(self.edges)

    def adjacency(self):
        p = len(self.nodes)
        A = np.zeros((p, p))
        for (i, j), w in self.edges.items():
            A[i, j] = A[j, i] = w
        return A

    def write_edges(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["node_i", "node_j", "weight", "rule", "threshold"])
            for (i, j) in sorted(self.edges):
                writer.writerow([self.nodes[i][0], self.nodes[j][0],
                                 repr(self.edges[i, j]), self.combine_rule.value,
                                 repr(self.threshold)])

    def write_nodes(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["name", "domain", "block"])
            for name, domain, block in self.nodes:
                writer.writerow([name, Domain(domain).value, block])


def graph_nodes(design):
    names = design.names()
    out = []
    for k, block in enumerate(design.blocks):
        for j in block.indices:
            out.append((names[j], block.domain, block.name))
    return out


def respect_partial_ordering(design, tiers):
    """Allowed predictor mask per node under a tiered ordering of the blocks.

    ``tiers`` is a list of lists of block names. A node in tier m may use
    features from tiers 0..m only. Returns a boolean p x p matrix whose row
    i marks node i's admissible predictors (never itself).
    """
    p = design.p
    if tiers is None:
        allowed = np.ones((p, p), dtype=bool)
        np.fill_diagonal(allowed, False)
        return allowed
    tier_of = {}
    for m, tier in enumerate(tiers):
        for name in tier:
            if name in tier_of:
                raise ConfigError(f"block {name!r} appears in more than one tier")
            tier_of[name] = m
    for block in design.blocks:
        if block.name not in tier_of:
            raise ConfigError(f"block {block.name!r} is not assigned to any tier")
    extra = set(tier_of) - {b.name for b in design.blocks}
    if extra:
        raise ConfigError(f"tiers name unknown blocks: {sorted(extra)}")
    col_tier = np.empty(p, dtype=int)
    for block in design.blocks:
        col_tier[block.columns] = tier_of[block.name]
    allowed = col_tier[None, :] <= col_tier[:, None]
    np.fill_diagonal(allowed, False)
    return allowed


def node_response(design, j):
    """Raw-scale column ``j`` as a response, with its GLM family."""
    block = design.blocks[design.block_of(j)]
    col = np.asarray(design.X[:, j], dtype=float)
    if design.standardized:
        col = col * design.col_sds[j] + design.col_means[j]
    family = FAMILY_OF[block.domain]
    if block.domain is Domain.PROPORTION:
        col = (col >= PROPORTION_CUT).astype(float)
    elif block.domain in (Domain.BINARY, Domain.COUNT):
        # undo round-off from the standardization round trip
        col = np.round(col)
    return col, family


def _default_config(method):
    return BrailConfig() if method is NeighborhoodMethod.BRAIL else Stability()


def _seeded(config, seed):
    if isinstance(config, BrailConfig):
        return replace(config, rng_seed=seed)
    return replace(config, seed=seed)


def _base_seed(config):
    return config.rng_seed if isinstance(config, BrailConfig) else config.seed


def estimate_neighborhood(design, node_index, method=NeighborhoodMethod.BRAIL, config=None,
                          tiers=None, allowed=None):
    """Stability frequencies of every other feature in node ``node_index``'s regression.

    Returns a length-p vector (the node's own entry is 0), or ``None`` when
    the node's response is constant and the node is skipped. Features
    excluded by ``tiers`` get frequency 0. The node's randomization seed is
    the configured seed plus ``node_index``.
    """
    method = NeighborhoodMethod(method)
    config = _default_config(method) if config is None else config
    if method is NeighborhoodMethod.BRAIL and not isinstance(config, BrailConfig):
        raise ConfigError("the B-RAIL neighbourhood method needs a BrailConfig")
    if method is not NeighborhoodMethod.BRAIL and not isinstance(config, Stability):
        raise ConfigError("baseline neighbourhood methods need a Stability rule")
    p = design.p
    if not 0 <= node_index < p:
        raise RejectedInputError(f"node index {node_index} out of range for {p} features")
    if allowed is None:
        allowed = respect_partial_ordering(design, tiers)
    y, family = node_response(design, node_index)
    freq = np.zeros(p)
    if np.ptp(y) == 0:
        log.warning("node %d has a constant response and is skipped", node_index)
        return None
    keep = np.flatnonzero(allowed[node_index])
    if keep.size == 0:
        return freq
    sub = design.subset_columns(keep)
    cfg = _seeded(config, _base_seed(config) + node_index)
    if method is NeighborhoodMethod.BRAIL:
        result = fit_brail(sub, y, family, cfg)
        local = np.concatenate([np.asarray(f, dtype=float) for f in result.state.stability_freq])
    elif method is NeighborhoodMethod.LASSO_GLOBAL:
        local = lasso_global(sub, y, family, cfg).info["freq"]
    else:
        local = lasso_per_block(sub, y, family, cfg).info["freq"]
    freq[keep] = local
    return freq


def estimate_frequencies(design, method=NeighborhoodMethod.BRAIL, config=None, tiers=None,
                         n_jobs=1):
    """Directed frequency matrix F, F[i, j] = weight of j in node i's regression.

    Rows of skipped nodes are all zero. Nodes are independent, so they may
    run concurrently; the result does not depend on ``n_jobs``.
    """
    allowed = respect_partial_ordering(design, tiers)

    def one(i):
        return estimate_neighborhood(design, i, method, config, allowed=allowed)

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            rows = list(pool.map(one, range(design.p)))
    else:
        rows = [one(i) for i in range(design.p)]
    skipped = [i for i, r in enumerate(rows) if r is None]
    F = np.array([np.zeros(design.p) if r is None else r for r in rows])
    return F, skipped


def build_graph(freqs, nodes, combine_rule=CombineRule.AND, threshold=0.9):
    """Combine directed frequencies into an undirected thresholded graph.

    An edge is kept when its combined weight is positive and at least
    ``threshold``; AND combines by min, OR by max.
    """
    rule = CombineRule(combine_rule)
    F = np.asarray(freqs, dtype=float)
    p = len(nodes)
    if F.shape != (p, p):
        raise RejectedInputError(f"frequency matrix has shape {F.shape}, expected ({p}, {p})")
    if not 0 <= threshold <= 1:
        raise ConfigError(f"threshold must lie in [0, 1], got {threshold}")
    W = np.minimum(F, F.T) if rule is CombineRule.AND else np.maximum(F, F.T)
    edges = {}
    for i in range(p):
        for j in range(i + 1, p):
            w = float(W[i, j])
            if w > 0 and w >= threshold:
                edges[i, j] = w
    return MixedGraph(list(nodes), edges, rule, float(threshold), F)


def estimate_graph(design, method=NeighborhoodMethod.BRAIL, config=None, *, tiers=None,
                   combine_rule=CombineRule.AND, threshold=0.9, n_jobs=1):
    F, skipped = estimate_frequencies(design, method, config, tiers, n_jobs)
    graph = build_graph(F, graph_nodes(design), combine_rule, threshold)
    graph.skipped = skipped
    return graph


def chain_design(n, rng, partial_corr=0.5, p=3):
    """Gaussian chain X1 - X2 - ... - Xp with the given neighbour partial correlation."""
    from .data import blocks_from_widths, standardize

    theta = np.eye(p)
    for i in range(p - 1):
        theta[i, i + 1] = theta[i + 1, i] = -partial_corr
    cov = np.linalg.inv(theta)
    raw = rng.multivariate_normal(np.zeros(p), cov, size=n, method="cholesky")
    blocks = blocks_from_widths([p], [Domain.CONTINUOUS], ["X"])
    return standardize(raw, blocks, [f"X{i + 1}" for i in range(p)])
