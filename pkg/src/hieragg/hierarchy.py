"""Regular (k, m) aggregation trees and their Monte-Carlo aggregation.

Level 0 holds the root Z, level m the N = k**m leaves. Each internal node is
the sum of its k children after the children have been coupled by the
node's copula.

Children of a node are themselves empirical samples, so coupling is done by
rank reordering. Each child's scenario vector is permuted so that its ranks
follow one column of a fresh copula sample, and the rows are then summed.
A permutation leaves every child's empirical marginal untouched.

The tree is evaluated depth first, and copula columns are generated one at a
time from their own streams. Working memory is therefore O(m * n_sims)
unless intermediate levels are explicitly kept.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import marginals
from . import rng as rngmod
from .copulas import CopulaKind, CopulaSpec, rank_key_columns
from .errors import DomainError, ParameterError, ResourceLimitError
from .marginals import MarginalSpec

log = logging.getLogger(__name__)

DEFAULT_MEMORY_BUDGET = 4 * 1024**3


@dataclass(frozen=True)
class NodeId:
    """Node ``index`` (1-based) at ``level`` p, as in X_i^(p)."""

    level: int
    index: int

    def parent(self, k: int) -> "NodeId":
        if self.level == 0:
            raise ParameterError("the root has no parent")
        return NodeId(self.level - 1, (self.index - 1) // k + 1)

    def children(self, k: int) -> list["NodeId"]:
        first = (self.index - 1) * k + 1
        return [NodeId(self.level + 1, first + c) for c in range(k)]


ROOT = NodeId(0, 1)


@dataclass(frozen=True)
class TreeSpec:
    """A regular (k, m) tree with identical leaves.

    ``copula`` is used at every internal node unless ``level_copulas`` is
    given; entry p of that list couples the children of the nodes at level p.
    """

    k: int
    m: int
    leaf: MarginalSpec
    copula: CopulaSpec
    level_copulas: tuple[CopulaSpec, ...] | None = None

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 2:
            raise ParameterError(f"branching factor k must be an integer >= 2, got {self.k}")
        if int(self.m) != self.m or self.m < 1:
            raise ParameterError(f"depth m must be an integer >= 1, got {self.m}")
        if self.copula.k != self.k:
            raise ParameterError(f"copula dimension {self.copula.k} does not match k={self.k}")
        if self.level_copulas is not None:
            lc = tuple(self.level_copulas)
            object.__setattr__(self, "level_copulas", lc)
            if len(lc) != self.m:
                raise ParameterError(f"level_copulas needs {self.m} entries, got {len(lc)}")
            for c in lc:
                if c.k != self.k:
                    raise ParameterError(f"copula dimension {c.k} does not match k={self.k}")

    @property
    def n_leaves(self) -> int:
        return self.k**self.m

    def nodes_at(self, level: int) -> int:
        if not 0 <= level <= self.m:
            raise DomainError(f"level must lie in [0, {self.m}], got {level}")
        return self.k**level

    def copula_at(self, level: int) -> CopulaSpec:
        """Copula coupling the children of nodes at ``level`` (0 <= level < m)."""
        if self.level_copulas is not None:
            return self.level_copulas[level]
        return self.copula

    def with_copula(self, copula: CopulaSpec) -> "TreeSpec":
        return TreeSpec(self.k, self.m, self.leaf, copula)

    def independent(self) -> "TreeSpec":
        return self.with_copula(CopulaSpec.independence(self.k))


@dataclass
class ScenarioSet:
    """Scenario vectors per kept level.

    ``levels[p]`` has shape (k**p, n_sims). Row i is the vector of node
    (p, i + 1) as it enters its parent's sum, i.e. after the parent's
    reordering. Summing the children rows of a node therefore gives the node's
    scenarios before that reordering: exactly the root for level 1, and a
    permutation of the stored row for deeper levels.
    """

    n_sims: int
    seed: int
    levels: dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def root(self) -> np.ndarray:
        return self.levels[0][0]

    def node(self, node: NodeId) -> np.ndarray:
        if node.level not in self.levels:
            raise KeyError(f"level {node.level} was not kept")
        return self.levels[node.level][node.index - 1]


def draw_leaf(leaf: MarginalSpec, index: int, n_sims: int, seed: int) -> np.ndarray:
    """Raw i.i.d. draws of leaf ``index`` (0-based), before any reordering."""
    return marginals.sample(leaf, n_sims, rngmod.stream(seed, rngmod.LEAF, index))


def stable_order(key: np.ndarray) -> np.ndarray:
    """Argsort with ties broken by original index."""
    order = np.argsort(key)
    ks = key[order]
    if np.any(ks[1:] == ks[:-1]):
        order = np.argsort(key, kind="stable")
    return order


def reorder(values: np.ndarray, key: np.ndarray) -> np.ndarray:
    """Permute ``values`` so that its ranks equal the ranks of ``key``."""
    out = np.empty_like(values)
    out[stable_order(key)] = np.sort(values)
    return out


def _copula_stream_key(level: int, index0: int) -> tuple[int, int, int]:
    return (rngmod.COPULA, level, index0)


class _Aggregator:
    def __init__(self, tree: TreeSpec, n_sims: int, seed: int, keep: set[int]):
        self.tree = tree
        self.n = n_sims
        self.seed = seed
        self.out: dict[int, np.ndarray] = {p: np.empty((tree.k**p, n_sims)) for p in keep if p > 0}

    def _keys(self, level: int, index0: int):
        cop = self.tree.copula_at(level)
        if cop.is_independence:
            return None
        return rank_key_columns(cop, self.n, self.seed, _copula_stream_key(level, index0))

    def coupled_child(self, level: int, index0: int, child: int, key: np.ndarray | None) -> np.ndarray:
        """Value of child ``child`` of node (level, index0), aligned for summation."""
        cidx = index0 * self.tree.k + child
        x = self.node(level + 1, cidx)
        if key is not None:
            x = reorder(x, key)
        kept = self.out.get(level + 1)
        if kept is not None:
            kept[cidx] = x
        return x

    def node(self, level: int, index0: int) -> np.ndarray:
        if level == self.tree.m:
            return draw_leaf(self.tree.leaf, index0, self.n, self.seed)
        keys = self._keys(level, index0)
        acc = None
        for c in range(self.tree.k):
            key = None if keys is None else next(keys)
            x = self.coupled_child(level, index0, c, key)
            if acc is None:
                acc = x
            else:
                acc += x
        return acc

    def root_parallel(self, workers: int) -> np.ndarray:
        # children of the root are evaluated concurrently in fixed-size chunks
        # and summed in index order, so the result does not depend on workers
        k = self.tree.k
        keys = self._keys(0, 0)
        acc = None
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for start in range(0, k, workers):
                chunk = range(start, min(start + workers, k))
                ckeys = [None if keys is None else next(keys) for _ in chunk]
                futs = [pool.submit(self.coupled_child, 0, 0, c, key) for c, key in zip(chunk, ckeys)]
                for f in futs:
                    x = f.result()
                    if acc is None:
                        acc = x
                    else:
                        acc += x
        return acc


def estimate_memory(tree: TreeSpec, n_sims: int, keep: Iterable[int], workers: int = 1) -> int:
    """Rough peak bytes for one aggregation run."""
    stored = sum(tree.k**p for p in set(keep) | {0})
    per_path = 4 * (tree.m + 1)
    if any(tree.copula_at(p).kind is CopulaKind.GAUSSIAN and tree.copula_at(p).param < 0 for p in range(tree.m)):
        per_path += tree.k * (tree.m + 1)
    return 8 * n_sims * (stored + per_path * max(1, workers))


def aggregate_mc(
    tree: TreeSpec,
    n_sims: int,
    seed: int,
    keep_levels: Sequence[int] = (),
    workers: int = 1,
    memory_budget: int = DEFAULT_MEMORY_BUDGET,
) -> ScenarioSet:
    """Simulate the whole tree bottom-up and return the kept levels.

    The root (level 0) is always returned. ``keep_levels`` may add any other
    levels; they cost k**p * n_sims floats each.
    """
    if int(n_sims) != n_sims or n_sims < 2:
        raise ParameterError(f"n_sims must be an integer >= 2, got {n_sims}")
    if workers < 1:
        raise ParameterError(f"workers must be >= 1, got {workers}")
    keep = set(int(p) for p in keep_levels)
    for p in keep:
        tree.nodes_at(p)
    need = estimate_memory(tree, n_sims, keep, workers)
    if need > memory_budget:
        raise ResourceLimitError(
            f"aggregation needs about {need / 2**20:.0f} MiB, budget is {memory_budget / 2**20:.0f} MiB"
        )
    agg = _Aggregator(tree, int(n_sims), int(seed), keep)
    if workers > 1 and tree.k > 1:
        root = agg.root_parallel(workers)
    else:
        root = agg.node(0, 0)
    levels = {0: root.reshape(1, -1)}
    levels.update(agg.out)
    return ScenarioSet(n_sims=int(n_sims), seed=int(seed), levels=levels)


def independent_baseline(
    tree: TreeSpec,
    n_sims: int,
    seed: int,
    keep_levels: Sequence[int] = (),
    workers: int = 1,
    memory_budget: int = DEFAULT_MEMORY_BUDGET,
) -> ScenarioSet:
    """Aggregate with independence at every node.

    No reordering happens, so the root is the plain sum of the N leaf draws.
    With the same seed the leaves are the very draws ``aggregate_mc`` uses.
    """
    return aggregate_mc(tree.independent(), n_sims, seed, keep_levels, workers, memory_budget)


def standalone_sum_at_risk(tree: TreeSpec, alpha: float) -> float:
    """N times the leaf xTVaR: the comonotone (full dependence) sum at risk."""
    return tree.n_leaves * marginals.exact_xtvar(tree.leaf, alpha)


def reorder_count(tree: TreeSpec) -> int:
    """Number of rank reorderings one aggregation performs."""
    return sum(0 if tree.copula_at(p).is_independence else tree.k ** (p + 1) for p in range(tree.m))


def log_runtime_estimate(tree: TreeSpec, n_sims: int, budget_s: float = 300.0) -> float:
    # ~1e-7 s per element per reorder, ~3e-8 s per leaf draw, on one core
    est = 1e-7 * n_sims * reorder_count(tree) + 3e-8 * n_sims * tree.n_leaves
    if est > budget_s:
        log.warning("tree (k=%d, m=%d) with n_sims=%d may take about %.0f s", tree.k, tree.m, n_sims, est)
    return est


def leaf_index_range(node: NodeId, k: int, m: int) -> range:
    """0-based indices of the leaves below ``node``."""
    span = k ** (m - node.level)
    start = (node.index - 1) * span
    return range(start, start + span)


__all__ = [
    "NodeId",
    "ROOT",
    "TreeSpec",
    "ScenarioSet",
    "aggregate_mc",
    "independent_baseline",
    "standalone_sum_at_risk",
    "draw_leaf",
    "reorder",
    "stable_order",
    "leaf_index_range",
    "estimate_memory",
]
