"""Topology-only acquisition baselines: degree, pagerank, betweenness, random.

All scores are pure functions of the graph (parallel relation edges are
collapsed first) and never look at the alignment model.
"""
from __future__ import annotations

from typing import Iterable

import numpy as np

from . import kernels
from .dataset import KnowledgeGraph, csr_from_edges
from .errors import ConfigError, DomainError
from .vectors import AcquisitionVector

EDGE_MODES = ("forward", "inverse", "bidirectional")

# Above this node count exact betweenness is replaced by source sampling.
BETWEENNESS_EXACT_LIMIT = 20000
BETWEENNESS_DEFAULT_PIVOTS = 256


def _candidate_ids(kg: KnowledgeGraph | None, candidates: Iterable[int] | None, n: int) -> np.ndarray:
    if candidates is None:
        return np.arange(n, dtype=np.int64)
    ids = np.asarray(sorted(set(int(c) for c in candidates)), dtype=np.int64)
    if ids.size and (ids[0] < 0 or ids[-1] >= n):
        raise DomainError(f"candidate id out of range for a graph of {n} entities")
    return ids


def _edges_for_mode(kg: KnowledgeGraph, edge_mode: str) -> tuple[np.ndarray, np.ndarray]:
    if edge_mode not in EDGE_MODES:
        raise ConfigError(f"edge_mode must be one of {EDGE_MODES}, got {edge_mode!r}")
    heads, tails = kg.dedup_edges
    if edge_mode == "forward":
        return heads, tails
    if edge_mode == "inverse":
        return tails, heads
    return kg.undirected_edges


def degree_scores(kg: KnowledgeGraph, candidates: Iterable[int] | None = None) -> AcquisitionVector:
    """Total degree (in + out) on the deduplicated directed edge set."""
    ids = _candidate_ids(kg, candidates, kg.num_entities)
    heads, tails = kg.dedup_edges
    deg = np.bincount(heads, minlength=kg.num_entities).astype(np.float64)
    deg += np.bincount(tails, minlength=kg.num_entities)
    return AcquisitionVector(ids, deg[ids])


def pagerank_scores(
    kg: KnowledgeGraph,
    candidates: Iterable[int] | None = None,
    damping: float = 0.85,
    edge_mode: str = "forward",
    eps: float = 1e-10,
    max_iters: int = 200,
) -> AcquisitionVector:
    """Pagerank with uniform teleport; dangling mass is spread uniformly.

    The stationary vector sums to 1 over the whole graph; the returned
    vector is its restriction to ``candidates``.  ``meta['converged']`` is
    False when ``max_iters`` was hit before the L1 change fell below eps.
    """
    if not 0.0 < damping < 1.0:
        raise ConfigError(f"damping must lie in (0, 1), got {damping}")
    n = kg.num_entities
    ids = _candidate_ids(kg, candidates, n)
    heads, tails = _edges_for_mode(kg, edge_mode)
    outdeg = np.bincount(heads, minlength=n).astype(np.float64)
    dangling = outdeg == 0
    inv_out = np.zeros(n)
    inv_out[~dangling] = 1.0 / outdeg[~dangling]

    x = np.full(n, 1.0 / n)
    converged = False
    iterations = 0
    for iterations in range(1, max_iters + 1):
        inflow = np.bincount(tails, weights=x[heads] * inv_out[heads], minlength=n)
        x_new = damping * (inflow + x[dangling].sum() / n) + (1.0 - damping) / n
        change = np.abs(x_new - x).sum()
        x = x_new
        if change < eps:
            converged = True
            break
    meta = {"converged": converged, "iterations": iterations, "edge_mode": edge_mode}
    return AcquisitionVector(ids, x[ids], meta)


def betweenness_scores(
    kg: KnowledgeGraph,
    candidates: Iterable[int] | None = None,
    sample_size: int | None = None,
    seed: int = 0,
) -> AcquisitionVector:
    """Betweenness centrality of the directed deduplicated graph.

    Exact Brandes accumulation by default; on graphs above
    ``BETWEENNESS_EXACT_LIMIT`` nodes (or when ``sample_size`` is given) an
    unbiased source-sampled estimate with that many pivots is used.
    """
    n = kg.num_entities
    ids = _candidate_ids(kg, candidates, n)
    heads, tails = kg.dedup_edges
    indptr, indices = csr_from_edges(heads, tails, n)
    if sample_size is None and n > BETWEENNESS_EXACT_LIMIT:
        sample_size = BETWEENNESS_DEFAULT_PIVOTS
    if sample_size is not None and sample_size < n:
        rng = np.random.default_rng(seed)
        sources = np.sort(rng.choice(n, size=sample_size, replace=False)).astype(np.int64)
        scores = kernels.brandes_betweenness(indptr, indices, n, sources) * (n / sample_size)
        meta = {"exact": False, "pivots": int(sample_size)}
    else:
        scores = kernels.brandes_betweenness(indptr, indices, n)
        meta = {"exact": True}
    return AcquisitionVector(ids, scores[ids], meta)


def random_scores(candidates: Iterable[int], seed: int) -> AcquisitionVector:
    """I.i.d. uniform(0, 1) scores, deterministic under the seed."""
    ids = np.asarray(sorted(set(int(c) for c in candidates)), dtype=np.int64)
    rng = np.random.default_rng(seed)
    return AcquisitionVector(ids, rng.random(ids.size))
