"""Structure-aware uncertainty: influence propagation over KG1.

An entity's acquisition value mixes its own (normalized) uncertainty with
the uncertainty it can help its outbound neighbours eliminate.  The fixed
point of

    f = alpha * W f + (1 - alpha) * u / sum(u)

is found by power iteration; ``W`` spreads each entity's influence equally
over the inbound neighbours of its targets (w_ij = 1 / in-degree(j)).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .dataset import KnowledgeGraph, csr_from_edges
from .errors import ConfigError, DegenerateInputError, DomainError
from .vectors import AcquisitionVector


@dataclass(frozen=True)
class InfluenceMatrix:
    """CSR matrix over E1 x E1; row i holds the out-edges of entity i."""

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    weights: np.ndarray

    def matvec(self, x: np.ndarray) -> np.ndarray:
        rows = np.repeat(np.arange(self.n, dtype=np.int64), np.diff(self.indptr))
        return np.bincount(rows, weights=self.weights * x[self.indices], minlength=self.n)

    def column_sums(self) -> np.ndarray:
        return np.bincount(self.indices, weights=self.weights, minlength=self.n)

    def dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.n))
        rows = np.repeat(np.arange(self.n, dtype=np.int64), np.diff(self.indptr))
        out[rows, self.indices] = self.weights
        return out


@dataclass(frozen=True)
class StructUncertaintyConfig:
    alpha: float = 0.1
    eps: float = 1e-6
    max_iters: int = 1000

    def __post_init__(self):
        if not 0.0 <= self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in [0, 1), got {self.alpha}")
        if self.eps <= 0:
            raise ConfigError(f"eps must be positive, got {self.eps}")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be at least 1")


def build_influence_matrix(kg1: KnowledgeGraph) -> InfluenceMatrix:
    """One entry per deduplicated directed edge, weighted by 1/in-degree.

    Every column with at least one inbound edge sums to exactly 1: all
    inbound neighbours of an entity carry the same influence on it.
    """
    n = kg1.num_entities
    heads, tails = kg1.dedup_edges
    indeg = np.bincount(tails, minlength=n).astype(np.float64)
    indptr, indices = csr_from_edges(heads, tails, n)
    weights = 1.0 / indeg[indices]
    return InfluenceMatrix(n, indptr, indices, weights)


def structure_aware_uncertainty(
    w: InfluenceMatrix,
    u: AcquisitionVector,
    cfg: StructUncertaintyConfig,
) -> AcquisitionVector:
    """Solve the influence fixed point by power iteration.

    ``u`` must cover every KG1 entity.  Margin uncertainties are never
    positive, so a vector with negative entries is shifted by its minimum
    before normalization (ordering preserved; the L1 mass of the shifted
    vector is the normalizer).  Iteration starts from the (shifted)
    uncertainty vector itself and stops once the L1 change drops below
    ``cfg.eps``; ``meta`` records iterations and convergence.
    """
    if u.ids.size != w.n or not np.array_equal(u.ids, np.arange(w.n, dtype=np.int64)):
        raise DomainError("uncertainty vector must cover all KG1 entities")
    values = u.values
    shifted = False
    if values.size and values.min() < 0:
        values = values - values.min()
        shifted = True
    mass = values.sum()
    if not mass > 0:
        raise DegenerateInputError("uncertainty vector has no positive mass after shifting")
    base = (1.0 - cfg.alpha) * values / mass
    f, iterations, converged = kernels.power_iterate(
        w.indptr, w.indices, w.weights, base, values, cfg.alpha, cfg.eps, cfg.max_iters
    )
    meta = {"converged": converged, "iterations": iterations, "shifted": shifted}
    return AcquisitionVector(u.ids, f, meta)
