"""Dense score containers used throughout the sampling pipeline.

AcquisitionVector maps entity ids to per-entity acquisition scores.
ScoreMatrix holds pairwise matching scores between a set of KG1 query
entities (rows) and KG2 candidate entities (columns).  ProbabilityMatrix is
a ScoreMatrix whose rows are normalized distributions.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .errors import DomainError


def _as_sorted_ids(ids: Iterable[int]) -> np.ndarray:
    arr = np.asarray(sorted(set(int(i) for i in ids)), dtype=np.int64)
    return arr


@dataclass(frozen=True)
class AcquisitionVector:
    """Per-entity scores over a fixed candidate set.

    ``ids`` is strictly increasing; ``values[k]`` is the score of ``ids[k]``.
    ``meta`` carries bookkeeping flags such as pagerank convergence or the
    ordering mode of margin-style measures.
    """

    ids: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        ids = np.asarray(self.ids, dtype=np.int64)
        values = np.asarray(self.values, dtype=np.float64)
        if ids.ndim != 1 or values.shape != ids.shape:
            raise DomainError("ids and values must be 1-d arrays of equal length")
        if ids.size > 1 and not np.all(np.diff(ids) > 0):
            raise DomainError("ids must be strictly increasing")
        if not np.all(np.isfinite(values)):
            raise DomainError("acquisition scores must be finite")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_mapping(cls, mapping: Mapping[int, float], meta: dict | None = None) -> "AcquisitionVector":
        ids = np.asarray(sorted(mapping), dtype=np.int64)
        values = np.asarray([mapping[int(i)] for i in ids], dtype=np.float64)
        return cls(ids, values, meta or {})

    def as_dict(self) -> dict[int, float]:
        return {int(i): float(v) for i, v in zip(self.ids, self.values)}

    def __len__(self) -> int:
        return int(self.ids.size)

    def value_of(self, entity_id: int) -> float:
        pos = np.searchsorted(self.ids, entity_id)
        if pos >= self.ids.size or self.ids[pos] != entity_id:
            raise DomainError(f"entity {entity_id} not covered by this vector")
        return float(self.values[pos])

    def restrict(self, ids: Iterable[int], meta: dict | None = None) -> "AcquisitionVector":
        """Subset to ``ids``; every requested id must be covered."""
        wanted = _as_sorted_ids(ids)
        pos = np.searchsorted(self.ids, wanted)
        ok = (pos < self.ids.size) & (self.ids[np.minimum(pos, self.ids.size - 1)] == wanted)
        if not np.all(ok):
            missing = wanted[~ok][:5].tolist()
            raise DomainError(f"entities not covered by this vector: {missing}")
        return AcquisitionVector(wanted, self.values[pos], dict(meta if meta is not None else self.meta))

    def multiply(self, other: "AcquisitionVector") -> "AcquisitionVector":
        """Elementwise product; both vectors must cover the same ids."""
        if not np.array_equal(self.ids, other.ids):
            raise DomainError("candidate coverage mismatch in elementwise product")
        return AcquisitionVector(self.ids, self.values * other.values)

    def negate(self) -> "AcquisitionVector":
        return AcquisitionVector(self.ids, -self.values, dict(self.meta))


def _validated_matrix(row_ids, col_ids, values):
    row_ids = np.asarray(row_ids, dtype=np.int64)
    col_ids = np.asarray(col_ids, dtype=np.int64)
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (row_ids.size, col_ids.size):
        raise DomainError("matrix shape does not match its id axes")
    for axis in (row_ids, col_ids):
        if axis.size > 1 and not np.all(np.diff(axis) > 0):
            raise DomainError("matrix axis ids must be strictly increasing")
    if not np.all(np.isfinite(values)):
        raise DomainError("matrix entries must be finite")
    return row_ids, col_ids, values


@dataclass(frozen=True)
class ScoreMatrix:
    """Matching scores for query rows against candidate columns."""

    row_ids: np.ndarray
    col_ids: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        row_ids, col_ids, values = _validated_matrix(self.row_ids, self.col_ids, self.values)
        object.__setattr__(self, "row_ids", row_ids)
        object.__setattr__(self, "col_ids", col_ids)
        object.__setattr__(self, "values", values)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def same_axes(self, other: "ScoreMatrix") -> bool:
        return np.array_equal(self.row_ids, other.row_ids) and np.array_equal(self.col_ids, other.col_ids)

    def row_of(self, entity_id: int) -> np.ndarray:
        pos = np.searchsorted(self.row_ids, entity_id)
        if pos >= self.row_ids.size or self.row_ids[pos] != entity_id:
            raise DomainError(f"entity {entity_id} has no row in this matrix")
        return self.values[pos]

    def top2_per_row(self) -> tuple[np.ndarray, np.ndarray]:
        """(top1, top2) score per row; requires at least two columns."""
        if self.values.shape[1] < 2:
            raise DomainError("need at least two candidate columns")
        part = np.partition(self.values, self.values.shape[1] - 2, axis=1)
        return part[:, -1], part[:, -2]


@dataclass(frozen=True)
class ProbabilityMatrix:
    """Row-stochastic matrix: each row is a distribution over candidates."""

    row_ids: np.ndarray
    col_ids: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        row_ids, col_ids, values = _validated_matrix(self.row_ids, self.col_ids, self.values)
        if np.any(values < 0):
            raise DomainError("probabilities must be nonnegative")
        sums = values.sum(axis=1)
        if values.shape[1] and not np.allclose(sums, 1.0, atol=1e-9):
            raise DomainError("probability rows must sum to 1")
        object.__setattr__(self, "row_ids", row_ids)
        object.__setattr__(self, "col_ids", col_ids)
        object.__setattr__(self, "values", values)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def same_axes(self, other: "ProbabilityMatrix") -> bool:
        return np.array_equal(self.row_ids, other.row_ids) and np.array_equal(self.col_ids, other.col_ids)
