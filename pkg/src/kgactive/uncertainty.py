"""Per-entity uncertainty measures over matching-score matrices.

The margin measure works on raw scores (which are not probabilities); the
entropy/confidence family works on rows normalized with a softmax.  The
sample-based measures (expectation, BALD, standard deviation) consume a
list of stochastic scorings of the same candidate grid.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import ConfigError, DomainError
from .vectors import AcquisitionVector, ProbabilityMatrix, ScoreMatrix


def margin_uncertainty(scores: ScoreMatrix) -> AcquisitionVector:
    """Negative top-2 score gap per row: larger means more uncertain."""
    top1, top2 = scores.top2_per_row()
    return AcquisitionVector(scores.row_ids, -(top1 - top2))


def scores_to_probs(scores: ScoreMatrix, temperature: float = 1.0) -> ProbabilityMatrix:
    """Exponential row normalization (softmax) with overflow guarding."""
    if temperature <= 0:
        raise ConfigError(f"temperature must be positive, got {temperature}")
    z = scores.values / temperature
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)
    return ProbabilityMatrix(scores.row_ids, scores.col_ids, p)


def _row_entropies(p: np.ndarray) -> np.ndarray:
    # 0 * log 0 := 0
    plogp = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)
    return -plogp.sum(axis=1)


def entropy_uncertainty(probs: ProbabilityMatrix) -> AcquisitionVector:
    return AcquisitionVector(probs.row_ids, _row_entropies(probs.values))


def least_confidence(probs: ProbabilityMatrix) -> AcquisitionVector:
    return AcquisitionVector(probs.row_ids, 1.0 - probs.values.max(axis=1))


def smallest_margin(matrix: ScoreMatrix | ProbabilityMatrix) -> AcquisitionVector:
    """Top-2 gap (score or probability form): *small* values mean uncertain.

    The result is tagged ``select_smallest`` so the sampling loop knows to
    negate it before ranking.
    """
    if matrix.values.shape[1] < 2:
        raise DomainError("need at least two candidate columns")
    part = np.partition(matrix.values, matrix.values.shape[1] - 2, axis=1)
    gap = part[:, -1] - part[:, -2]
    return AcquisitionVector(matrix.row_ids, gap, {"select_smallest": True})


def _check_same_axes(samples: Sequence) -> None:
    if not samples:
        raise DomainError("need at least one sample")
    first = samples[0]
    for s in samples[1:]:
        if not first.same_axes(s):
            raise DomainError("samples must share the same candidate grid")


def expected_scores(samples: Sequence[ScoreMatrix]) -> ScoreMatrix:
    """Element-wise mean of stochastic scorings."""
    _check_same_axes(samples)
    mean = np.mean([s.values for s in samples], axis=0)
    return ScoreMatrix(samples[0].row_ids, samples[0].col_ids, mean)


def mean_probabilities(samples: Sequence[ProbabilityMatrix]) -> ProbabilityMatrix:
    """Element-wise mean distribution (stays row-stochastic)."""
    _check_same_axes(samples)
    mean = np.mean([s.values for s in samples], axis=0)
    return ProbabilityMatrix(samples[0].row_ids, samples[0].col_ids, mean)


def bald(prob_samples: Sequence[ProbabilityMatrix]) -> AcquisitionVector:
    """Mutual information between the prediction and the sampled parameters.

    Entropy of the mean distribution minus the mean of per-sample entropies;
    nonnegative by concavity of entropy.
    """
    if len(prob_samples) < 2:
        raise DomainError("BALD needs at least two samples")
    _check_same_axes(prob_samples)
    mean_h = _row_entropies(mean_probabilities(prob_samples).values)
    h_mean = np.mean([_row_entropies(s.values) for s in prob_samples], axis=0)
    return AcquisitionVector(prob_samples[0].row_ids, mean_h - h_mean)


def std_dev_uncertainty(prob_samples: Sequence[ProbabilityMatrix]) -> AcquisitionVector:
    """Average per-candidate standard deviation across samples."""
    if len(prob_samples) < 2:
        raise DomainError("standard deviation needs at least two samples")
    _check_same_axes(prob_samples)
    stack = np.stack([s.values for s in prob_samples])
    var = np.mean(stack**2, axis=0) - np.mean(stack, axis=0) ** 2
    sigma = np.sqrt(np.maximum(var, 0.0))
    return AcquisitionVector(prob_samples[0].row_ids, sigma.mean(axis=1))
