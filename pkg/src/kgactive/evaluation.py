"""Campaign metrics: learning curves, normalized AUC, micro-F1, seed aggregation."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class LearningCurve:
    """Sorted (annotation proportion, score) points of one campaign."""

    xs: np.ndarray
    ys: np.ndarray

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=np.float64)
        ys = np.asarray(self.ys, dtype=np.float64)
        if xs.ndim != 1 or xs.shape != ys.shape:
            raise DomainError("curve axes must be 1-d arrays of equal length")
        if xs.size and (not np.all(np.isfinite(xs)) or xs[0] < 0):
            raise DomainError("curve x values must be finite and nonnegative")
        if xs.size > 1 and not np.all(np.diff(xs) > 0):
            raise DomainError("curve x values must be strictly increasing")
        if not np.all(np.isfinite(ys)):
            raise DomainError("curve y values must be finite")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)

    def __len__(self) -> int:
        return int(self.xs.size)


def auc_at(curve: LearningCurve, x_max: float) -> float:
    """Normalized trapezoidal area under the curve from its first point to x_max.

    The curve is linearly interpolated; a segment crossing ``x_max`` is
    clipped at it.  When the curve ends before ``x_max`` the area covers the
    observed range only.  Normalization by the integration span maps a
    constant curve y=c to exactly c.
    """
    xs, ys = curve.xs, curve.ys
    usable = xs <= x_max
    if int(usable.sum()) < 2:
        raise DomainError("need at least two curve points at or below x_max")
    hi = float(min(x_max, xs[-1]))
    xs_c = np.append(xs[usable], hi) if hi > xs[usable][-1] else xs[usable]
    ys_c = np.append(ys[usable], np.interp(hi, xs, ys)) if xs_c.size > usable.sum() else ys[usable]
    area = float(np.trapezoid(ys_c, xs_c))
    return area / (xs_c[-1] - xs_c[0])


def micro_f1(predictions: Sequence[int], truth: Sequence[int]) -> float:
    """Micro-averaged F1 of a single-label binary decision.

    With one label per entity, micro-averaging over both classes makes
    precision = recall = accuracy, so this equals plain accuracy.
    """
    pred = np.asarray(predictions)
    true = np.asarray(truth)
    if pred.shape != true.shape:
        raise DomainError("predictions and truth must cover the same entities")
    if pred.size == 0:
        raise DomainError("empty evaluation set")
    return float(np.mean(pred == true))


def aggregate_runs(curves: Sequence[LearningCurve]) -> tuple[LearningCurve, np.ndarray]:
    """Pointwise mean curve and sample standard deviation across runs."""
    if not curves:
        raise DomainError("need at least one curve")
    xs = curves[0].xs
    for c in curves[1:]:
        if not np.array_equal(c.xs, xs):
            raise DomainError("curves must share the same x grid")
    stack = np.stack([c.ys for c in curves])
    mean = stack.mean(axis=0)
    sd = stack.std(axis=0, ddof=1) if len(curves) > 1 else np.zeros_like(mean)
    return LearningCurve(xs, mean), sd
