"""Point and interval scores for predictions, plus wall-clock timing.

The interval score for a central interval of level ``level`` is

    mean[(U - L) + 2/(1 - level) * (L - Y) * 1{Y < L} + 2/(1 - level) * (Y - U) * 1{Y > U}]

Some references write the penalty as ``2 / a`` with ``a`` the tail mass;
with ``a = 1 - level`` both conventions give the same number.  The weight
``2 / (1 - level)`` is computed from the decimal value of ``level`` (so
``level = 0.95`` gives exactly 40), not from the binary float ``1 - 0.95``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, TypeVar

import numpy as np

from .exceptions import DataError, DimensionError

R = TypeVar("R")


def _pair(observed, predicted):
    y = np.asarray(observed, dtype=float).ravel()
    p = np.asarray(predicted, dtype=float).ravel()
    if y.size == 0:
        raise DataError("cannot score an empty sample")
    if y.shape != p.shape:
        raise DimensionError(f"length mismatch: {y.size} observations vs {p.size} predictions")
    return y, p


def mse(observed, predicted) -> float:
    y, p = _pair(observed, predicted)
    d = y - p
    return float(np.mean(d * d))


def rmse(observed, predicted) -> float:
    return float(np.sqrt(mse(observed, predicted)))


def interval_score_terms(observed, lower, upper, level: float = 0.95):
    """Per-observation width and penalty of the interval score."""
    if not 0 < level < 1:
        raise DataError("level must lie in (0, 1)")
    y, lo = _pair(observed, lower)
    _, hi = _pair(observed, upper)
    if np.any(lo > hi):
        raise DataError(f"{int(np.sum(lo > hi))} interval(s) with lower > upper")
    k = float(2 / (1 - Fraction(repr(float(level)))))
    width = hi - lo
    penalty = k * (lo - y) * (y < lo) + k * (y - hi) * (y > hi)
    return width, penalty


def interval_score(observed, lower, upper, level: float = 0.95) -> float:
    width, penalty = interval_score_terms(observed, lower, upper, level)
    return float(np.mean(width + penalty))


def coverage(observed, lower, upper) -> float:
    y, lo = _pair(observed, lower)
    _, hi = _pair(observed, upper)
    return float(np.mean((y >= lo) & (y <= hi)))


def timed(label: str, thunk: Callable[[], R]) -> tuple[R, float]:
    """Run ``thunk`` and return its result with the elapsed seconds (monotonic clock)."""
    start = time.perf_counter()
    result = thunk()
    return result, time.perf_counter() - start


@dataclass
class MetricsReport:
    label: dict
    mse: float
    rmse: float
    interval_score: float
    level: float
    n_pairs: int
    scale: str = "model"
    elapsed_seconds: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n_pairs < 1:
            raise DataError("a report needs at least one pair")
        if not self.mse >= 0:
            raise DataError("mse must be nonnegative")


def score(observed, mean, lower, upper, level: float = 0.95, label=None, scale: str = "model",
          elapsed=None) -> MetricsReport:
    """Bundle MSE, RMSE and interval score of one set of paired predictions."""
    m = mse(observed, mean)
    return MetricsReport(dict(label or {}), m, float(np.sqrt(m)),
                         interval_score(observed, lower, upper, level), level,
                         int(np.asarray(observed).size), scale, dict(elapsed or {}))
