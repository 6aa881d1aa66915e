"""Slope fits used by the decay experiments."""

from __future__ import annotations

import numpy as np
from scipy import stats


def least_squares(x, y) -> tuple[float, float]:
    x, y = np.asarray(x, float), np.asarray(y, float)
    if x.size < 2:
        return float("nan"), float("nan")
    slope, icpt = np.polyfit(x, y, 1)
    return float(slope), float(icpt)


def theil_sen(x, y) -> tuple[float, float]:
    res = stats.theilslopes(np.asarray(y, float), np.asarray(x, float))
    return float(res.slope), float(res.intercept)


def bootstrap_slope(x, y, n_resamples: int = 1000, seed: int = 0, estimator: str = "theil_sen",
                    level: float = 0.95) -> tuple[float, float]:
    """Percentile band for the slope from resampled (x, y) pairs."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    if x.size < 3:
        return float("nan"), float("nan")
    fit = theil_sen if estimator == "theil_sen" else least_squares
    rng = np.random.default_rng(seed)
    slopes = []
    for _ in range(n_resamples):
        idx = rng.integers(0, x.size, x.size)
        if np.unique(x[idx]).size < 2:
            continue
        slopes.append(fit(x[idx], y[idx])[0])
    lo, hi = np.quantile(slopes, [(1 - level) / 2, (1 + level) / 2])
    return float(lo), float(hi)
