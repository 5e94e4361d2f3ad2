"""Aggregate-over-horizon APE and level-wise summaries."""
from __future__ import annotations

import math

import numpy as np


def ape(forecast, actual) -> float:
    """``|sum(forecast) - sum(actual)| / |sum(actual)|``.

    Returns ``nan`` when the actual sum is zero; callers exclude and count those.
    """
    f = np.asarray(forecast, dtype=np.float64)
    a = np.asarray(actual, dtype=np.float64)
    if f.shape != a.shape:
        raise ValueError(f"forecast shape {f.shape} != actual shape {a.shape}")
    total = float(a.sum())
    if total == 0.0:
        return math.nan
    return abs(float(f.sum()) - total) / abs(total)


def level_summary(apes) -> tuple[float, float]:
    """Mean and median over the defined (non-nan) APE values."""
    vals = np.asarray(list(apes), dtype=np.float64)
    vals = vals[~np.isnan(vals)]
    if vals.size == 0:
        raise ValueError("no defined APE values to summarize")
    return float(vals.mean()), float(np.median(vals))
