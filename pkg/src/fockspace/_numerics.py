"""Small numerical helpers shared across modules."""

from __future__ import annotations

import numpy as np

FLAT_SLOPE = 0.05


def loglog_slope(x, y) -> float:
    """Least-squares slope of log|y| against log x."""
    x = np.asarray(x, float)
    y = np.abs(np.asarray(y, float))
    keep = (x > 0) & (y > 0) & np.isfinite(y)
    if keep.sum() < 3:
        raise ValueError("need at least three positive samples for a slope fit")
    return float(np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)[0])


def trend(slope: float, flat: float = FLAT_SLOPE) -> str:
    """Classify a log-log tail slope as decaying, flat or growing."""
    if slope < -flat:
        return "decaying"
    if slope <= flat:
        return "flat"
    return "growing"


def top_decade(d_max: int, lo: int = 1) -> np.ndarray:
    """Integer sample points over the last decade below ``d_max``."""
    start = max(lo, d_max // 10)
    return np.unique(np.geomspace(start, d_max, 64).astype(int))


def gauss_legendre(n: int):
    nodes, weights = np.polynomial.legendre.leggauss(n)
    return nodes, weights
