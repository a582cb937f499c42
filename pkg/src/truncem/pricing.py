"""Monte Carlo valuation on the TEM step process.

The step process is piecewise constant, so the integral of the rate over
[0, T] is exactly delta * (X_0 + ... + X_{N-1}), and its infimum over [0, T]
is the minimum of X_0..X_N.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .solver import Ensemble, SamplePath

Z95 = 1.96


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    stderr: float
    ci95_lo: float
    ci95_hi: float
    n: int

    def overlaps(self, other: "MCEstimate") -> bool:
        return self.ci95_lo <= other.ci95_hi and other.ci95_lo <= self.ci95_hi


def mc_estimate(samples) -> MCEstimate:
    """Sample mean with stderr = sd/sqrt(n) (sd with n - 1) and a normal 95% CI."""
    x = np.asarray(samples, dtype=float).ravel()
    n = x.size
    if n < 2:
        raise ValueError(f"need at least 2 samples, got {n}")
    mean = float(x.sum() / n)
    se = float(np.sqrt(((x - mean) ** 2).sum() / (n - 1)) / math.sqrt(n))
    # a constant sample must give a zero-width interval, not an ulp-wide one
    if np.all(x == x[0]):
        mean, se = float(x[0]), 0.0
    return MCEstimate(mean, se, mean - Z95 * se, mean + Z95 * se, n)


def _forward_block(ensemble):
    if isinstance(ensemble, Ensemble):
        if len(ensemble) == 0:
            raise ValueError("empty ensemble")
        return ensemble.states, ensemble.grid
    paths = list(ensemble)
    if not paths:
        raise ValueError("empty ensemble")
    grid = paths[0].grid
    if any(pth.grid != grid for pth in paths):
        raise ValueError("paths must share one grid")
    return np.stack([pth.forward for pth in paths]), grid


def discount_factors(ensemble) -> np.ndarray:
    """exp(-integral of the step process over [0, T]) per path."""
    X, grid = _forward_block(ensemble)
    return np.exp(-grid.delta * X[:, :-1].sum(axis=1))


def bond_price(ensemble, T: float | None = None) -> MCEstimate:
    """Zero-coupon bond E[exp(-int_0^T x dt)] from the step process."""
    X, grid = _forward_block(ensemble)
    if T is not None and abs(grid.N * grid.delta - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"paths end at {grid.T!r}, not T={T!r}")
    return mc_estimate(discount_factors(ensemble))


def lookback_payoffs(ensemble, K: float) -> np.ndarray:
    if not K > 0:
        raise ValueError("strike must be > 0")
    X, _ = _forward_block(ensemble)
    return np.maximum(K - X.min(axis=1), 0.0)


def lookback_put(ensemble, K: float) -> MCEstimate:
    """Fixed-strike lookback put E[(K - min_{0<=t<=T} x)^+], undiscounted."""
    return mc_estimate(lookback_payoffs(ensemble, K))
