"""Coefficients and initial data of the delayed mean-reverting rate model

    dx(t) = alpha (mu - x(t)^gamma) dt + sigma x(t - tau)^r x(t)^theta dB(t)

Parameters are validated on construction.  ``unchecked`` builds a parameter
set that skips validation; it exists for oracle configurations in tests
(gamma = 1 linear drift and similar) and is not reachable from the CLI.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class AssumptionViolation(ValueError):
    """A parameter set or initial segment breaks a standing assumption."""

    def __init__(self, condition: str, message: str, parameter: str | None = None):
        super().__init__(message)
        self.condition = condition
        self.parameter = parameter


@dataclass(frozen=True)
class ModelParams:
    alpha: float
    mu: float
    sigma: float
    gamma: float
    r: float
    theta: float
    tau: float

    def __post_init__(self):
        for name in ("alpha", "mu", "sigma", "gamma", "r", "theta", "tau"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not getattr(self, "_skip_validation", False):
            validate_params(self)

    @property
    def equilibrium(self) -> float:
        """Root of the drift, mu^(1/gamma)."""
        return self.mu ** (1.0 / self.gamma)


def unchecked(**kwargs) -> ModelParams:
    """Build a ModelParams without validation (test oracles only)."""
    p = object.__new__(ModelParams)
    object.__setattr__(p, "_skip_validation", True)
    p.__init__(**kwargs)
    return p


def validate_params(p: ModelParams) -> ModelParams:
    """Return ``p`` unchanged if every standing assumption holds.

    Raises AssumptionViolation naming the failed condition: ``positivity``,
    ``gamma`` (gamma <= 1) or ``growth`` (1 + gamma <= 2 (r + theta)).
    """
    values = (p.alpha, p.mu, p.sigma, p.gamma, p.r, p.theta, p.tau)
    if not all(math.isfinite(v) for v in values):
        raise AssumptionViolation("positivity", "parameters must be finite")
    for name in ("alpha", "mu", "tau", "r", "theta"):
        if not getattr(p, name) > 0:
            raise AssumptionViolation(
                "positivity", f"{name} must be > 0, got {getattr(p, name)!r}", name
            )
    if not p.sigma >= 0:
        raise AssumptionViolation("positivity", f"sigma must be >= 0, got {p.sigma!r}", "sigma")
    if not p.gamma > 1:
        raise AssumptionViolation("gamma", f"gamma must be > 1, got {p.gamma!r}", "gamma")
    if not 1 + p.gamma > 2 * (p.r + p.theta):
        raise AssumptionViolation(
            "growth",
            f"1 + gamma > 2 (r + theta) fails: {1 + p.gamma!r} <= {2 * (p.r + p.theta)!r}",
            "gamma",
        )
    return p


def drift(p: ModelParams, x):
    """alpha (mu - x^gamma) for x >= 0 (scalar or array)."""
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0):
        raise ValueError("drift is defined for x >= 0 only")
    out = p.alpha * (p.mu - xa**p.gamma)
    return float(out) if out.ndim == 0 else out


def diffusion(p: ModelParams, x, y):
    """sigma x^theta y^r for x, y >= 0; y is the delayed state."""
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    if np.any(xa < 0) or np.any(ya < 0):
        raise ValueError("diffusion is defined for x, y >= 0 only")
    out = p.sigma * xa**p.theta * ya**p.r
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class InitialSegment:
    """Initial function sampled at t_k = k*delta, k = -M..0 (oldest first)."""

    grid_values: tuple
    holder_D: float
    holder_ell: float
    tau: float

    def __post_init__(self):
        vals = tuple(float(v) for v in self.grid_values)
        object.__setattr__(self, "grid_values", vals)
        if len(vals) < 2:
            raise ValueError("initial segment needs at least two grid values")
        if not all(v >= 0 and math.isfinite(v) for v in vals):
            raise AssumptionViolation("positivity", "initial data must be non-negative")
        if self.holder_D < 0:
            raise ValueError("holder_D must be >= 0")
        if not 0 < self.holder_ell <= 1:
            raise ValueError("holder_ell must lie in (0, 1]")
        if not self.tau > 0:
            raise ValueError("tau must be > 0")

    @property
    def M(self) -> int:
        return len(self.grid_values) - 1

    @property
    def delta(self) -> float:
        return self.tau / self.M

    @property
    def values(self) -> np.ndarray:
        return np.array(self.grid_values)

    @property
    def xi0(self) -> float:
        return self.grid_values[-1]

    def require_positive(self) -> "InitialSegment":
        # the positivity argument needs min xi > 0, not just xi >= 0
        if min(self.grid_values) <= 0:
            raise AssumptionViolation(
                "positivity", "solvers need initial data bounded away from 0"
            )
        return self


def constant_initial(c: float, tau: float, M: int) -> InitialSegment:
    if not c > 0:
        raise ValueError(f"constant initial value must be > 0, got {c!r}")
    if M < 1:
        raise ValueError("M must be >= 1")
    return InitialSegment((float(c),) * (M + 1), 0.0, 1.0, tau)


def verify_holder(seg: InitialSegment) -> bool:
    """Check |xi(t) - xi(s)| <= D |t - s|^ell over every pair of grid points."""
    v = seg.values
    h = seg.delta
    n = len(v)
    for lag in range(1, n):
        diff = np.abs(v[lag:] - v[:-lag])
        bound = seg.holder_D * (lag * h) ** seg.holder_ell
        # rounding slack: equality cases (e.g. sqrt profiles) must not flip
        if np.any(diff > bound * (1 + 1e-12) + 1e-15):
            return False
    return True
