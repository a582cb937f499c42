"""Truncation machinery for the explicit scheme.

The state is clamped at kappa(delta) = z^{-1}(psi(delta)) before the
coefficients are evaluated, where z is an increasing envelope of
|f(x)| v g(x, y) over the ball |x| v |y| <= u and psi(delta) = psi0 * delta^-q
grows as the step shrinks.  Negative states map to the constant drift
alpha*mu and zero diffusion.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np

from .model import ModelParams

DOMINANCE_SAMPLES = 4096


class PolicyViolation(ValueError):
    def __init__(self, condition: str, message: str):
        super().__init__(message)
        self.condition = condition


@dataclass(frozen=True)
class DefaultEnvelope:
    """z(u) = alpha*mu + alpha*u^gamma + sigma*u^(theta + r)."""

    alpha: float
    mu: float
    sigma: float
    gamma: float
    power: float
    name: str = "default"
    valid_from: float = 0.0

    @classmethod
    def for_params(cls, p: ModelParams) -> "DefaultEnvelope":
        return cls(p.alpha, p.mu, p.sigma, p.gamma, p.theta + p.r)

    def __call__(self, u):
        return self.alpha * self.mu + self.alpha * u**self.gamma + self.sigma * u**self.power

    def derivative(self, u):
        return (
            self.alpha * self.gamma * u ** (self.gamma - 1)
            + self.sigma * self.power * u ** (self.power - 1)
        )


@dataclass(frozen=True)
class PowerEnvelope:
    """z(u) = coef * u^power, optionally only claimed for u >= valid_from."""

    coef: float
    power: float
    name: str = "power"
    valid_from: float = 0.0

    def __post_init__(self):
        if not (self.coef > 0 and self.power > 0):
            raise PolicyViolation("envelope", "power envelope needs coef > 0 and power > 0")

    def __call__(self, u):
        return self.coef * u**self.power

    def derivative(self, u):
        return self.coef * self.power * u ** (self.power - 1)


def worked_example_envelope() -> PowerEnvelope:
    """6.5 u^2, stated for u >= 1 in the worked example."""
    return PowerEnvelope(6.5, 2.0, name="paper_example", valid_from=1.0)


def default_envelope(p: ModelParams) -> DefaultEnvelope:
    return DefaultEnvelope.for_params(p)


def envelope_inverse(envelope, v: float, rtol: float = 1e-12) -> float:
    """Solve z(u) = v for u by bisection with Newton refinement.

    ``envelope`` may be an envelope or a TruncationPolicy.  The search starts
    at the envelope's ``valid_from`` point; v below z(valid_from) is rejected.
    """
    z = getattr(envelope, "envelope", envelope)
    lo = float(z.valid_from)
    z_lo = z(lo)
    if not v >= z_lo:
        raise ValueError(f"inverse undefined: v={v!r} is below z({lo!r})={z_lo!r}")
    if v == z_lo:
        return lo
    hi = max(1.0, 2 * lo)
    while z(hi) < v:
        hi *= 2.0
        if not math.isfinite(hi):
            raise OverflowError("envelope inverse bracket diverged")
    tol = rtol * max(1.0, abs(v))
    u = 0.5 * (lo + hi)
    for _ in range(200):
        resid = z(u) - v
        if abs(resid) <= 4 * math.ulp(v):
            return u
        if resid > 0:
            hi = u
        else:
            lo = u
        d = z.derivative(u)
        step = u - resid / d if d > 0 else None
        u = step if step is not None and lo < step < hi else 0.5 * (lo + hi)
        if hi - lo <= 4 * math.ulp(hi):
            break
    if abs(z(u) - v) > tol:
        raise ArithmeticError(f"envelope inverse did not converge for v={v!r}")
    return u


@dataclass(frozen=True)
class TruncationPolicy:
    envelope: object
    psi_scale: float = 1.0
    psi_exponent: float = 0.25
    delta_star: float = 1.0
    strict_42: bool = True
    warnings: tuple = field(default=(), compare=False)

    def __post_init__(self):
        if not self.psi_exponent > 0:
            raise PolicyViolation("psi", "psi must blow up as delta -> 0 (psi_exponent > 0)")
        if not self.psi_scale >= 1:
            raise PolicyViolation("psi", "psi_scale must be >= 1")
        if not 0 < self.delta_star <= 1:
            raise PolicyViolation("delta_star", "delta_star must lie in (0, 1]")

    def psi(self, delta):
        return self.psi_scale * delta ** (-self.psi_exponent)

    @property
    def provenance(self) -> str:
        text = (
            f"envelope={self.envelope.name}; psi(delta)={self.psi_scale!r}*delta^-{self.psi_exponent!r}; "
            f"delta_star={self.delta_star!r}; strict_42={str(self.strict_42).lower()}"
        )
        if self.envelope.valid_from > 0:
            text += f"; envelope claimed for u >= {self.envelope.valid_from!r} only"
        for w in self.warnings:
            text += f"; WARNING: {w}"
        return text

    def clamp_bound(self, delta: float) -> float:
        return clamp_bound(self, delta)


def _condition_failures(policy: TruncationPolicy) -> list:
    failed = []
    z1 = policy.envelope(1.0)
    # the default delta_star = z(1)^-4 meets this with equality up to rounding
    if policy.psi(policy.delta_star) < z1 * (1 - 1e-12):
        failed.append(f"violates psi(delta_star) >= z(1) ({policy.psi(policy.delta_star)!r} < {z1!r})")
    q, s = policy.psi_exponent, policy.psi_scale
    # delta^(1/4) psi(delta) = s delta^(1/4 - q) is maximal at delta_star when q <= 1/4
    if q > 0.25 or s * policy.delta_star ** (0.25 - q) > 1 + 1e-12:
        failed.append("violates Δ^{1/4}ψ(Δ)≤1")
    return failed


def _dominance_failures(p: ModelParams, envelope) -> list:
    """Randomized check of sup_{|x| v |y| <= u} |f(x)| v g(x, y) <= z(u)."""
    rng = np.random.default_rng(20240101)
    lo = float(envelope.valid_from)
    u = lo + np.concatenate([[0.0, 0.5, 1.0, 2.0, 10.0], rng.exponential(3.0, DOMINANCE_SAMPLES)])
    x = u * rng.random(u.size)
    y = u * rng.random(u.size)
    xs = np.concatenate([x, u, np.zeros_like(u), u])
    ys = np.concatenate([y, u, u, np.zeros_like(u)])
    us = np.concatenate([u, u, u, u])
    f = np.abs(p.alpha * (p.mu - xs**p.gamma))
    g = p.sigma * xs**p.theta * ys**p.r
    bad = np.maximum(f, g) > envelope(us) * (1 + 1e-12)
    if np.any(bad):
        worst = float(us[bad].max())
        return [f"envelope fails to dominate |f| v g at sampled u up to {worst:.4g}"]
    return []


def make_policy(
    p: ModelParams,
    *,
    envelope=None,
    psi_scale: float | None = None,
    psi_exponent: float | None = None,
    delta_star: float | None = None,
    strict_42: bool = True,
) -> TruncationPolicy:
    """Default policy: z from the coefficients, psi(delta) = delta^-1/4 and
    delta_star = min(1, z(1)^-4).  Overrides replace any piece; non-strict
    policies keep a warning for each condition they break instead of raising.
    """
    if envelope is None or envelope == "default":
        envelope = default_envelope(p)
    elif envelope == "paper_example":
        envelope = worked_example_envelope()
    psi_scale = 1.0 if psi_scale is None else float(psi_scale)
    psi_exponent = 0.25 if psi_exponent is None else float(psi_exponent)
    if delta_star is None:
        delta_star = min(1.0, envelope(1.0) ** -4)
    draft = TruncationPolicy(envelope, psi_scale, psi_exponent, float(delta_star), strict_42)
    failures = _condition_failures(draft) + _dominance_failures(p, envelope)
    if failures and strict_42:
        raise PolicyViolation("psi_conditions", "; ".join(failures))
    return TruncationPolicy(
        envelope, psi_scale, psi_exponent, float(delta_star), strict_42, tuple(failures)
    )


@functools.lru_cache(maxsize=256)
def _clamp_level(policy: TruncationPolicy, delta: float) -> float:
    return envelope_inverse(policy.envelope, policy.psi(delta))


def clamp_bound(policy: TruncationPolicy, delta: float) -> float:
    """kappa(delta) = z^{-1}(psi(delta))."""
    if not delta > 0:
        raise ValueError("delta must be > 0")
    if policy.strict_42 and delta > policy.delta_star:
        raise PolicyViolation(
            "delta_star",
            f"delta={delta!r} exceeds delta_star={policy.delta_star!r} of a strict policy",
        )
    try:
        return _clamp_level(policy, float(delta))
    except ValueError as exc:
        raise PolicyViolation("psi", f"no clamp level at delta={delta!r}: {exc}") from None


def truncated_drift(policy: TruncationPolicy, p: ModelParams, delta: float, x):
    """f(min(x, kappa)) for x >= 0 and alpha*mu for x < 0."""
    kappa = clamp_bound(policy, delta)
    xa = np.asarray(x, dtype=float)
    xc = np.minimum(np.maximum(xa, 0.0), kappa)
    out = np.where(xa < 0, p.alpha * p.mu, p.alpha * (p.mu - xc**p.gamma))
    return float(out) if out.ndim == 0 else out


def truncated_diffusion(policy: TruncationPolicy, p: ModelParams, delta: float, x, y):
    """g(min(x, kappa), min(y, kappa)) when x, y >= 0; zero if either is negative."""
    kappa = clamp_bound(policy, delta)
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    xc = np.minimum(np.maximum(xa, 0.0), kappa)
    yc = np.minimum(np.maximum(ya, 0.0), kappa)
    out = np.where((xa < 0) | (ya < 0), 0.0, p.sigma * xc**p.theta * yc**p.r)
    return float(out) if out.ndim == 0 else out
