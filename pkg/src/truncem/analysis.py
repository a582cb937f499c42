"""Ensemble diagnostics: distribution summaries, Lyapunov traces, the gap
between the continuous and step TEM processes, pathwise sup-errors and
convergence sweeps, and empirical exit probabilities."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

from . import noise as noise_mod
from .model import InitialSegment, ModelParams, constant_initial
from .solver import (
    Ensemble,
    SamplePath,
    SolverGrid,
    exact,
    first_exit_index,
    path_batches,
    run_batches,
    solve_block,
    tem_coefficients,
)
from .truncation import TruncationPolicy, clamp_bound


class InsufficientSamples(ValueError):
    pass


@dataclass(frozen=True)
class SummaryStats:
    """Population moments; skew and kurt are None when sd == 0."""

    min: float
    mean: float
    sd: float
    kurt: float | None
    skew: float | None
    max: float
    n: int


def summary_stats(samples) -> SummaryStats:
    """Table-style summary with population sd and Pearson (non-excess) kurtosis."""
    x = np.asarray(samples, dtype=float).ravel()
    n = x.size
    if n < 2:
        raise InsufficientSamples(f"need at least 2 samples, got {n}")
    mean = x.sum() / n
    d = x - mean
    m2 = (d * d).sum() / n
    sd = float(np.sqrt(m2))
    if sd == 0:
        skew = kurt = None
    else:
        # standardise first: m2**1.5 underflows for tiny but nonzero spreads
        z = d / sd
        skew = float((z**3).sum() / n)
        kurt = float((z**4).sum() / n)
    # the mean of identical values can land an ulp outside [min, max]
    lo, hi = float(x.min()), float(x.max())
    return SummaryStats(lo, min(max(float(mean), lo), hi), sd, kurt, skew, hi, n)


def lyapunov_value(x, beta: float):
    """V(x) = x^beta - 1 - beta*log(x), for x > 0 and 0 < beta < 1."""
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    xa = np.asarray(x, dtype=float)
    if np.any(xa <= 0):
        raise ValueError("V is defined for x > 0 only")
    out = xa**beta - 1.0 - beta * np.log(xa)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class LyapunovTrace:
    times: np.ndarray
    mean_v: np.ndarray
    excluded: int


def lyapunov_trace(ensemble: Ensemble, beta: float) -> LyapunovTrace:
    """Ensemble mean of V along the step process at every grid time.

    Paths that touch a non-positive state are left out and counted.
    """
    X = ensemble.states
    keep = np.all(X > 0, axis=1)
    if not keep.any():
        raise InsufficientSamples("every path touched a non-positive state")
    v = lyapunov_value(X[keep], beta)
    return LyapunovTrace(ensemble.grid.times(), v.mean(axis=0), int((~keep).sum()))


def as_initial(init, tau: float, M: int) -> InitialSegment:
    if isinstance(init, InitialSegment):
        if init.M != M:
            raise ValueError(f"initial segment has M={init.M}, expected {M}")
        return init
    return constant_initial(float(init), tau, M)


def gap_moment(
    p: ModelParams,
    policy: TruncationPolicy,
    init,
    delta: float,
    refine_factor: int,
    p_exp: float,
    paths: int,
    seed: int,
    T: float | None = None,
    workers: int = 1,
) -> float:
    """Monte Carlo max over interior refinement points of E|x(t) - xbar(t)|^p.

    ``init`` is an InitialSegment on the delta grid or a constant xi(0).
    The horizon defaults to tau.
    """
    if refine_factor < 2:
        raise ValueError("refine_factor must be >= 2")
    if p_exp < 2:
        raise ValueError("p_exp must be >= 2")
    T = p.tau if T is None else T
    grid = SolverGrid.build(p.tau, T, delta)
    init = as_initial(init, p.tau, grid.M)
    kappa = clamp_bound(policy, grid.delta)
    R = refine_factor
    h = float(exact(grid.delta) / R)

    def work(ids):
        blocks = noise_mod.increment_blocks(seed, ids, h, grid.N * R, (R,), brownian=True)
        X, _, _ = solve_block(p, policy, init, grid, "tem", blocks[R])
        W = blocks["brownian"]
        xk = X[:, :-1]
        # delayed state X_{k-M} for k = 0..N-1: initial data first, then the path
        head = min(grid.M, grid.N)
        delayed = np.concatenate(
            (np.broadcast_to(init.values[:head], (len(ids), head)), X[:, : grid.N - head]), axis=1
        )
        f, g = tem_coefficients(p, kappa, xk, delayed)
        base = W[:, : grid.N * R : R]
        sums = np.empty((R - 1, grid.N))
        for r in range(1, R):
            gap = f * (r * h) + g * (W[:, r : grid.N * R : R] - base)
            sums[r - 1] = (np.abs(gap) ** p_exp).sum(axis=0)
        return sums

    parts = run_batches(work, path_batches(paths), workers)
    total = parts[0].copy()
    for part in parts[1:]:
        total += part
    return float((total / paths).max())


def sup_error(path_a, path_b) -> float:
    """max_k |a_k - b_k| over k = 0..N on a shared grid."""
    if isinstance(path_a, SamplePath) and isinstance(path_b, SamplePath):
        if path_a.grid != path_b.grid:
            raise ValueError("paths live on different grids")
        a, b = path_a.forward, path_b.forward
    else:
        a, b = np.asarray(path_a, dtype=float), np.asarray(path_b, dtype=float)
        if a.shape != b.shape:
            raise ValueError("paths live on different grids")
    return float(np.max(np.abs(a - b), axis=-1)) if a.ndim == 1 else np.max(np.abs(a - b), axis=-1)


@dataclass(frozen=True)
class ConvergenceRow:
    delta: float
    error_median: float
    error_mean: float
    error_p90: float
    n_paths: int


@dataclass(frozen=True)
class ConvergenceConfig:
    params: ModelParams
    policy: TruncationPolicy
    xi0: float
    T: float
    deltas: tuple
    n_paths: int
    seed: int
    mode: str = "tem-bem"  # or "tem-ref"
    ref_delta: float | None = None
    workers: int = 1


@dataclass(frozen=True, eq=False)
class ConvergenceResult:
    rows: tuple
    slope: float
    slope_stderr: float | None
    errors: dict = field(repr=False)

    def tail_fraction(self, delta: float, threshold: float) -> float:
        """Fraction of paths whose sup-error at ``delta`` exceeds ``threshold``."""
        return float(np.mean(self.errors[delta] > threshold))


def loglog_slope(deltas, values) -> tuple[float, float | None]:
    """OLS slope of log(values) on log(deltas) and its standard error."""
    if len(deltas) < 2:
        raise ValueError("need at least two points for a slope")
    if not np.all(np.asarray(values, float) > 0):
        return float("nan"), None
    x, y = np.log(np.asarray(deltas, float)), np.log(np.asarray(values, float))
    if len(x) == 2:
        return float((y[1] - y[0]) / (x[1] - x[0])), None
    fit = sps.linregress(x, y)
    return float(fit.slope), float(fit.stderr)


def _nested_factors(deltas, finest) -> list:
    factors = []
    for d in deltas:
        q = exact(d) / exact(finest)
        if q.denominator != 1:
            raise ValueError("step sizes must be nested: each must be an integer multiple of the finest")
        factors.append(int(q))
    return factors


def convergence_study(cfg: ConvergenceConfig) -> ConvergenceResult:
    """Sup-errors on shared Brownian paths at each step size.

    mode "tem-bem" compares TEM and BEM at the same step; "tem-ref" compares
    TEM at each step with TEM at ``ref_delta`` restricted to the coarse grid.
    All levels are driven by coarsenings of one finest-grid stream per path.
    """
    p = cfg.params
    deltas = tuple(float(d) for d in cfg.deltas)
    if len(set(deltas)) != len(deltas):
        raise ValueError("duplicate step sizes")
    if cfg.mode == "tem-ref":
        if cfg.ref_delta is None:
            raise ValueError("tem-ref mode needs ref_delta")
        finest = float(cfg.ref_delta)
        if exact(finest) >= min(exact(d) for d in deltas):
            raise ValueError("ref_delta must be finer than every compared step")
    elif cfg.mode == "tem-bem":
        finest = min(deltas, key=exact)
    else:
        raise ValueError(f"unknown mode {cfg.mode!r}")
    factors = _nested_factors(deltas, finest)
    fine_grid = SolverGrid.build(p.tau, cfg.T, finest)
    grids = {d: SolverGrid.build(p.tau, cfg.T, d) for d in deltas}
    inits = {d: constant_initial(cfg.xi0, p.tau, g.M) for d, g in grids.items()}
    wanted = sorted(set(factors) | {1})

    def work(ids):
        blocks = noise_mod.increment_blocks(cfg.seed, ids, finest, fine_grid.N, wanted)
        out = {}
        if cfg.mode == "tem-ref":
            ref_init = constant_initial(cfg.xi0, p.tau, fine_grid.M)
            ref, _, _ = solve_block(p, cfg.policy, ref_init, fine_grid, "tem", blocks[1])
        for d, f in zip(deltas, factors):
            dW = blocks[f]
            a, _, _ = solve_block(p, cfg.policy, inits[d], grids[d], "tem", dW)
            if cfg.mode == "tem-ref":
                b = ref[:, ::f]
            else:
                b, _, _ = solve_block(p, None, inits[d], grids[d], "bem", dW)
            out[d] = np.max(np.abs(a - b), axis=1)
        return out

    parts = run_batches(work, path_batches(cfg.n_paths), cfg.workers)
    errors = {d: np.concatenate([part[d] for part in parts]) for d in deltas}
    rows = tuple(
        ConvergenceRow(
            d,
            float(np.median(errors[d])),
            float(errors[d].mean()),
            float(np.quantile(errors[d], 0.9)),
            cfg.n_paths,
        )
        for d in sorted(deltas, key=exact, reverse=True)
    )
    slope, se = loglog_slope([r.delta for r in rows], [r.error_median for r in rows])
    return ConvergenceResult(rows, slope, se, errors)


def exit_probability(ensemble, k_level: float) -> float:
    """Fraction of paths leaving [1/k, k] on [0, T]."""
    if not k_level > 1:
        raise ValueError("k_level must be > 1")
    X = ensemble.states if isinstance(ensemble, Ensemble) else np.asarray(
        [pth.forward for pth in ensemble]
    )
    exits = [first_exit_index(row, 1.0 / k_level, k_level) is not None for row in X]
    return float(np.mean(exits))
