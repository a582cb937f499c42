"""Truncated Euler-Maruyama (TEM) and drift-implicit backward Euler (BEM).

Both schemes are written for a block of paths at once; each row of a block
is an independent path and every operation is elementwise, so a path's bits
do not depend on which other paths share its block.  Ensembles are cut into
fixed blocks of BATCH path ids and the blocks are farmed out to threads,
which keeps results identical for any worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import noise as noise_mod
from .model import InitialSegment, ModelParams
from .truncation import TruncationPolicy, clamp_bound

BATCH = 256
STATE_CAP = 1e12


class ImplicitStepFailure(ArithmeticError):
    def __init__(self, message: str, step: int | None = None):
        super().__init__(message if step is None else f"step {step}: {message}")
        self.step = step


class PathDivergence(ArithmeticError):
    def __init__(self, step: int, path_id: int):
        super().__init__(f"state exceeded {STATE_CAP:g} in magnitude at step {step} of path {path_id}")
        self.step = step
        self.path_id = path_id


def exact(value) -> Fraction:
    """Exact rational for a float or decimal string (0.01 -> 1/100)."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        return Fraction(repr(value))
    return Fraction(str(value))


def integer_ratio(num, den, what: str) -> int:
    q = exact(num) / exact(den)
    if q.denominator != 1:
        raise ValueError(f"{what}: {num} is not an integer multiple of {den}")
    return int(q)


@dataclass(frozen=True)
class SolverGrid:
    delta: float
    M: int
    N: int
    T: float
    tau: float

    @classmethod
    def build(cls, tau, T, delta) -> "SolverGrid":
        """Uniform grid with tau = M*delta and T = N*delta, checked exactly."""
        if not float(delta) > 0:
            raise ValueError("delta must be > 0")
        M = integer_ratio(tau, delta, "tau")
        N = integer_ratio(T, delta, "T")
        if M < 1 or N < 1:
            raise ValueError("need M >= 1 and N >= 1")
        return cls(float(exact(delta)), M, N, float(exact(T)), float(exact(tau)))

    def times(self) -> np.ndarray:
        """t_k for k = 0..N."""
        return np.arange(self.N + 1) * self.delta

    def coarsened(self, factor: int) -> "SolverGrid":
        if self.M % factor or self.N % factor:
            raise ValueError(f"factor {factor} does not divide the grid")
        return SolverGrid(
            float(exact(self.delta) * factor), self.M // factor, self.N // factor, self.T, self.tau
        )


@dataclass(frozen=True, eq=False)
class SamplePath:
    grid: SolverGrid
    states: np.ndarray  # k = -M..N
    increments_ref: tuple
    scheme: str
    clamp_events: int = 0
    negative_events: int = 0
    params: ModelParams | None = None
    policy: TruncationPolicy | None = None

    def at(self, k: int) -> float:
        """X_k for grid index k in -M..N."""
        return float(self.states[k + self.grid.M])

    @property
    def forward(self) -> np.ndarray:
        """X_0..X_N."""
        return self.states[self.grid.M :]


def _check_inputs(init: InitialSegment, grid: SolverGrid, dW: np.ndarray):
    init.require_positive()
    if init.M != grid.M:
        raise ValueError(f"initial segment has M={init.M}, grid has M={grid.M}")
    if dW.shape[-1] < grid.N:
        raise ValueError(f"need {grid.N} increments, got {dW.shape[-1]}")


def _same_step(a: float, b: float) -> bool:
    return abs(a - b) <= 1e-9 * max(a, b)


def tem_block(p: ModelParams, kappa: float, init_values: np.ndarray, dW: np.ndarray, delta: float):
    """Run the truncated EM recursion on a block of paths.

    Returns (X, clamp_events, negative_events) with X[:, k] = X_k, k = 0..N.
    """
    P, N = dW.shape
    M = len(init_values) - 1
    X = np.empty((P, N + 1))
    X[:, 0] = init_values[-1]
    clamps = np.zeros(P, dtype=np.int64)
    negs = np.zeros(P, dtype=np.int64)
    for k in range(N):
        x = X[:, k]
        y = X[:, k - M] if k >= M else np.full(P, init_values[k])
        f, g = tem_coefficients(p, kappa, x, y)
        X[:, k + 1] = x + f * delta + g * dW[:, k]
        neg_x = x < 0
        negs += neg_x
        clamps += ~neg_x & ((x > kappa) | ((y >= 0) & (y > kappa)))
        _guard(X[:, k + 1], k + 1)
    return X, clamps, negs


def tem_coefficients(p: ModelParams, kappa: float, x: np.ndarray, y: np.ndarray):
    """Truncated drift and diffusion at current states x and delayed states y."""
    xc = np.minimum(np.maximum(x, 0.0), kappa)
    yc = np.minimum(np.maximum(y, 0.0), kappa)
    f = np.where(x < 0, p.alpha * p.mu, p.alpha * (p.mu - xc**p.gamma))
    g = np.where((x < 0) | (y < 0), 0.0, p.sigma * xc**p.theta * yc**p.r)
    return f, g


def _guard(x: np.ndarray, step: int, path_ids=None):
    if not np.all(np.abs(x) <= STATE_CAP):
        i = int(np.argmax(~(np.abs(x) <= STATE_CAP)))
        raise PathDivergence(step, i if path_ids is None else int(path_ids[i]))


def implicit_solve(p: ModelParams, delta: float, rhs, rtol: float = 1e-12):
    """Solve y + alpha*delta*y^gamma = rhs + alpha*mu*delta for y > 0.

    Newton from max(rhs, eps) inside a bisection bracket [0, c], where c is
    the right-hand side: the left side is increasing from 0, so y < c.
    """
    rhs_a = np.atleast_1d(np.asarray(rhs, dtype=float))
    a = p.alpha * delta
    c = rhs_a + p.alpha * p.mu * delta
    if not np.all(c > 0):
        i = int(np.argmax(~(c > 0)))
        raise ImplicitStepFailure(f"no positive root: rhs + alpha*mu*delta = {float(c[i])!r} <= 0")
    lo = np.zeros_like(c)
    hi = c.copy()
    y = np.clip(rhs_a, np.finfo(float).eps, c)
    for _ in range(100):
        F = y + a * y**p.gamma - c
        lo = np.where(F < 0, y, lo)
        hi = np.where(F > 0, y, hi)
        dF = 1.0 + a * p.gamma * y ** (p.gamma - 1)
        yn = y - F / dF
        inside = (yn > lo) & (yn < hi)
        yn = np.where(inside | (F == 0), yn, 0.5 * (lo + hi))
        done = np.abs(yn - y) <= rtol * yn
        y = yn
        if done.all():
            break
    resid = np.abs(y + a * y**p.gamma - c)
    if not np.all(resid <= 1e-10 * np.maximum(1.0, np.abs(rhs_a))):
        raise ImplicitStepFailure(f"Newton residual {float(resid.max())!r} too large")
    return float(y[0]) if np.ndim(rhs) == 0 else y


def implicit_step_solve(p: ModelParams, delta: float, rhs: float) -> float:
    return implicit_solve(p, delta, float(rhs))


def bem_block(p: ModelParams, init_values: np.ndarray, dW: np.ndarray, delta: float):
    """Drift-implicit, diffusion-explicit Euler on a block of paths.

    Diffusion arguments are clipped at 0 from below.  Returns (X, 0, negatives).
    """
    P, N = dW.shape
    M = len(init_values) - 1
    X = np.empty((P, N + 1))
    X[:, 0] = init_values[-1]
    negs = np.zeros(P, dtype=np.int64)
    for k in range(N):
        x = X[:, k]
        y = X[:, k - M] if k >= M else np.full(P, init_values[k])
        g = p.sigma * np.maximum(x, 0.0) ** p.theta * np.maximum(y, 0.0) ** p.r
        negs += x < 0
        try:
            X[:, k + 1] = implicit_solve(p, delta, x + g * dW[:, k])
        except ImplicitStepFailure as exc:
            raise ImplicitStepFailure(str(exc), step=k) from None
        _guard(X[:, k + 1], k + 1)
    return X, np.zeros(P, dtype=np.int64), negs


def _path_from_block(p, policy, init, grid, stream, scheme, X, clamps, negs):
    states = np.concatenate((init.values[:-1], X[0]))
    states.setflags(write=False)
    return SamplePath(
        grid, states, stream.key, scheme, int(clamps[0]), int(negs[0]), p,
        policy if scheme == "tem" else None,
    )


def solve_tem(p, policy, init, grid, noise: noise_mod.IncrementStream) -> SamplePath:
    if not _same_step(noise.delta, grid.delta):
        raise ValueError(f"noise step {noise.delta!r} does not match grid step {grid.delta!r}")
    dW = noise.values[None, : grid.N]
    _check_inputs(init, grid, dW)
    kappa = clamp_bound(policy, grid.delta)
    X, c, n = tem_block(p, kappa, init.values, dW, grid.delta)
    return _path_from_block(p, policy, init, grid, noise, "tem", X, c, n)


def solve_bem(p, init, grid, noise: noise_mod.IncrementStream) -> SamplePath:
    if not _same_step(noise.delta, grid.delta):
        raise ValueError(f"noise step {noise.delta!r} does not match grid step {grid.delta!r}")
    dW = noise.values[None, : grid.N]
    _check_inputs(init, grid, dW)
    X, c, n = bem_block(p, init.values, dW, grid.delta)
    return _path_from_block(p, None, init, grid, noise, "bem", X, c, n)


def _grid_index(t: float, step: float) -> tuple[int, bool]:
    r = t / step
    k = round(r)
    if abs(r - k) <= 1e-9 * max(1.0, abs(r)):
        return int(k), True
    return math.floor(r), False


def step_value(path: SamplePath, t: float) -> float:
    """Piecewise-constant readout X_{floor(t/delta)}; X_N at t = T."""
    g = path.grid
    if not -g.tau * (1 + 1e-12) <= t <= g.T * (1 + 1e-12):
        raise ValueError(f"t={t!r} outside [-tau, T]")
    k, _ = _grid_index(t, g.delta)
    return path.at(min(max(k, -g.M), g.N))


def interpolated_value(path: SamplePath, t: float, sub_noise: noise_mod.IncrementStream) -> float:
    """Continuous TEM process at a point of a refinement grid.

    Between coarse points t_j and t_{j+1}:
        x(t) = X_j + f_D(X_j) (t - t_j) + g_D(X_j, X_{j-M}) (B(t) - B(t_j))
    with B read from ``sub_noise``; at coarse points this is X_j exactly.
    """
    if path.scheme != "tem":
        raise ValueError("the continuous interpolation is defined for TEM paths")
    g = path.grid
    factor, ok = _grid_index(g.delta, sub_noise.delta)
    if not ok or factor < 1:
        raise ValueError("sub_noise step does not refine the path grid")
    if sub_noise.key != path.increments_ref:
        raise ValueError("sub_noise is not the stream that drove this path")
    i, on_grid = _grid_index(t, sub_noise.delta)
    if not on_grid or not 0 <= i <= g.N * factor:
        raise ValueError(f"t={t!r} is not a refinement grid point in [0, T]")
    j, r = divmod(i, factor)
    if r == 0:
        return path.at(j)
    p, policy = path.params, path.policy
    kappa = clamp_bound(policy, g.delta)
    x, y = path.at(j), path.at(j - g.M)
    xc, yc = min(max(x, 0.0), kappa), min(max(y, 0.0), kappa)
    f = p.alpha * p.mu if x < 0 else p.alpha * (p.mu - xc**p.gamma)
    gg = 0.0 if (x < 0 or y < 0) else p.sigma * xc**p.theta * yc**p.r
    dB = sub_noise.brownian[i] - sub_noise.brownian[j * factor]
    return x + f * (r * sub_noise.delta) + gg * dB


def first_exit_index(path, lower: float, upper: float):
    """Smallest k >= 0 with X_k outside [lower, upper], or None."""
    if not 0 < lower < upper:
        raise ValueError("need 0 < lower < upper")
    x = path.forward if isinstance(path, SamplePath) else np.asarray(path)
    out = (x < lower) | (x > upper)
    return int(np.argmax(out)) if out.any() else None


@dataclass(frozen=True, eq=False)
class Ensemble:
    """A block of paths on one grid; row i of ``states`` holds X_0..X_N of path_ids[i]."""

    grid: SolverGrid
    init: InitialSegment
    states: np.ndarray
    path_ids: np.ndarray
    seed: int
    scheme: str
    clamp_events: np.ndarray
    negative_events: np.ndarray
    params: ModelParams | None = None
    policy: TruncationPolicy | None = None

    def __len__(self) -> int:
        return len(self.path_ids)

    @property
    def terminal(self) -> np.ndarray:
        return self.states[:, -1]

    def path(self, i: int) -> SamplePath:
        states = np.concatenate((self.init.values[:-1], self.states[i]))
        return SamplePath(
            self.grid, states, (self.seed, int(self.path_ids[i])), self.scheme,
            int(self.clamp_events[i]), int(self.negative_events[i]), self.params, self.policy,
        )


def path_batches(n_paths: int, first_id: int = 0):
    """Fixed [start, stop) id ranges of at most BATCH paths."""
    return [
        np.arange(s, min(s + BATCH, first_id + n_paths))
        for s in range(first_id, first_id + n_paths, BATCH)
    ]


def run_batches(fn, batches, workers: int = 1):
    """Map fn over batches, returning results in batch order."""
    if workers <= 1 or len(batches) <= 1:
        return [fn(b) for b in batches]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, batches))


def solve_block(p, policy, init, grid, scheme: str, dW: np.ndarray):
    _check_inputs(init, grid, dW)
    if scheme == "tem":
        return tem_block(p, clamp_bound(policy, grid.delta), init.values, dW, grid.delta)
    if scheme == "bem":
        return bem_block(p, init.values, dW, grid.delta)
    raise ValueError(f"unknown scheme {scheme!r}")


def simulate(
    p: ModelParams,
    init: InitialSegment,
    grid: SolverGrid,
    scheme: str,
    n_paths: int,
    seed: int,
    policy: TruncationPolicy | None = None,
    workers: int = 1,
    refine: int = 1,
    first_id: int = 0,
) -> Ensemble:
    """Solve an ensemble of paths.

    With ``refine > 1`` the noise is drawn on a grid ``refine`` times finer
    and coarsened, so ensembles at different steps share Brownian paths when
    they share the finest step.
    """
    if n_paths < 1:
        raise ValueError("need at least one path")
    if scheme == "tem" and policy is None:
        raise ValueError("TEM needs a truncation policy")
    base_delta = float(exact(grid.delta) / refine)

    def work(ids):
        dW = noise_mod.increment_blocks(seed, ids, base_delta, grid.N * refine, (refine,))[refine]
        try:
            return solve_block(p, policy, init, grid, scheme, dW)
        except PathDivergence as exc:
            raise PathDivergence(exc.step, int(ids[exc.path_id])) from None

    parts = run_batches(work, path_batches(n_paths, first_id), workers)
    X = np.concatenate([x for x, _, _ in parts])
    return Ensemble(
        grid, init, X, np.arange(first_id, first_id + n_paths), int(seed), scheme,
        np.concatenate([c for _, c, _ in parts]), np.concatenate([n for _, _, n in parts]),
        p, policy if scheme == "tem" else None,
    )
