"""Reproducible Brownian increments.

Each path owns a Philox stream keyed by (seed, path_id), so any worker can
regenerate any path without coordination.  Uniforms are mapped to normals
by the inverse normal CDF.

A stream keeps both its increments and the Brownian path at the grid points
(running left-to-right sum).  Coarsening subsamples the path, so coarse and
fine streams are restrictions of one path and coarsening composes exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri


def _uniforms(seed: int, path_id: int, count: int) -> np.ndarray:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(path_id),))
    raw = np.random.Philox(ss).random_raw(count)
    # 53-bit midpoints: strictly inside (0, 1), so ndtri never returns +-inf
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class IncrementStream:
    seed: int
    path_id: int
    delta: float
    values: np.ndarray
    brownian: np.ndarray

    @property
    def count(self) -> int:
        return len(self.values)

    @property
    def key(self) -> tuple:
        return (self.seed, self.path_id)

    @classmethod
    def from_values(cls, values, delta: float, seed: int = 0, path_id: int = 0) -> "IncrementStream":
        v = np.array(values, dtype=float)
        brownian = np.concatenate(([0.0], np.cumsum(v)))
        return cls(int(seed), int(path_id), float(delta), _frozen(v), _frozen(brownian))


def normal_increments(seed: int, path_id: int, delta: float, count: int) -> np.ndarray:
    if count < 1:
        raise ValueError("count must be >= 1")
    if not delta > 0:
        raise ValueError("delta must be > 0")
    return ndtri(_uniforms(seed, path_id, count)) * math.sqrt(delta)


def generate(seed: int, path_id: int, delta: float, count: int) -> IncrementStream:
    values = normal_increments(seed, path_id, delta, count)
    return IncrementStream.from_values(values, delta, seed, path_id)


def coarsen(fine: IncrementStream, factor: int) -> IncrementStream:
    if factor < 1 or fine.count % factor:
        raise ValueError(f"factor {factor} does not divide {fine.count} increments")
    if factor == 1:
        return fine
    brownian = np.ascontiguousarray(fine.brownian[::factor])
    values = np.diff(brownian)
    return IncrementStream(
        fine.seed, fine.path_id, fine.delta * factor, _frozen(values), _frozen(brownian)
    )


def increment_blocks(
    seed: int, path_ids, delta: float, count: int, factors=(1,), brownian: bool = False
) -> dict:
    """Increments for several path ids at several coarsening factors.

    Returns {factor: array of shape (len(path_ids), count // factor)} whose
    row i equals ``coarsen(generate(seed, path_ids[i], delta, count), factor).values``
    bit for bit.  With ``brownian=True`` the fine Brownian paths are included
    under the key "brownian".
    """
    for f in factors:
        if f < 1 or count % f:
            raise ValueError(f"factor {f} does not divide {count} increments")
    normals = np.empty((len(path_ids), count))
    for i, pid in enumerate(path_ids):
        normals[i] = normal_increments(seed, pid, delta, count)
    out = {}
    if brownian or any(f > 1 for f in factors):
        W = np.zeros((len(path_ids), count + 1))
        np.cumsum(normals, axis=1, out=W[:, 1:])
        if brownian:
            out["brownian"] = W
    for f in factors:
        out[f] = normals if f == 1 else np.diff(W[:, ::f], axis=1)
    return out
