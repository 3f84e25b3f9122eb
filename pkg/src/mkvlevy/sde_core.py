"""Euler stepping for distribution-independent SDEs dX = b(t,X)dt + sigma(t)dZ."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DivergenceError, PreconditionError
from .levy_noise import NoiseIncrements

#: states beyond this radius are treated as numerical blow-up
OVERFLOW_GUARD = 1e12


@dataclass
class DriftField:
    """Drift b(t, x) with its one-sided Lipschitz metadata.

    ``b`` must be vectorized in x (shape (..., d) -> (..., d)).
    ``kappa(t)`` bounds 2<b(t,x)-b(t,y), x-y> / |x-y|^2 from above;
    ``b0_bound(t)`` bounds |b(t, 0)|.
    """

    b: Callable[[float, np.ndarray], np.ndarray]
    kappa: Callable[[float], float]
    b0_bound: Callable[[float], float]


def check_one_sided(drift: DriftField, box: float, rng,
                    n_trials: int = 200, t_max: float = 1.0,
                    tol: float = 1e-9) -> bool:
    """Spot-check the one-sided Lipschitz bound on random triples."""
    for _ in range(n_trials):
        t = float(rng.uniform(0.0, t_max))
        x = rng.uniform(-box, box, size=2)
        y = rng.uniform(-box, box, size=2)
        lhs = 2.0 * np.dot(drift.b(t, x) - drift.b(t, y), x - y)
        if lhs > drift.kappa(t) * np.sum((x - y) ** 2) + tol:
            return False
    return True


def as_sigma(sigma, d: int) -> Callable[[float], np.ndarray]:
    """Normalize scalar / matrix / callable sigma to t -> (d, d)."""
    if callable(sigma):
        def fn(t):
            return np.atleast_2d(np.asarray(sigma(t), dtype=float))
        return fn
    mat = np.asarray(sigma, dtype=float)
    if mat.ndim == 0:
        mat = float(mat) * np.eye(d)
    mat = np.atleast_2d(mat)
    if mat.shape != (d, d):
        raise PreconditionError(f"sigma must be {d}x{d}, got {mat.shape}")
    return lambda t: mat


@dataclass
class PathBundle:
    """Simulated paths on a grid: states has shape (n_paths, n_times, d)."""

    grid: np.ndarray
    states: np.ndarray
    seed: Optional[int] = None

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        if self.states.ndim == 2:
            self.states = self.states[None, :, :]
        if self.states.shape[1] != self.grid.size:
            raise PreconditionError("states must hold one slice per grid time")

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]

    def to_csv(self, path, path_index: int = 0) -> None:
        d = self.states.shape[2]
        header = "t," + ",".join(f"x_{i+1}" for i in range(d))
        np.savetxt(path, np.column_stack([self.grid, self.states[path_index]]),
                   delimiter=",", header=header, comments="")


def euler_solve(drift: DriftField, sigma, noise: NoiseIncrements, x0) -> PathBundle:
    """Left-point Euler scheme; jumps enter at interval right endpoints.

    ``x0`` may be a single point (d,) shared by all noise paths or one
    point per path (n_paths, d).  Raises DivergenceError at the first
    step whose state leaves the overflow guard.
    """
    grid = noise.grid
    n_paths, n_steps, d = noise.dZ.shape
    sig = as_sigma(sigma, d)
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.ndim == 1:
        x0 = np.broadcast_to(x0, (n_paths, d)).copy()
    if x0.shape != (n_paths, d):
        raise PreconditionError(f"x0 shape {x0.shape} does not match noise {(n_paths, d)}")
    out = np.empty((n_paths, n_steps + 1, d))
    out[:, 0] = x0
    x = x0
    for k in range(n_steps):
        t = grid[k]
        dt = grid[k + 1] - grid[k]
        x = x + drift.b(t, x) * dt + noise.dZ[:, k] @ sig(t).T
        if not np.all(np.isfinite(x)) or np.any(np.abs(x) > OVERFLOW_GUARD):
            raise DivergenceError(step=k + 1, t=float(grid[k + 1]))
        out[:, k + 1] = x
    return PathBundle(grid=grid, states=out)


def sup_moment(bundle: PathBundle, theta: float) -> float:
    """Monte Carlo estimate of E sup_{t <= T} |X_t|^theta."""
    if theta < 1:
        raise PreconditionError(f"theta must be >= 1, got {theta}")
    if bundle.n_paths == 0:
        return 0.0
    norms = np.linalg.norm(bundle.states, axis=2)
    return float(np.mean(norms.max(axis=1) ** theta))


def sup_moment_mc(drift: DriftField, sigma, triplet, x0, grid, rng,
                  n_paths: int, theta: float, chunk: int = 20_000) -> float:
    """Chunked E sup |X|^theta for path counts too large to store.

    Draws noise per chunk from child streams of ``rng``, runs the Euler
    scheme, and accumulates the per-path running max without keeping
    full paths.
    """
    from .levy_noise import sample_increments
    from .streams import substream

    grid = np.asarray(grid, dtype=float)
    d = triplet.dim
    sig = as_sigma(sigma, d)
    sups = []
    done = 0
    while done < n_paths:
        m = min(chunk, n_paths - done)
        noise = sample_increments(triplet, grid, substream(rng, "chunk"), n_paths=m)
        x = np.broadcast_to(np.atleast_1d(np.asarray(x0, float)), (m, d)).copy()
        best = np.linalg.norm(x, axis=1)
        for k in range(grid.size - 1):
            t = grid[k]
            dt = grid[k + 1] - grid[k]
            x = x + drift.b(t, x) * dt + noise.dZ[:, k] @ sig(t).T
            if not np.all(np.isfinite(x)) or np.any(np.abs(x) > OVERFLOW_GUARD):
                raise DivergenceError(step=k + 1, t=float(grid[k + 1]))
            np.maximum(best, np.linalg.norm(x, axis=1), out=best)
        sups.append(best ** theta)
        done += m
    return float(np.mean(np.concatenate(sups)))
