"""Interacting-particle and Picard solvers for mean-field SDEs.

The law argument of the drift is served through a small reduction
interface (mean vector, radial moments, raw points) so the same drift
definition runs against particle ensembles and, in the grid solver,
against density reductions.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Union

import numpy as np

from .errors import DivergenceError, DomainError, PreconditionError
from .levy_noise import LevyTriplet, NoiseIncrements, sample_increments
from .metrics import ASSIGNMENT_BUDGET, bootstrap_se, distance
from .sde_core import OVERFLOW_GUARD, as_sigma
from .streams import as_rng, substream


def _as_fn(v) -> Callable[[float], float]:
    if callable(v):
        return v
    return lambda t, _v=float(v): _v


class ParticleEnsemble:
    """N uniformly weighted points in R^d standing in for a law."""

    def __init__(self, points):
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise PreconditionError("points must be a nonempty (N, d) array")
        if not np.all(np.isfinite(pts)):
            raise PreconditionError("ensemble contains non-finite coordinates")
        self.points = pts
        self._mean = None

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def mean_vec(self) -> np.ndarray:
        if self._mean is None:
            self._mean = self.points.mean(axis=0)
        return self._mean

    def radial_moment(self, p: float) -> float:
        """(mean |x|^p)^(1/p)."""
        r = np.linalg.norm(self.points, axis=1)
        return float(np.mean(r ** p) ** (1.0 / p))

    # --- constructors -----------------------------------------------------
    @classmethod
    def point_mass(cls, x, n: int) -> "ParticleEnsemble":
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return cls(np.tile(x, (n, 1)))

    @classmethod
    def gaussian(cls, mean, std, n: int, rng) -> "ParticleEnsemble":
        rng = as_rng(rng)
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        return cls(mean + std * rng.standard_normal((n, mean.size)))

    @classmethod
    def uniform_box(cls, lo, hi, n: int, rng) -> "ParticleEnsemble":
        rng = as_rng(rng)
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        return cls(rng.uniform(lo, hi, size=(n, lo.size)))

    @classmethod
    def from_file(cls, path) -> "ParticleEnsemble":
        return cls(np.loadtxt(path, delimiter=",", ndmin=2))

    def to_csv(self, path) -> None:
        np.savetxt(path, self.points, delimiter=",")


@dataclass
class MkvDrift:
    """Mean-field drift b(t, x, mu) with its contract metadata.

    ``b`` is vectorized in x and receives the law as a reduction object
    (``mean_vec``, ``radial_moment``, ``points`` when available).
    kappa1/kappa2/Theta may be constants or functions of t; theta is
    the moment index the contract is stated in.
    """

    b: Callable
    kappa1: Union[float, Callable] = 0.0
    kappa2: Union[float, Callable] = 0.0
    Theta: Union[float, Callable] = 0.0
    theta: float = 1.0
    name: str = ""

    def __post_init__(self):
        self.kappa1 = _as_fn(self.kappa1)
        self.kappa2 = _as_fn(self.kappa2)
        self.Theta = _as_fn(self.Theta)
        if self.theta < 1:
            raise DomainError(f"theta must be >= 1, got {self.theta}")


def check_H3(drift: MkvDrift, ensembles: Sequence[ParticleEnsemble], rng,
             box: float = 3.0, n_trials: int = 200, t_max: float = 1.0,
             tol: float = 1e-6) -> bool:
    """Spot-check the monotonicity bound on random (t, x, y, mu, nu)."""
    rng = as_rng(rng)
    th = drift.theta
    for _ in range(n_trials):
        t = float(rng.uniform(0.0, t_max))
        mu = ensembles[rng.integers(len(ensembles))]
        nu = ensembles[rng.integers(len(ensembles))]
        d = mu.dim
        x = rng.uniform(-box, box, size=d)
        y = rng.uniform(-box, box, size=d)
        lhs = 2.0 * np.dot(drift.b(t, x, mu) - drift.b(t, y, nu), x - y)
        w = distance(mu.points, nu.points, p=th, rng=rng).value
        rhs = (drift.kappa1(t) * np.sum((x - y) ** 2)
               + drift.kappa2(t) * w * np.linalg.norm(x - y))
        if lhs > rhs + tol:
            return False
    return True


def check_H4(drift: MkvDrift, ensembles: Sequence[ParticleEnsemble], rng,
             n_trials: int = 50, t_max: float = 1.0, tol: float = 1e-6) -> bool:
    """Spot-check the growth bound |b(t,0,mu)| <= Theta(t)(1 + moment)."""
    rng = as_rng(rng)
    for _ in range(n_trials):
        t = float(rng.uniform(0.0, t_max))
        mu = ensembles[rng.integers(len(ensembles))]
        z = np.zeros(mu.dim)
        lhs = float(np.linalg.norm(drift.b(t, z, mu)))
        rhs = drift.Theta(t) * (1.0 + mu.radial_moment(drift.theta))
        if lhs > rhs + tol:
            return False
    return True


@dataclass
class LawFlow:
    """Ensembles along a grid; dense when every grid time is stored."""

    grid: np.ndarray
    stored_idx: np.ndarray
    states: np.ndarray  # (n_stored, N, d)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.stored_idx = np.asarray(self.stored_idx, dtype=int)
        self.states = np.asarray(self.states, dtype=float)
        if self.states.shape[0] != self.stored_idx.size:
            raise PreconditionError("one state block per stored index")

    @property
    def is_dense(self) -> bool:
        return self.stored_idx.size == self.grid.size

    @property
    def times(self) -> np.ndarray:
        return self.grid[self.stored_idx]

    def ensemble_at_index(self, k: int) -> ParticleEnsemble:
        pos = np.searchsorted(self.stored_idx, k, side="right") - 1
        if pos < 0:
            raise DomainError("index precedes the first stored time")
        return ParticleEnsemble(self.states[pos])

    def to_json_summary(self, theta: float = 1.0) -> dict:
        out = []
        for pos, k in enumerate(self.stored_idx):
            ens = ParticleEnsemble(self.states[pos])
            out.append({"t": float(self.grid[k]),
                        "mean": ens.mean_vec.tolist(),
                        "radial_moment": ens.radial_moment(theta)})
        return {"checkpoints": out, "n_particles": int(self.states.shape[1])}


def law_at(flow: LawFlow, t: float) -> ParticleEnsemble:
    """Ensemble at time t (nearest stored time to the left)."""
    if t < 0:
        raise DomainError(f"time must be nonnegative, got {t}")
    k = int(np.clip(np.searchsorted(flow.grid, t + 1e-12) - 1, 0, flow.grid.size - 1))
    return flow.ensemble_at_index(k)


def _storage_indices(grid: np.ndarray, store) -> np.ndarray:
    n = grid.size
    if isinstance(store, str):
        if store == "all":
            return np.arange(n)
        if store == "auto":
            if n <= 256:
                return np.arange(n)
            step = int(np.ceil((n - 1) / 200))
            idx = np.arange(0, n, step)
            return idx if idx[-1] == n - 1 else np.append(idx, n - 1)
        raise PreconditionError(f"unknown storage mode {store!r}")
    times = np.asarray(store, dtype=float)
    idx = np.unique(np.clip(np.searchsorted(grid, times + 1e-12) - 1, 0, n - 1))
    return idx


def propagate_particles(drift: MkvDrift, sigma, noise_triplet: LevyTriplet,
                        mu0: ParticleEnsemble, grid, rng=None, *,
                        noise: Optional[NoiseIncrements] = None,
                        store="all") -> LawFlow:
    """Evolve N interacting particles; the drift sees the running ensemble.

    Either ``rng`` (increments drawn internally, i.i.d. across
    particles) or a precomputed ``noise`` with one path per particle
    must be supplied.  Returns the flow of empirical laws at the stored
    times.
    """
    grid = np.asarray(grid, dtype=float)
    if noise is None:
        if rng is None:
            raise PreconditionError("pass rng or precomputed noise")
        noise = sample_increments(noise_triplet, grid, as_rng(rng), n_paths=mu0.n)
    if noise.dZ.shape[0] != mu0.n:
        raise PreconditionError("need one noise path per particle")
    if noise.grid.size != grid.size or not np.allclose(noise.grid, grid):
        raise PreconditionError("noise grid must match the requested grid")
    d = mu0.dim
    sig = as_sigma(sigma, d)
    idx = _storage_indices(grid, store)
    keep = np.zeros(grid.size, dtype=bool)
    keep[idx] = True
    states = np.empty((idx.size, mu0.n, d))
    x = mu0.points.copy()
    pos = 0
    if keep[0]:
        states[pos] = x
        pos += 1
    for k in range(grid.size - 1):
        t = grid[k]
        dt = grid[k + 1] - t
        ens = ParticleEnsemble(x)
        x = x + drift.b(t, x, ens) * dt + noise.dZ[:, k] @ sig(t).T
        if not np.all(np.isfinite(x)) or np.any(np.abs(x) > OVERFLOW_GUARD):
            raise DivergenceError(step=k + 1, t=float(grid[k + 1]))
        if keep[k + 1]:
            states[pos] = x
            pos += 1
    return LawFlow(grid=grid, stored_idx=idx, states=states)


def picard_iterate(drift: MkvDrift, sigma, frozen_flow: LawFlow,
                   mu0: ParticleEnsemble, grid,
                   noise: NoiseIncrements) -> LawFlow:
    """One Picard step: solve with the law frozen at ``frozen_flow``.

    The caller controls the noise, so successive iterates run under
    common random numbers and their pathwise distance is measurable.
    """
    if not frozen_flow.is_dense:
        raise PreconditionError("picard needs a dense frozen flow")
    grid = np.asarray(grid, dtype=float)
    if frozen_flow.grid.size != grid.size or not np.allclose(frozen_flow.grid, grid):
        raise PreconditionError("frozen flow grid must match")
    d = mu0.dim
    sig = as_sigma(sigma, d)
    states = np.empty((grid.size, mu0.n, d))
    x = mu0.points.copy()
    states[0] = x
    for k in range(grid.size - 1):
        t = grid[k]
        dt = grid[k + 1] - t
        ens = ParticleEnsemble(frozen_flow.states[k])
        x = x + drift.b(t, x, ens) * dt + noise.dZ[:, k] @ sig(t).T
        if not np.all(np.isfinite(x)) or np.any(np.abs(x) > OVERFLOW_GUARD):
            raise DivergenceError(step=k + 1, t=float(grid[k + 1]))
        states[k + 1] = x
    return LawFlow(grid=grid, stored_idx=np.arange(grid.size), states=states)


def flow_distance(a: LawFlow, b: LawFlow, theta: float, rng,
                  n_checkpoints: int = 20) -> float:
    """sup over thinned checkpoints of the empirical theta-distance."""
    common = np.intersect1d(a.stored_idx, b.stored_idx)
    if common.size == 0:
        raise PreconditionError("flows share no stored times")
    if common.size > n_checkpoints:
        sel = np.unique(np.linspace(0, common.size - 1, n_checkpoints).astype(int))
        common = common[sel]
    rng = as_rng(rng)
    best = 0.0
    for k in common:
        x = a.ensemble_at_index(int(k)).points
        y = b.ensemble_at_index(int(k)).points
        best = max(best, distance(x, y, p=theta, rng=rng).value)
    return best


@dataclass
class PicardLog:
    distances: List[float] = field(default_factory=list)
    converged: bool = False
    n_iterations: int = 0


def picard_solve(drift: MkvDrift, sigma, noise_triplet: LevyTriplet,
                 mu0: ParticleEnsemble, grid, rng, tol: float = 1e-3,
                 max_iter: int = 12, n_checkpoints: int = 20,
                 noise: Optional[NoiseIncrements] = None):
    """Iterate the frozen-law map from the constant flow at mu0.

    Stops when the sup checkpoint distance between successive iterates
    drops below tol.  Returns (flow, PicardLog); a log with
    ``converged False`` reports non-convergence along with the decay
    sequence.  All iterates share one noise realization (common random
    numbers), drawn here unless supplied.
    """
    if tol <= 0:
        raise PreconditionError(f"tol must be positive, got {tol}")
    grid = np.asarray(grid, dtype=float)
    rng = as_rng(rng)
    if noise is None:
        noise = sample_increments(noise_triplet, grid, substream(rng, "picard-noise"),
                                  n_paths=mu0.n)
    dist_rng = substream(rng, "picard-dist")
    frozen = LawFlow(grid=grid, stored_idx=np.arange(grid.size),
                     states=np.broadcast_to(mu0.points, (grid.size,) + mu0.points.shape).copy())
    log = PicardLog()
    flow = frozen
    for it in range(1, max_iter + 1):
        new = picard_iterate(drift, sigma, flow, mu0, grid, noise)
        gap = flow_distance(new, flow, drift.theta, dist_rng, n_checkpoints)
        log.distances.append(gap)
        log.n_iterations = it
        flow = new
        if gap < tol:
            log.converged = True
            break
    return flow, log
