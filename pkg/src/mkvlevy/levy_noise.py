"""Driving-noise increments for Levy processes.

A process is described by its triplet (drift l, Gaussian covariance Q,
jump part).  Two jump descriptions are supported: Brownian motion run
with an independent subordinator clock, and a jump density simulated as
compound Poisson above a cutoff with the compensated small jumps
replaced by a matching Gaussian.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy.integrate import quad

from .errors import DomainError, PreconditionError
from .streams import as_rng, substream
from .subordinator import BernsteinSpec, extend_grid, sample_increment_matrix


@dataclass(frozen=True)
class SubordinateGaussian:
    """Jump part W_{S_t}: Brownian motion on an independent subordinator clock."""

    bernstein: BernsteinSpec


@dataclass(frozen=True)
class CompoundWithDensity:
    """Jump density on R \\ {0}; d = 1 only.

    Jumps with |x| >= cutoff come from ``large_jump_sampler(rng, n)``;
    smaller ones are replaced by a Gaussian with the matching second
    moment (computed from the density by quadrature).
    """

    levy_density: Callable[[float], float]
    large_jump_sampler: Callable[[np.random.Generator, int], np.ndarray]
    small_jump_cutoff: float

    def __post_init__(self):
        if not 0 < self.small_jump_cutoff <= 1:
            raise DomainError("cutoff must lie in (0, 1]")


@dataclass(frozen=True)
class LevyTriplet:
    """(l, Q, jump part) characterization of the driving process."""

    l: np.ndarray
    Q: np.ndarray
    jump_spec: object = None

    def __post_init__(self):
        l = np.atleast_1d(np.asarray(self.l, dtype=float))
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        if Q.shape != (l.size, l.size):
            raise PreconditionError(f"Q must be {l.size}x{l.size}, got {Q.shape}")
        if not np.allclose(Q, Q.T, atol=1e-12):
            raise PreconditionError("Q must be symmetric")
        ev, vec = np.linalg.eigh(Q)
        if ev.min() < -1e-12:
            raise PreconditionError(f"Q has negative eigenvalue {ev.min():.3e}")
        ev = np.clip(ev, 0.0, None)
        object.__setattr__(self, "l", l)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "_sqrtQ", vec @ np.diag(np.sqrt(ev)) @ vec.T)

    @property
    def dim(self) -> int:
        return self.l.size

    @property
    def sqrtQ(self) -> np.ndarray:
        return self._sqrtQ

    @classmethod
    def brownian(cls, d: int = 1) -> "LevyTriplet":
        return cls(l=np.zeros(d), Q=np.eye(d))

    @classmethod
    def subordinate_bm(cls, spec: BernsteinSpec, d: int = 1) -> "LevyTriplet":
        return cls(l=np.zeros(d), Q=np.zeros((d, d)), jump_spec=SubordinateGaussian(spec))

    def to_json(self) -> str:
        payload = {"l": self.l.tolist(), "Q": self.Q.tolist()}
        if isinstance(self.jump_spec, SubordinateGaussian):
            payload["jump_spec"] = {"type": "subordinate_gaussian",
                                    "bernstein": json.loads(self.jump_spec.bernstein.to_json())}
        elif self.jump_spec is not None:
            raise DomainError("jump densities with callables do not serialize")
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "LevyTriplet":
        d = json.loads(text) if isinstance(text, str) else dict(text)
        jump = None
        if "jump_spec" in d and d["jump_spec"] is not None:
            js = d["jump_spec"]
            if js.get("type") != "subordinate_gaussian":
                raise DomainError(f"unknown jump spec {js.get('type')!r}")
            jump = SubordinateGaussian(BernsteinSpec.from_json(json.dumps(js["bernstein"])))
        return cls(l=np.array(d["l"]), Q=np.array(d["Q"]), jump_spec=jump)


@dataclass
class NoiseIncrements:
    """Realized increments dZ over a grid, one row block per path.

    ``dZ`` has shape (n_paths, n_steps, d).  ``large_jumps`` lists
    (time, jump vector) for realized jumps with |x| >= 1; it is filled
    only for the compound-Poisson jump description, where individual
    jumps exist in the simulation.  ``sub_increments`` carries the
    subordinator clock increments when the noise is subordinate
    Brownian, for conditional reuse.
    """

    grid: np.ndarray
    dZ: np.ndarray
    large_jumps: List[Tuple[float, np.ndarray]] = field(default_factory=list)
    sub_increments: Optional[np.ndarray] = None

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.dZ = np.asarray(self.dZ, dtype=float)
        if self.dZ.ndim == 2:
            self.dZ = self.dZ[None, :, :]
        if self.dZ.shape[1] != self.grid.size - 1:
            raise PreconditionError("need one increment per grid interval")

    @property
    def n_paths(self) -> int:
        return self.dZ.shape[0]

    @property
    def dim(self) -> int:
        return self.dZ.shape[2]

    def to_csv(self, path, path_index: int = 0) -> None:
        d = self.dim
        header = "t," + ",".join(f"dZ_{i+1}" for i in range(d))
        np.savetxt(path, np.column_stack([self.grid[:-1], self.dZ[path_index]]),
                   delimiter=",", header=header, comments="")


def _check_uniform(grid: np.ndarray) -> float:
    dts = np.diff(grid)
    if np.any(dts <= 0):
        raise PreconditionError("grid must be strictly increasing")
    if not np.allclose(dts, dts[0], rtol=1e-8, atol=0):
        raise PreconditionError("grid must be uniform")
    return float(dts[0])


def _compound_moments(cw: CompoundWithDensity) -> Tuple[float, float, float]:
    """(rate above cutoff, small-jump variance, mid-range mean) for d=1.

    mid-range mean is int_{cutoff<=|x|<1} x nu(dx): simulated jumps in
    that band are compensated in the triplet convention, so their mean
    is subtracted back as drift.
    """
    c = cw.small_jump_cutoff
    dens = cw.levy_density
    rate = (quad(dens, c, 1.0, limit=200)[0] + quad(dens, 1.0, np.inf, limit=200)[0]
            + quad(dens, -1.0, -c, limit=200)[0] + quad(dens, -np.inf, -1.0, limit=200)[0])
    var = (quad(lambda x: x * x * dens(x), 0, c, limit=200)[0]
           + quad(lambda x: x * x * dens(x), -c, 0, limit=200)[0])
    mid = (quad(lambda x: x * dens(x), c, 1.0, limit=200)[0]
           + quad(lambda x: x * dens(x), -1.0, -c, limit=200)[0])
    return rate, var, mid


def subordinate_bm_increments(spec: BernsteinSpec, grid, rng,
                              n_paths: int = 1, d: int = 1) -> NoiseIncrements:
    """Increments of W on an independent subordinator clock.

    Each interval contributes a centered Gaussian with variance equal to
    the clock increment.  The clock and the Brownian draws use separate
    child streams, and the clock increments ride along on the result so
    conditional-given-clock simulation can reuse them.
    """
    rng = as_rng(rng)
    grid = np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) <= 0):
        raise PreconditionError("grid must be strictly increasing")
    rng_s = substream(rng, "clock")
    rng_w = substream(rng, "gauss")
    dS = sample_increment_matrix(spec, np.diff(grid), rng_s, n_paths)
    g = rng_w.standard_normal((n_paths, grid.size - 1, d))
    dZ = np.sqrt(dS)[:, :, None] * g
    return NoiseIncrements(grid=grid, dZ=dZ, sub_increments=dS)


def sample_increments(triplet: LevyTriplet, grid, rng,
                      n_paths: int = 1) -> NoiseIncrements:
    """Increments of the triplet's process over a uniform grid.

    Gaussian and drift parts are exact.  For the compound-Poisson jump
    description, jumps above the cutoff arrive at Poisson times within
    each interval and the compensated small jumps enter as a Gaussian
    with the matching variance (d = 1 only).
    """
    rng = as_rng(rng)
    grid = np.asarray(grid, dtype=float)
    if isinstance(triplet.jump_spec, SubordinateGaussian):
        base = subordinate_bm_increments(triplet.jump_spec.bernstein, grid, rng,
                                         n_paths=n_paths, d=triplet.dim)
        dt = np.diff(grid)
        extra = triplet.l[None, None, :] * dt[None, :, None]
        if np.any(triplet.Q):
            g = substream(rng, "gauss-q").standard_normal((n_paths, grid.size - 1, triplet.dim))
            extra = extra + np.sqrt(dt)[None, :, None] * (g @ triplet.sqrtQ.T)
        base.dZ = base.dZ + extra
        return base
    dt = _check_uniform(grid)
    n_steps = grid.size - 1
    d = triplet.dim
    dZ = np.broadcast_to(triplet.l * dt, (n_paths, n_steps, d)).copy()
    if np.any(triplet.Q):
        g = substream(rng, "gauss").standard_normal((n_paths, n_steps, d))
        dZ += math.sqrt(dt) * (g @ triplet.sqrtQ.T)
    large: List[Tuple[float, np.ndarray]] = []
    cw = triplet.jump_spec
    if cw is not None:
        if not isinstance(cw, CompoundWithDensity):
            raise DomainError(f"unsupported jump spec {type(cw).__name__}")
        if d != 1:
            raise DomainError("the jump-density description is implemented for d = 1")
        rate, var, mid = _compound_moments(cw)
        rj = substream(rng, "jumps")
        counts = rj.poisson(rate * dt, size=(n_paths, n_steps))
        total = int(counts.sum())
        if total:
            jumps = np.asarray(cw.large_jump_sampler(rj, total), dtype=float).reshape(-1)
            owner = np.repeat(np.arange(counts.size), counts.reshape(-1))
            sums = np.bincount(owner, weights=jumps, minlength=counts.size)
            dZ[:, :, 0] += sums.reshape(n_paths, n_steps)
            big = np.abs(jumps) >= 1.0
            if big.any():
                step_of = owner[big] % n_steps
                times = grid[step_of] + rj.random(int(big.sum())) * dt
                for t, x in zip(times, jumps[big]):
                    large.append((float(t), np.array([x])))
        # compensate the simulated band [cutoff, 1) and add the small-jump Gaussian
        dZ[:, :, 0] -= mid * dt
        if var > 0:
            dZ[:, :, 0] += math.sqrt(var * dt) * substream(rng, "smalljump").standard_normal(
                (n_paths, n_steps))
        large.sort(key=lambda tx: tx[0])
    return NoiseIncrements(grid=grid, dZ=dZ, large_jumps=large)


def characteristic_exponent(triplet: LevyTriplet, u: np.ndarray) -> complex:
    """psi(u) with E exp(i<u, Z_t>) = exp(-t psi(u)); analytic cases only."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    val = -1j * np.dot(triplet.l, u) + 0.5 * u @ triplet.Q @ u
    js = triplet.jump_spec
    if isinstance(js, SubordinateGaussian):
        from .subordinator import laplace_exponent
        val = val + laplace_exponent(js.bernstein, float(u @ u) / 2.0)
    elif js is not None:
        raise DomainError("no analytic symbol for jump-density noise")
    return complex(val)
