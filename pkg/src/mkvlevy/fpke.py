"""1-d nonlinear Fokker-Planck solver with a fractional diffusion term.

The generator is -((-Delta)/2)^alpha + b . grad with alpha in (1/2, 1),
discretized on a truncated domain [-L, L] with zero exterior: the
singular integral uses a quadratic fit on the first cell, piecewise
linear cells beyond, and the exact power-law tail for the exterior.
Drift enters through a conservative upwind flux.  The law argument of
the drift is served from grid quadrature through the same reduction
interface the particle solvers use.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.special import gamma as gamma_fn

from .errors import DomainError, PreconditionError
from .levy_noise import LevyTriplet
from .metrics import wasserstein_1d
from .mkv import MkvDrift, ParticleEnsemble, propagate_particles
from .streams import as_rng, substream
from .subordinator import BernsteinSpec

#: per-unit-time budget for |total mass - 1|
MASS_TOL_RATE = 1e-5
#: absolute cap on |total mass - 1| over a configured run
MASS_TOL = 1e-3


def _frac_constant(alpha: float) -> float:
    """1-d constant of (-Delta)^alpha as a singular integral."""
    return (4.0 ** alpha * gamma_fn(0.5 + alpha)
            / (math.sqrt(math.pi) * abs(gamma_fn(-alpha))))


def _frac_weights(alpha: float, h: float, n_off: int):
    """Quadrature weights for int_0^inf g(z) z^(-1-2a) dz.

    g vanishes quadratically at 0; the first cell uses the quadratic
    fit, later cells a linear one, both integrated exactly against the
    kernel.  Returns (weights for g_j at offsets j*h, exterior tail of
    the kernel beyond the last offset).
    """
    j = np.arange(1, n_off + 1)
    z = j * h
    P = lambda v: v ** (-2 * alpha) / (-2 * alpha)      # int z^(-1-2a)
    Q = lambda v: v ** (1 - 2 * alpha) / (1 - 2 * alpha)  # int z^(-2a)
    zl, zr = z[:-1], z[1:]
    dP, dQ = P(zr) - P(zl), Q(zr) - Q(zl)
    w = np.zeros(n_off)
    w[0] = h ** (-2 * alpha) / (2.0 - 2.0 * alpha)
    w[:-1] += (zr * dP - dQ) / h
    w[1:] += (dQ - zl * dP) / h
    tail = z[-1] ** (-2 * alpha) / (2 * alpha)
    return w, tail


@dataclass
class Grid1D:
    """Uniform grid on [-L, L] with the stable index and time step.

    The explicit scheme requires dt below both the fractional-diffusion
    cap and the drift CFL; construction checks the first, stepping the
    second.
    """

    L: float
    n: int
    dt: float
    alpha: float

    def __post_init__(self):
        if not 0.5 < self.alpha < 1.0:
            raise DomainError(f"stable index must lie in (1/2, 1), got {self.alpha}")
        if self.L <= 0 or self.n < 16:
            raise DomainError("need L > 0 and n >= 16")
        x = np.linspace(-self.L, self.L, self.n)
        object.__setattr__(self, "x", x)
        w, tail = _frac_weights(self.alpha, self.dx, self.n)
        scale = 2.0 ** (-self.alpha) * _frac_constant(self.alpha)
        kernel = np.concatenate([w[::-1], [0.0], w]) * scale
        object.__setattr__(self, "_kernel", kernel)
        object.__setattr__(self, "_diag", scale * (2.0 * w.sum() + 2.0 * tail))
        object.__setattr__(self, "_tail", tail * scale)
        m = int(2 ** np.ceil(np.log2(self.n + kernel.size)))
        object.__setattr__(self, "_fft_len", m)
        object.__setattr__(self, "_kernel_fft", np.fft.rfft(kernel, m))
        if self.dt > self.stability_cap():
            raise DomainError(
                f"dt={self.dt:.3g} above the diffusion cap {self.stability_cap():.3g}")

    @property
    def dx(self) -> float:
        return 2.0 * self.L / (self.n - 1)

    def stability_cap(self) -> float:
        return 0.5 / self._diag

    @classmethod
    def make(cls, L: float = 20.0, n: int = 1601, alpha: float = 0.75,
             dt: Optional[float] = None,
             max_drift: Optional[float] = None) -> "Grid1D":
        """Grid with dt under the diffusion cap and, when the largest
        drift magnitude on the domain is supplied, the drift CFL."""
        probe = cls(L=L, n=n, dt=1e-12, alpha=alpha)
        if dt is None:
            dt = 0.8 * probe.stability_cap()
            if max_drift is not None and max_drift > 0:
                dt = min(dt, 0.5 * probe.dx / max_drift)
        return cls(L=L, n=n, dt=dt, alpha=alpha)


@dataclass
class DensityField:
    """Nonnegative grid density with its time stamp."""

    values: np.ndarray
    time: float = 0.0

    def mass(self, grid: Grid1D) -> float:
        return float(np.sum(self.values) * grid.dx)


class GridMeasure:
    """Reduction view of a grid density, drift-compatible with ensembles."""

    def __init__(self, grid: Grid1D, values: np.ndarray):
        self._x = grid.x
        self._w = values * grid.dx
        total = self._w.sum()
        if total <= 0:
            raise DomainError("density carries no mass")
        self._w = self._w / total
        self._mean = None

    @property
    def mean_vec(self) -> np.ndarray:
        if self._mean is None:
            self._mean = np.array([float(np.sum(self._x * self._w))])
        return self._mean

    def radial_moment(self, p: float) -> float:
        return float(np.sum(np.abs(self._x) ** p * self._w) ** (1.0 / p))


def frac_laplacian_apply(grid: Grid1D, u: np.ndarray) -> np.ndarray:
    """-((-Delta)/2)^alpha u with zero exterior."""
    u = np.asarray(u, dtype=float)
    if u.shape != (grid.n,):
        raise PreconditionError(f"u must live on the full grid ({grid.n} points)")
    full = np.fft.irfft(np.fft.rfft(u, grid._fft_len) * grid._kernel_fft,
                        grid._fft_len)
    start = (grid._kernel.size - 1) // 2
    conv = full[start:start + grid.n]
    return conv - grid._diag * u


def gaussian_density(grid: Grid1D, mean: float, std: float) -> DensityField:
    u = np.exp(-0.5 * ((grid.x - mean) / std) ** 2) / (std * math.sqrt(2 * math.pi))
    u /= np.sum(u) * grid.dx
    return DensityField(values=u, time=0.0)


def stable_density(grid_x: np.ndarray, t: float, alpha: float,
                   xi_max: float = 200.0, n_xi: int = 200_001) -> np.ndarray:
    """Density of the process with symbol exp(-t (xi^2/2)^alpha), by
    cosine-transform quadrature; the oracle for the free evolution."""
    xi = np.linspace(0.0, xi_max, n_xi)
    cf = np.exp(-t * (xi ** 2 / 2.0) ** alpha)
    dxi = xi[1] - xi[0]
    out = np.empty_like(grid_x)
    for i, xx in enumerate(grid_x):
        out[i] = np.trapezoid(np.cos(xi * xx) * cf, dx=dxi) / math.pi
    return np.clip(out, 0.0, None)


@dataclass
class StepDiagnostics:
    clipped_mass: float = 0.0
    boundary_leak: float = 0.0
    conservation_defect: float = 0.0


def fpke_step(grid: Grid1D, u: DensityField, drift: MkvDrift, t: float,
              diagnostics: Optional[StepDiagnostics] = None) -> DensityField:
    """One explicit step: fractional diffusion plus upwind drift flux.

    Mass leaves only through the truncated exterior (jump kill plus
    advective outflow); that physical leak is reported separately from
    the scheme's own conservation defect, which stays at clipping and
    roundoff size.  Negative values are clipped with the clipped mass
    restored by proportional rescaling.
    """
    v = u.values
    meas = GridMeasure(grid, v)
    lap = frac_laplacian_apply(grid, v)
    x_edge = 0.5 * (grid.x[:-1] + grid.x[1:])
    b_edge = np.asarray(drift.b(t, x_edge[:, None], meas), dtype=float).reshape(-1)
    cap = 0.5 * grid.dx / max(float(np.max(np.abs(b_edge))), 1e-300)
    if grid.dt > cap:
        raise PreconditionError(
            f"dt={grid.dt:.3g} violates the drift CFL cap {cap:.3g}")
    flux = np.where(b_edge > 0, b_edge * v[:-1], b_edge * v[1:])
    div = np.zeros_like(v)
    div[1:-1] = (flux[1:] - flux[:-1]) / grid.dx
    div[0] = flux[0] / grid.dx
    div[-1] = -flux[-1] / grid.dx
    # exterior kill and boundary outflow: all the mass the operator removes
    leak = grid.dt * float(-np.sum(lap) + np.sum(div)) * grid.dx
    new = v + grid.dt * (lap - div)
    clipped = -float(np.sum(new[new < 0.0]) * grid.dx)
    if clipped > 0:
        target = float(np.sum(new) * grid.dx)
        new = np.clip(new, 0.0, None)
        pos = float(np.sum(new) * grid.dx)
        if pos > 0:
            new *= target / pos
    if diagnostics is not None:
        diagnostics.clipped_mass = clipped
        diagnostics.boundary_leak = leak
        mass_change = float(np.sum(new) - np.sum(v)) * grid.dx
        diagnostics.conservation_defect = abs(mass_change + leak)
    return DensityField(values=new, time=u.time + grid.dt)


def solve_fpke(grid: Grid1D, u0: DensityField, drift: MkvDrift, T: float,
               checkpoints: Optional[List[float]] = None):
    """March to time T; returns (final field, {checkpoint: field}, diagnostics).

    The returned StepDiagnostics carries the worst per-step clip, the
    accumulated boundary leak, and the accumulated scheme conservation
    defect over the run.
    """
    n_steps = int(round(T / grid.dt))
    if abs(n_steps * grid.dt - T) > 1e-9 * max(T, 1.0):
        n_steps = int(math.ceil(T / grid.dt))
    u = DensityField(values=u0.values.copy(), time=u0.time)
    stored = {}
    want = sorted(checkpoints or [])
    diag = StepDiagnostics()
    total = StepDiagnostics()
    for k in range(n_steps):
        u = fpke_step(grid, u, drift, u.time, diag)
        total.clipped_mass = max(total.clipped_mass, diag.clipped_mass)
        total.boundary_leak += diag.boundary_leak
        total.conservation_defect += diag.conservation_defect
        while want and u.time >= want[0] - 1e-9:
            stored[want.pop(0)] = DensityField(values=u.values.copy(), time=u.time)
    return u, stored, total


def density_w1(grid: Grid1D, u: np.ndarray, v: np.ndarray) -> float:
    """W_1 between grid densities: L1 distance of their CDFs (exact in 1-d).

    Masses are normalized first so the transport problem is balanced.
    """
    cu = np.cumsum(u) * grid.dx
    cv = np.cumsum(v) * grid.dx
    if cu[-1] <= 0 or cv[-1] <= 0:
        raise DomainError("empty density")
    return float(np.sum(np.abs(cu / cu[-1] - cv / cv[-1])) * grid.dx)


def sample_density(grid: Grid1D, u: np.ndarray, n: int) -> np.ndarray:
    """Stratified inverse-CDF sample ((k - 1/2)/n quantiles) of a grid density."""
    cdf = np.cumsum(u) * grid.dx
    cdf = cdf / cdf[-1]
    q = (np.arange(n) + 0.5) / n
    return np.interp(q, cdf, grid.x)


@dataclass
class CorrespondenceReport:
    n_values: List[int]
    distances: List[float]
    grid_pair: List[float]
    final: float
    passed: bool
    mass_drift: float

    def to_json(self) -> dict:
        return {"n_values": self.n_values, "distances": self.distances,
                "grid_refinement_distances": self.grid_pair, "final": self.final,
                "pass": self.passed, "mass_drift": self.mass_drift}


#: fraction of extreme quantile pairs dropped from each side of the
#: cross-method distance; the free-evolution L1 check covers the tails
COMPARE_TRIM = 0.01


def _trimmed_w1(a: np.ndarray, b: np.ndarray, trim: float = COMPARE_TRIM) -> float:
    """Quantile-coupling W_1 over the central quantiles.

    Polynomial tails make the plain estimate jump by O(L/N) when a
    single far particle lands; dropping the matched extreme pairs keeps
    the bulk-transport comparison stable.
    """
    diff = np.abs(np.sort(a) - np.sort(b))
    k = int(trim * diff.size)
    if k:
        diff = diff[k:-k]
    return float(diff.mean())


def correspondence_check(grid: Grid1D, drift: MkvDrift, mu0: DensityField,
                         T: float, n_particles: List[int], rng,
                         dt_particles: float = 2e-3,
                         tol_final: float = 5e-2,
                         replicates: int = 5) -> CorrespondenceReport:
    """Grid marginal vs particle marginal of the same equation.

    The particle system runs with 2*alpha-stable noise (Brownian motion
    on an independent stable clock) from the same initial law.  Each
    reported distance is the median trimmed quantile-coupling W_1 over
    seeded replicate particle runs; the median keeps a single
    heavy-tailed mean-field fluctuation from masking the N-trend.
    """
    rng = as_rng(rng)
    uT, _, _ = solve_fpke(grid, mu0, drift, T)
    mass_drift = abs(uT.mass(grid) - 1.0)
    spec = BernsteinSpec.stable(grid.alpha)
    triplet = LevyTriplet.subordinate_bm(spec, d=1)
    tgrid = np.linspace(0.0, T, int(math.ceil(T / dt_particles)) + 1)

    def particle_terminal(n, rep):
        start = ParticleEnsemble(sample_density(grid, mu0.values, n)[:, None])
        flow = propagate_particles(drift, 1.0, triplet, start, tgrid,
                                   rng=substream(rng, "particles", n, rep),
                                   store=[T])
        return flow.states[-1][:, 0]

    dists = []
    for n in n_particles:
        ref = sample_density(grid, uT.values, n)
        vals = [_trimmed_w1(ref, particle_terminal(n, r)) for r in range(replicates)]
        dists.append(float(np.median(vals)))
    # one grid refinement at the largest particle count; halving dx tightens
    # both caps by at most 2**(2 alpha), so scale the coarse dt down by that
    fine = Grid1D(L=grid.L, n=2 * grid.n - 1, alpha=grid.alpha,
                  dt=grid.dt / 2.0 ** (2 * grid.alpha))
    u0f = DensityField(np.interp(fine.x, grid.x, mu0.values), mu0.time)
    u0f.values /= u0f.mass(fine)
    uTf, _, _ = solve_fpke(fine, u0f, drift, T)
    n_big = n_particles[-1]
    ref_f = sample_density(fine, uTf.values, n_big)
    vals = [_trimmed_w1(ref_f, particle_terminal(n_big, r)) for r in range(replicates)]
    grid_pair = [dists[-1], float(np.median(vals))]
    monotone = all(b < a for a, b in zip(dists[:-1], dists[1:]))
    passed = monotone and dists[-1] <= tol_final
    return CorrespondenceReport(n_values=list(n_particles), distances=dists,
                                grid_pair=grid_pair, final=dists[-1],
                                passed=passed, mass_drift=mass_drift)


@dataclass
class StabilityReport:
    times: List[float]
    distances: List[float]
    bounds: List[float]
    passed: bool

    def to_json(self) -> dict:
        return {"times": self.times, "distances": self.distances,
                "bounds": self.bounds, "pass": self.passed}


def fpke_stability_check(grid: Grid1D, drift: MkvDrift, mu0: DensityField,
                         nu0: DensityField, T: float,
                         n_checkpoints: int = 8,
                         slack: float = 0.1) -> StabilityReport:
    """W_1(mu_t, nu_t) against the contraction bound with numerical slack."""
    times = list(np.linspace(T / n_checkpoints, T, n_checkpoints))
    _, snap_mu, _ = solve_fpke(grid, mu0, drift, T, checkpoints=list(times))
    _, snap_nu, _ = solve_fpke(grid, nu0, drift, T, checkpoints=list(times))
    w0 = density_w1(grid, mu0.values, nu0.values)
    out_d, out_b = [], []
    for t in times:
        d = density_w1(grid, snap_mu[t].values, snap_nu[t].values)
        rate = 0.5 * (drift.kappa1(t) + drift.kappa2(t)) * t  # constant-coefficient runs
        out_d.append(d)
        out_b.append(w0 * math.exp(rate) * (1.0 + slack))
    passed = all(d <= b for d, b in zip(out_d, out_b))
    return StabilityReport(times=list(times), distances=out_d, bounds=out_b,
                           passed=passed)
