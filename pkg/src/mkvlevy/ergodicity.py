"""Contraction-rate and invariant-measure experiments.

Two particle systems run under the identical noise realization
(synchronous coupling); their empirical theta-distance then
upper-bounds the true transport distance, which is the conservative
direction when checking the contraction bound
W(t) <= W(0) * exp[(1/2) int_0^t (kappa1 + kappa2)].
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import PreconditionError
from .levy_noise import LevyTriplet, sample_increments
from .metrics import bootstrap_se, distance
from .mkv import LawFlow, MkvDrift, ParticleEnsemble, propagate_particles
from .streams import as_rng, substream

#: distances below this multiple of their SE are left out of the rate fit
RATE_FIT_SNR = 5.0


@dataclass
class ContractionReport:
    times: np.ndarray
    distances: np.ndarray
    ses: np.ndarray
    bounds: np.ndarray
    fitted_rate: float      # decay rate, -slope of log W vs t
    theory_rate: float      # kappa = -(kappa1 + kappa2)/2 at t = 0
    bound_violations: int

    def to_json(self) -> dict:
        return {
            "times": self.times.tolist(),
            "distances": self.distances.tolist(),
            "ses": self.ses.tolist(),
            "bounds": self.bounds.tolist(),
            "fitted_rate": self.fitted_rate,
            "theory_rate": self.theory_rate,
            "bound_violations": self.bound_violations,
        }

    def to_csv(self, path) -> None:
        np.savetxt(path, np.column_stack([self.times, self.distances, self.ses,
                                          self.bounds]),
                   delimiter=",", header="t,distance,se,bound", comments="")


def _checkpoint_indices(n: int, k: int) -> np.ndarray:
    return np.unique(np.linspace(0, n - 1, min(k, n)).astype(int))


def contraction_experiment(drift: MkvDrift, sigma, noise_triplet: LevyTriplet,
                           mu0: ParticleEnsemble, nu0: ParticleEnsemble,
                           grid, rng, n_checkpoints: int = 21,
                           bootstrap: int = 200) -> ContractionReport:
    """Coupled two-system run with the theoretical bound at checkpoints.

    A checkpoint violates the bound when the measured distance exceeds
    bound * (1 + 3 * relative SE).
    """
    if mu0.n != nu0.n:
        raise PreconditionError("ensembles must have equal size for synchronous coupling")
    grid = np.asarray(grid, dtype=float)
    rng = as_rng(rng)
    noise = sample_increments(noise_triplet, grid, substream(rng, "noise"), n_paths=mu0.n)
    idx = _checkpoint_indices(grid.size, n_checkpoints)
    times = grid[idx]
    flow_mu = propagate_particles(drift, sigma, noise_triplet, mu0, grid,
                                  noise=noise, store=times)
    flow_nu = propagate_particles(drift, sigma, noise_triplet, nu0, grid,
                                  noise=noise, store=times)
    th = drift.theta
    rate_int = cumulative_trapezoid(
        np.array([drift.kappa1(t) + drift.kappa2(t) for t in grid]), grid, initial=0.0)
    d_rng = substream(rng, "dist")
    w0 = distance(mu0.points, nu0.points, p=th, rng=d_rng).value
    dists, ses, bounds = [], [], []
    for t, k in zip(times, idx):
        x = flow_mu.ensemble_at_index(int(k)).points
        y = flow_nu.ensemble_at_index(int(k)).points
        dists.append(distance(x, y, p=th, rng=d_rng).value)
        ses.append(bootstrap_se(x, y, p=th, B=bootstrap, rng=substream(d_rng, "boot")))
        bounds.append(w0 * np.exp(0.5 * rate_int[k]))
    dists = np.array(dists)
    ses = np.array(ses)
    bounds = np.array(bounds)
    rel = ses / np.maximum(dists, 1e-300)
    violations = int(np.sum(dists > bounds * (1.0 + 3.0 * rel)))
    ok = dists > RATE_FIT_SNR * ses
    if ok.sum() >= 3:
        slope = np.polyfit(times[ok], np.log(dists[ok]), 1)[0]
        fitted = float(-slope)
    else:
        fitted = float("nan")
    theory = -(drift.kappa1(0.0) + drift.kappa2(0.0)) / 2.0
    return ContractionReport(times=times, distances=dists, ses=ses, bounds=bounds,
                             fitted_rate=fitted, theory_rate=theory,
                             bound_violations=violations)


@dataclass
class InvariantLog:
    pairs: List[Tuple[float, float]] = field(default_factory=list)
    distances: List[float] = field(default_factory=list)
    ses: List[float] = field(default_factory=list)
    converged: bool = False


def invariant_measure(drift: MkvDrift, sigma, noise_triplet: LevyTriplet,
                      mu0: ParticleEnsemble, burn_in: float, rng,
                      dt: float = 2e-3, bootstrap: int = 200):
    """Evolve to the invariant law; returns (ensemble, InvariantLog).

    Requires time-homogeneous coefficients with decay rate
    kappa = -(kappa1 + kappa2)/2 > 0.  The log records the empirical
    distance between the laws at t and 2t along a dyadic schedule;
    convergence is declared when two consecutive gaps fall below
    max(1e-3, 3 SE).
    """
    probes = np.linspace(0.0, burn_in, 7)
    k1 = {drift.kappa1(float(t)) for t in probes}
    k2 = {drift.kappa2(float(t)) for t in probes}
    if len(k1) > 1 or len(k2) > 1:
        raise PreconditionError("invariant-measure run needs time-homogeneous coefficients")
    kappa = -(drift.kappa1(0.0) + drift.kappa2(0.0)) / 2.0
    if kappa <= 0:
        raise PreconditionError(f"declared decay rate must be positive, got {kappa}")
    rng = as_rng(rng)
    n_steps = int(np.ceil(burn_in / dt))
    grid = np.linspace(0.0, burn_in, n_steps + 1)
    dyadic = burn_in / 2.0 ** np.arange(4, -1, -1)
    flow = propagate_particles(drift, sigma, noise_triplet, mu0, grid,
                               rng=substream(rng, "burn"), store=dyadic)
    log = InvariantLog()
    d_rng = substream(rng, "dist")
    below = 0
    for t_lo, t_hi in zip(dyadic[:-1], dyadic[1:]):
        k_lo = int(np.searchsorted(grid, t_lo + 1e-12) - 1)
        k_hi = int(np.searchsorted(grid, t_hi + 1e-12) - 1)
        x = flow.ensemble_at_index(k_lo).points
        y = flow.ensemble_at_index(k_hi).points
        val = distance(x, y, p=drift.theta, rng=d_rng).value
        se = bootstrap_se(x, y, p=drift.theta, B=bootstrap, rng=substream(d_rng, "boot"))
        log.pairs.append((float(t_lo), float(t_hi)))
        log.distances.append(val)
        log.ses.append(se)
        below = below + 1 if val < max(1e-3, 3.0 * se) else 0
        if below >= 2:
            log.converged = True
    terminal = flow.ensemble_at_index(grid.size - 1)
    return terminal, log
