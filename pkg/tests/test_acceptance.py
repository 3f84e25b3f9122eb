"""Acceptance suite: one test per criterion, printed pass/fail lines.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines.
Sizes and tolerances are pinned here; the reference configurations are
the ones the module tests exercise at smoke scale.
"""
import json
import math

import numpy as np
import pytest

from mkvlevy.cli import main as cli_main
from mkvlevy.drifts import (double_well, f_gauss, f_gauss_plus_one, meanfield_ou,
                            ou_drift)
from mkvlevy.ergodicity import contraction_experiment, invariant_measure
from mkvlevy.fpke import (DensityField, Grid1D, correspondence_check,
                          fpke_stability_check, gaussian_density, solve_fpke,
                          stable_density)
from mkvlevy.harnack import (HarnackConfig, bracket_bound_violations,
                             coupling_batch, entropy_cost_check,
                             girsanov_mean_check, log_harnack_check,
                             power_harnack_check)
from mkvlevy.levy_noise import LevyTriplet
from mkvlevy.metrics import bootstrap_se, distance
from mkvlevy.mkv import ParticleEnsemble, picard_solve, propagate_particles
from mkvlevy.sde_core import DriftField, sup_moment_mc
from mkvlevy.streams import stream
from mkvlevy.subordinator import (BernsteinSpec, laplace_exponent,
                                  sample_increment_matrix)
from mkvlevy.drifts import zero_drift

SEED = 20260809


def report(criterion: str, passed: bool, detail: str = ""):
    line = f"[{'PASS' if passed else 'FAIL'}] {criterion}"
    if detail:
        line += f"  ({detail})"
    print(line)
    assert passed, line


# -------------------------------------------------------------------------
def test_criterion_1_subordinator_laws():
    """MC Laplace transform vs exponent for four catalog kinds."""
    specs = [BernsteinSpec.stable(0.7), BernsteinSpec.gamma(1.0),
             BernsteinSpec.relativistic_stable(0.6, 1.0),
             BernsteinSpec.pure_drift(1.0)]
    n = 100_000
    worst = 0.0
    for spec in specs:
        inc = sample_increment_matrix(spec, np.array([1.0]),
                                      stream(SEED, "c1", spec.kind), n)[:, 0]
        for r in (0.5, 1.0, 2.0):
            vals = np.exp(-r * inc)
            se = max(vals.std(ddof=1) / math.sqrt(n), 1e-15)
            z = abs(vals.mean() - math.exp(-laplace_exponent(spec, r))) / se
            worst = max(worst, z)
    report("criterion 1: subordinator Laplace law (4 kinds x 3 rates)",
           worst <= 4.0, f"worst |z| = {worst:.2f}")


# -------------------------------------------------------------------------
@pytest.mark.parametrize("noise_name", ["brownian", "stable075"])
def test_criterion_2_contraction(noise_name):
    """Bound violations, fitted rate, and the synchronous closed form."""
    noise = (LevyTriplet.brownian(1) if noise_name == "brownian"
             else LevyTriplet.subordinate_bm(BernsteinSpec.stable(0.75)))
    drift = meanfield_ou(1.0, 0.5)
    mu0 = ParticleEnsemble.point_mass(0.0, 5000)
    nu0 = ParticleEnsemble.point_mass(2.0, 5000)
    grid = np.linspace(0.0, 4.0, 2001)
    rep = contraction_experiment(drift, 1.0, noise, mu0, nu0, grid,
                                 stream(SEED, "c2", noise_name))
    ok = rep.bound_violations == 0
    ok &= abs(rep.fitted_rate - 0.5) <= 0.15 * 0.5
    track = True
    for t, d, se in zip(rep.times, rep.distances, rep.ses):
        target = 2.0 * math.exp(-0.5 * t)
        track &= abs(d - target) <= max(0.05 * target, 3 * se)
    ok &= track
    report(f"criterion 2: contraction ({noise_name})", bool(ok),
           f"violations={rep.bound_violations}, rate={rep.fitted_rate:.3f}, "
           f"closed-form track={track}")


# -------------------------------------------------------------------------
def test_criterion_3_invariant_measure():
    drift = ou_drift(1.0)
    bm = LevyTriplet.brownian(1)
    mu0 = ParticleEnsemble.point_mass(0.0, 10_000)
    ens, log = invariant_measure(drift, 1.0, bm, mu0, 10.0, stream(SEED, "c3"))
    var = float(ens.points.var())
    ok = 0.45 <= var <= 0.55
    grid = np.linspace(0.0, 1.0, 501)
    flow = propagate_particles(drift, 1.0, bm, ens, grid,
                               rng=stream(SEED, "c3-reevolve"), store=[1.0])
    moved = flow.states[-1]
    d = distance(ens.points, moved, 1.0).value
    se = bootstrap_se(ens.points[:, 0], moved[:, 0], 1.0, B=300,
                      rng=stream(SEED, "c3-boot"))
    ok &= d <= 3 * se
    report("criterion 3: invariant measure", bool(ok),
           f"variance={var:.4f}, fixed-point W1={d:.4f} vs 3SE={3 * se:.4f}")


# -------------------------------------------------------------------------
def test_criterion_4_picard_decay():
    drift = meanfield_ou(1.0, 0.5)
    mu0 = ParticleEnsemble.point_mass(2.0, 2000)
    grid = np.linspace(0.0, 1.0, 201)
    _, log = picard_solve(drift, 1.0, LevyTriplet.brownian(1), mu0, grid,
                          stream(SEED, "c4"), tol=1e-12, max_iter=6)
    d = np.array(log.distances)
    strict = d.size >= 5 and bool(np.all(np.diff(d[:5]) < 0))
    xs = np.arange(d.size)
    ys = np.log(d)
    coef = np.polyfit(xs, ys, 1)
    resid = ys - np.polyval(coef, xs)
    r2 = 1.0 - resid.var() / ys.var()
    ok = strict and coef[0] < 0 and r2 >= 0.8
    report("criterion 4: picard geometric decay", bool(ok),
           f"slope={coef[0]:.2f}, R2={r2:.3f}, decreasing={strict}")


# -------------------------------------------------------------------------
@pytest.fixture(scope="module")
def girsanov_batch():
    cfg = HarnackConfig(T=1.0, theta=1.0, eps=0.1,
                        bernstein=BernsteinSpec.stable(0.75), n_steps=200,
                        contact_threshold=1e-4)
    drift = ou_drift(1.0)
    mu0 = ParticleEnsemble.point_mass(0.0, 256)
    nu0 = ParticleEnsemble.point_mass(1.0, 256)
    batch = coupling_batch(cfg, drift, mu0, nu0, stream(SEED, "c5"), 100_000)
    return cfg, drift, mu0, nu0, batch


def test_criterion_5_girsanov_normalization(girsanov_batch):
    cfg, _, _, _, batch = girsanov_batch
    stat = girsanov_mean_check(batch)
    viol = bracket_bound_violations(batch, cfg, slack=1e-8)
    control = girsanov_mean_check(batch, bracket_scale=2.0)
    ok = stat.passed and viol == 0 and not control.passed
    report("criterion 5: girsanov normalization + bracket bound", bool(ok),
           f"mean R={stat.mean:.4f} (3SE={3 * stat.se:.4f}), "
           f"bracket violations={viol}, negative control mean={control.mean:.4f}")


def test_criterion_6_coupling_success(girsanov_batch):
    cfg, drift, mu0, nu0, batch = girsanov_batch
    frac = float(batch.coupled.mean())
    ok = frac >= 0.99
    cfg_half = HarnackConfig(T=1.0, theta=1.0, eps=0.1,
                             bernstein=BernsteinSpec.stable(0.75), n_steps=400,
                             contact_threshold=1e-4)
    half = coupling_batch(cfg_half, drift, mu0, nu0, stream(SEED, "c6"), 20_000)
    coarse = coupling_batch(cfg, drift, mu0, nu0, stream(SEED, "c6"), 20_000)
    ok &= half.coupled.mean() >= coarse.coupled.mean() - 1e-9
    report("criterion 6: coupling success", bool(ok),
           f"fraction={frac:.4f}, dt/2 fraction={half.coupled.mean():.4f}")


# -------------------------------------------------------------------------
HARNACK_DRIFTS = {"ou": ou_drift(1.0), "meanfield_ou": meanfield_ou(1.0, 0.5),
                  "double_well": double_well(0.5)}
HARNACK_CLOCKS = {"stable075": BernsteinSpec.stable(0.75),
                  "relstable06": BernsteinSpec.relativistic_stable(0.6, 1.0)}


def harnack_pairs(tag):
    if tag == "points":
        return (ParticleEnsemble.point_mass(0.0, 256),
                ParticleEnsemble.point_mass(0.75, 256))
    return (ParticleEnsemble.gaussian(0.0, 0.4, 256, stream(SEED, "pair-mu")),
            ParticleEnsemble.gaussian(0.75, 0.4, 256, stream(SEED, "pair-nu")))


@pytest.mark.parametrize("variant", ["printed", "derived"])
@pytest.mark.parametrize("pair", ["points", "gaussians"])
@pytest.mark.parametrize("clock", sorted(HARNACK_CLOCKS))
@pytest.mark.parametrize("dname", sorted(HARNACK_DRIFTS))
def test_criterion_7_harnack_grid(dname, clock, pair, variant):
    drift = HARNACK_DRIFTS[dname]
    mu0, nu0 = harnack_pairs(pair)
    cfg = HarnackConfig(T=1.0, theta=1.0, p=2.0, eps=0.1,
                        bernstein=HARNACK_CLOCKS[clock], n_steps=300,
                        K_variant=variant, f=f_gauss_plus_one)
    tag = f"{dname}/{clock}/{pair}/{variant}"
    rng = stream(SEED, "c7", tag)
    log_rep = log_harnack_check(cfg, drift, mu0, nu0, 20_000, rng)
    cfg_pow = HarnackConfig(T=1.0, theta=1.0, p=2.0, eps=0.1,
                            bernstein=HARNACK_CLOCKS[clock], n_steps=300,
                            K_variant=variant, f=f_gauss)
    pow_rep = power_harnack_check(cfg_pow, drift, mu0, nu0, 20_000, rng)
    ent_rep = entropy_cost_check(cfg, drift, mu0, nu0, 10_000, rng)
    ok = (log_rep.passed and pow_rep.passed and ent_rep.passed
          and not (log_rep.inconclusive or pow_rep.inconclusive
                   or ent_rep.inconclusive))
    report(f"criterion 7: harnack grid [{tag}]", bool(ok),
           f"log {log_rep.lhs:.4f}<={log_rep.rhs:.4f}, "
           f"power {pow_rep.lhs:.4f}<={pow_rep.rhs:.4f}, "
           f"entropy {ent_rep.lhs:.4f}<={ent_rep.rhs:.4f}")


# -------------------------------------------------------------------------
def test_criterion_8_fpke_correspondence():
    # free evolution vs Fourier-inversion oracle
    alpha = 0.75
    g = Grid1D.make(L=20.0, n=1601, alpha=alpha)
    t0, t1 = 0.2, 0.7
    u = DensityField(values=stable_density(g.x, t0, alpha), time=t0)
    u.values /= u.mass(g)
    out, _, _ = solve_fpke(g, u, zero_drift(), t1 - t0)
    ref = stable_density(g.x, t1, alpha)
    l1 = float(np.sum(np.abs(out.values - ref)) * g.dx)
    ok = l1 <= 2e-2
    # mean-field case: distances decrease over N and final below tolerance
    g2 = Grid1D.make(L=30.0, n=2401, alpha=0.85, max_drift=32.0)
    mu0 = gaussian_density(g2, 0.5, 0.5)
    rep = correspondence_check(g2, meanfield_ou(1.0, 0.5), mu0, 0.5,
                               [1000, 4000, 16000], stream(SEED, "c8"),
                               dt_particles=2e-3)
    ok &= rep.passed
    report("criterion 8: fpke correspondence", bool(ok),
           f"free-case L1={l1:.4f}, mean-field distances="
           f"{[round(d, 4) for d in rep.distances]}")


# -------------------------------------------------------------------------
def test_criterion_9_fpke_stability():
    g = Grid1D.make(L=20.0, n=1201, alpha=0.75, max_drift=22.0)
    pairs = [
        (ou_drift(1.0), gaussian_density(g, 0.0, 0.5), gaussian_density(g, 1.0, 0.5)),
        (meanfield_ou(1.0, 0.5), gaussian_density(g, 0.0, 0.5),
         gaussian_density(g, 0.8, 0.6)),
    ]
    ok = True
    details = []
    for drift, mu0, nu0 in pairs:
        rep = fpke_stability_check(g, drift, mu0, nu0, 0.4)
        ok &= rep.passed
        details.append(f"{drift.name}: max d/bound="
                       f"{max(d / b for d, b in zip(rep.distances, rep.bounds)):.3f}")
    report("criterion 9: fpke stability bound", bool(ok), "; ".join(details))


# -------------------------------------------------------------------------
def test_criterion_10_sup_moment_stability():
    drift = DriftField(b=lambda t, x: -x, kappa=lambda t: -2.0,
                       b0_bound=lambda t: 0.0)
    triplet = LevyTriplet.subordinate_bm(BernsteinSpec.stable(0.75))
    grid = np.linspace(0.0, 1.0, 1001)
    half = sup_moment_mc(drift, 1.0, triplet, [1.0], grid,
                         stream(SEED, "c10-half"), 50_000, 1.0)
    full = sup_moment_mc(drift, 1.0, triplet, [1.0], grid,
                         stream(SEED, "c10-full"), 100_000, 1.0)
    rel = abs(full - half) / full
    ok = np.isfinite(full) and rel < 0.05
    report("criterion 10: sup-moment refinement stability", bool(ok),
           f"half={half:.4f}, full={full:.4f}, rel change={rel:.3%}")


# -------------------------------------------------------------------------
def test_criterion_11_determinism(tmp_path):
    config = {
        "kind": "contraction",
        "seed": 7,
        "parameters": {
            "drift": {"name": "meanfield_ou", "params": {"beta": 1.0, "gamma": 0.5}},
            "noise": {"type": "subordinate",
                      "bernstein": {"kind": "stable", "alpha": 0.75}},
            "mu0": {"type": "point", "x": 0.0},
            "nu0": {"type": "point", "x": 2.0},
            "T": 1.0, "dt": 5e-3, "N": 500, "theta": 1.0,
        },
    }
    cfg_path = tmp_path / "c.json"
    cfg_path.write_text(json.dumps(config))
    outs = []
    for run_id, threads in (("a", 1), ("b", 4), ("c", 16)):
        out = tmp_path / run_id
        code = cli_main(["run", "--config", str(cfg_path), "--out", str(out),
                         "--threads", str(threads)])
        assert code == 0
        outs.append((out / "results.json").read_bytes()
                    + (out / "contraction.csv").read_bytes())
    ok = outs[0] == outs[1] == outs[2]
    report("criterion 11: bit-identical across runs and thread counts", bool(ok))
