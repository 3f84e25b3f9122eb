import math

import numpy as np
import pytest

from mkvlevy.drifts import (f_cauchy_plus_one, f_gauss, f_gauss_plus_one,
                            meanfield_ou, ou_drift, zero_drift)
from mkvlevy.errors import DomainError, PreconditionError
from mkvlevy.harnack import (CouplingBatch, HarnackConfig, K, K1, K1_on_grid,
                             bracket_bound_violations, coupled_solve,
                             coupling_batch, entropy_cost_check,
                             girsanov_mean_check, inverse_cost_factor,
                             log_harnack_check, optimal_pairs,
                             power_harnack_check, reference_flows, stieltjes_k1,
                             xi)
from mkvlevy.mkv import ParticleEnsemble
from mkvlevy.streams import stream
from mkvlevy.subordinator import BernsteinSpec, SubordinatorPath, regularize, sample_path

STABLE = BernsteinSpec.stable(0.75)


def pure_drift_reg(T=1.0, eps=0.25, n=2001):
    grid = np.linspace(0.0, T + 1.0, n)
    path = SubordinatorPath(grid=grid, values=grid.copy())
    return regularize(path, eps)


class TestRateIntegrals:
    def test_K1_constant(self):
        assert K1(lambda t: 0.7, 2.0) == pytest.approx(math.exp(-1.4), abs=1e-10)

    def test_K1_at_zero(self):
        assert K1(lambda t: 5.0, 0.0) == 1.0

    def test_K1_linear_rate(self):
        assert K1(lambda t: t, 2.0) == pytest.approx(math.exp(-2.0), abs=1e-9)

    def test_K_zero_kappa2(self):
        for variant in ("printed", "derived"):
            assert K(lambda t: -1.0, lambda t: 0.0, 3.0, 2.0, variant) == 0.0

    def test_K_printed_closed_form(self):
        # kappa1=-1, kappa2=1, theta=2: integrand e^{s/2}/2
        for t in (0.5, 1.0, 2.0):
            got = K(lambda s: -1.0, lambda s: 1.0, t, 2.0, "printed")
            assert got == pytest.approx(math.exp(t / 2) - 1.0, abs=1e-7)

    def test_K_derived_closed_form(self):
        for t in (0.5, 1.0, 2.0):
            got = K(lambda s: 17.0, lambda s: 1.0, t, 1.0, "derived")
            assert got == pytest.approx(math.exp(t / 2) - 1.0, abs=1e-7)

    def test_bad_variant(self):
        with pytest.raises(DomainError):
            K(lambda t: 0.0, lambda t: 0.0, 1.0, 1.0, "imagined")


class TestXi:
    def test_zero_numerator(self):
        reg = pure_drift_reg()
        assert xi(0.5, [1.0], [1.0], 0.0, lambda t: 0.0, lambda t: 0.0, 1.0,
                  reg, 1.0) == 0.0

    def test_pure_drift_constant(self):
        eps, T = 0.25, 1.0
        reg = pure_drift_reg(T, eps)
        val = xi(0.3, [1.0], [0.0], 0.0, lambda t: 0.0, lambda t: 0.0, 1.0, reg, T)
        assert val == pytest.approx(1.0 / ((1 + eps) * T), rel=1e-9)

    def test_linear_in_gap(self):
        reg = pure_drift_reg()
        a = xi(0.2, [2.0], [0.0], 0.0, lambda t: -1.0, lambda t: 0.0, 1.0, reg, 1.0)
        b = xi(0.2, [4.0], [0.0], 0.0, lambda t: -1.0, lambda t: 0.0, 1.0, reg, 1.0)
        assert b == pytest.approx(2 * a, rel=1e-12)

    def test_needs_regularized_path(self):
        grid = np.linspace(0, 2, 21)
        raw = SubordinatorPath(grid=grid, values=grid.copy())
        with pytest.raises(PreconditionError):
            xi(0.5, [1.0], [0.0], 0.0, lambda t: 0.0, lambda t: 0.0, 1.0, raw, 1.0)


class TestConfigValidation:
    def test_sigma_lambda_consistency(self):
        with pytest.raises(PreconditionError):
            HarnackConfig(sigma=0.5, lam=1.0)  # |sigma^-1| = 2 > 1

    def test_singular_sigma(self):
        with pytest.raises(PreconditionError):
            HarnackConfig(sigma=0.0)

    def test_eps_range(self):
        with pytest.raises(DomainError):
            HarnackConfig(eps=1.5)


def ou_config(**kw):
    defaults = dict(T=1.0, theta=1.0, eps=0.1, bernstein=STABLE, n_steps=200)
    defaults.update(kw)
    return HarnackConfig(**defaults)


class TestCoupledSolve:
    def test_coupled_from_start(self):
        cfg = ou_config()
        drift = ou_drift(1.0)
        mu0 = ParticleEnsemble.point_mass(0.5, 64)
        nu0 = ParticleEnsemble.point_mass(0.5, 64)
        flows = reference_flows(cfg, drift, mu0, nu0, stream(0), n_particles=256)
        reg = regularize(sample_path(STABLE, cfg.tgrid, stream(1)), cfg.eps)
        run = coupled_solve(cfg, drift, mu0, nu0, flows, reg, stream(2))
        assert run.R == pytest.approx(1.0)
        assert run.tau == 0.0
        assert run.M_bracket == 0.0
        assert np.array_equal(run.X_path, run.Y_path)

    def test_constant_psi_oracle(self):
        """Zero drift + drift clock: Psi is constant until contact, so
        E R = 1 and E[R log R] = c^2 s / 2 exactly."""
        eps, T, n_steps = 0.25, 1.0, 400
        cfg = HarnackConfig(T=T, eps=eps, bernstein=BernsteinSpec.pure_drift(1.0),
                            n_steps=n_steps)
        drift = zero_drift()
        gap = 1.0
        mu0 = ParticleEnsemble.point_mass(0.0, 32)
        nu0 = ParticleEnsemble.point_mass(gap, 32)
        batch = coupling_batch(cfg, drift, mu0, nu0, stream(3), 30_000)
        c = gap / ((1 + eps) * T)
        s = (1 + eps) * T
        se_R = batch.R.std(ddof=1) / math.sqrt(batch.n_runs)
        assert abs(batch.R.mean() - 1.0) <= 3 * se_R
        rlr = batch.R * np.log(batch.R)
        se_E = rlr.std(ddof=1) / math.sqrt(batch.n_runs)
        assert abs(rlr.mean() - c * c * s / 2) <= 3 * se_E + 1e-2

    def test_run_csv(self, tmp_path):
        cfg = ou_config(n_steps=50)
        drift = ou_drift(1.0)
        mu0 = ParticleEnsemble.point_mass(0.0, 16)
        nu0 = ParticleEnsemble.point_mass(1.0, 16)
        flows = reference_flows(cfg, drift, mu0, nu0, stream(4), n_particles=64)
        reg = regularize(sample_path(STABLE, cfg.tgrid, stream(5)), cfg.eps)
        run = coupled_solve(cfg, drift, mu0, nu0, flows, reg, stream(6))
        f = tmp_path / "run.csv"
        run.to_csv(f)
        assert np.loadtxt(f, delimiter=",", skiprows=1).shape == (51, 3)


@pytest.fixture(scope="module")
def ou_batch():
    cfg = ou_config()
    drift = ou_drift(1.0)
    mu0 = ParticleEnsemble.point_mass(0.0, 128)
    nu0 = ParticleEnsemble.point_mass(1.0, 128)
    return cfg, coupling_batch(cfg, drift, mu0, nu0, stream(7), 20_000)


class TestGirsanov:

    def test_mean_one(self, ou_batch):
        _, batch = ou_batch
        stat = girsanov_mean_check(batch)
        assert stat.passed

    def test_negative_control_fails(self, ou_batch):
        _, batch = ou_batch
        stat = girsanov_mean_check(batch, bracket_scale=2.0)
        assert not stat.passed
        assert stat.mean < 1.0

    def test_bracket_bound(self, ou_batch):
        cfg, batch = ou_batch
        assert bracket_bound_violations(batch, cfg) == 0

    def test_coupling_success(self, ou_batch):
        _, batch = ou_batch
        assert batch.coupled.mean() >= 0.99
        assert np.all(batch.tau[batch.coupled] <= 1.0 + 1e-12)

    def test_success_nondecreasing_under_dt_halving(self):
        drift = ou_drift(1.0)
        mu0 = ParticleEnsemble.point_mass(0.0, 64)
        nu0 = ParticleEnsemble.point_mass(1.0, 64)
        fracs = []
        for n_steps in (100, 200):
            cfg = ou_config(n_steps=n_steps)
            batch = coupling_batch(cfg, drift, mu0, nu0, stream(8), 4000)
            fracs.append(batch.coupled.mean())
        assert fracs[1] >= fracs[0] - 1e-9

    def test_min_runs(self):
        with pytest.raises(PreconditionError):
            girsanov_mean_check(CouplingBatch(
                R=np.ones(10), M=np.zeros(10), M_bracket=np.zeros(10),
                tau=np.zeros(10), coupled=np.ones(10, bool), denom=np.ones(10),
                X0=np.zeros((10, 1)), Y0=np.zeros((10, 1)),
                X_T=np.zeros((10, 1)), Y_T=np.zeros((10, 1)),
                W_theta0=0.0, W_2_0=0.0, K_T=0.0))

    def test_meanfield_couples_with_frozen_derived_schedule(self):
        """With the true frozen laws (closed-form means here) and the
        terminal-value derived-K schedule, the pull budget closes the gap.
        Empirical reference flows stall at their own MC noise floor since
        this drift saturates the monotonicity bound with equality."""
        from mkvlevy.mkv import LawFlow
        cfg = ou_config(K_variant="derived", freeze_bracket=True)
        drift = meanfield_ou(1.0, 0.5)
        mu0 = ParticleEnsemble.point_mass(0.0, 64)
        nu0 = ParticleEnsemble.point_mass(1.0, 64)
        g = cfg.tgrid
        exact = lambda m0: LawFlow(
            grid=g, stored_idx=np.arange(g.size),
            states=(m0 * np.exp(-0.5 * g))[:, None, None])
        batch = coupling_batch(cfg, drift, mu0, nu0, stream(9), 4000,
                               flows=(exact(0.0), exact(1.0)))
        assert batch.coupled.mean() >= 0.99
        assert girsanov_mean_check(batch).passed

    def test_meanfield_empirical_flows_close_to_noise_floor(self):
        cfg = ou_config(K_variant="derived", freeze_bracket=True)
        drift = meanfield_ou(1.0, 0.5)
        mu0 = ParticleEnsemble.point_mass(0.0, 64)
        nu0 = ParticleEnsemble.point_mass(1.0, 64)
        batch = coupling_batch(cfg, drift, mu0, nu0, stream(90), 2000)
        gap = np.linalg.norm(batch.X_T - batch.Y_T, axis=1)
        # flows use 4000 particles: the residual sits at the flow MC scale
        assert np.median(gap) <= 5.0 / math.sqrt(4000)
        assert girsanov_mean_check(batch).passed


class TestCostFactor:
    def test_stable_clock_finite(self):
        cfg = ou_config()
        fac = inverse_cost_factor(cfg, ou_drift(1.0), stream(10))
        assert np.isfinite(fac.mean) and not fac.inconclusive
        assert fac.upper >= fac.mean
        assert fac.tail_index > 1.1

    def test_gamma_clock_short_horizon_inconclusive(self):
        # Gamma clock at T=1: S_T ~ Exp, E S_T^{-1} diverges
        cfg = HarnackConfig(T=1.0, bernstein=BernsteinSpec.gamma(1.0), n_steps=200)
        fac = inverse_cost_factor(cfg, zero_drift(), stream(11), n_paths=20_000)
        assert fac.inconclusive

    def test_gamma_clock_long_horizon_ok(self):
        cfg = HarnackConfig(T=3.0, bernstein=BernsteinSpec.gamma(1.0), n_steps=300)
        fac = inverse_cost_factor(cfg, zero_drift(), stream(12), n_paths=20_000)
        assert not fac.inconclusive


class TestInequalities:
    def setup_method(self):
        self.mu0 = ParticleEnsemble.point_mass(0.0, 128)
        self.nu0 = ParticleEnsemble.point_mass(1.0, 128)
        self.drift = meanfield_ou(1.0, 0.5)

    def test_log_constant_f(self):
        cfg = ou_config(f=lambda x: np.ones(np.asarray(x).shape[:-1]))
        rep = log_harnack_check(cfg, self.drift, self.mu0, self.nu0, 4000, stream(13))
        assert rep.passed and rep.lhs == 0.0 and rep.rhs >= 0.0

    def test_log_jensen_same_law(self):
        cfg = ou_config()
        rep = log_harnack_check(cfg, self.drift, self.mu0,
                                ParticleEnsemble(self.mu0.points.copy()),
                                8000, stream(14))
        assert rep.passed
        assert rep.details["W2"] == 0.0

    def test_log_reference_configuration(self):
        cfg = ou_config()
        rep = log_harnack_check(cfg, self.drift, self.mu0, self.nu0, 20_000,
                                stream(15))
        assert rep.passed and not rep.inconclusive

    def test_log_f_below_one_rejected(self):
        cfg = ou_config(f=f_gauss)
        with pytest.raises(PreconditionError):
            log_harnack_check(cfg, self.drift, self.mu0, self.nu0, 2000, stream(16))

    def test_power_constant_f(self):
        cfg = ou_config(f=lambda x: 2.0 * np.ones(np.asarray(x).shape[:-1]))
        rep = power_harnack_check(cfg, self.drift, self.mu0, self.nu0, 4000,
                                  stream(17))
        assert rep.passed
        assert rep.lhs == pytest.approx(4.0)

    def test_power_jensen_same_law(self):
        cfg = ou_config(f=f_gauss)
        rep = power_harnack_check(cfg, self.drift, self.mu0,
                                  ParticleEnsemble(self.mu0.points.copy()),
                                  8000, stream(18))
        assert rep.passed

    def test_power_reference_configuration(self):
        cfg = ou_config(f=f_gauss)
        rep = power_harnack_check(cfg, self.drift, self.mu0, self.nu0, 20_000,
                                  stream(19))
        assert rep.passed and not rep.inconclusive

    def test_entropy_identical_start(self):
        cfg = ou_config()
        mu = ParticleEnsemble.point_mass(0.3, 64)
        rep = entropy_cost_check(cfg, ou_drift(1.0), mu,
                                 ParticleEnsemble(mu.points.copy()), 2000,
                                 stream(20))
        assert rep.passed
        assert rep.lhs == pytest.approx(0.0, abs=1e-12)

    def test_entropy_reference_configuration(self):
        cfg = ou_config()
        rep = entropy_cost_check(cfg, ou_drift(1.0), self.mu0, self.nu0, 20_000,
                                 stream(21))
        assert rep.passed and not rep.inconclusive


class TestEpsilonConvergence:
    def test_stieltjes_integral_converges_to_raw(self):
        """int K1 d(ell^eps) approaches int K1 d(ell) as eps drops."""
        tgrid = np.linspace(0.0, 1.0, 1001)
        for seed in range(4):
            path = sample_path(STABLE, tgrid, stream(22, seed))
            raw = stieltjes_k1(lambda t: -2.0, path, 1.0)
            errs = [abs(stieltjes_k1(lambda t: -2.0, regularize(path, e), 1.0) - raw)
                    for e in (0.5, 0.1, 0.02)]
            assert errs[0] >= errs[1] >= errs[2], (seed, errs)


class TestOptimalPairs:
    def test_1d_sorted_pairs(self):
        mu = ParticleEnsemble(np.array([[2.0], [0.0], [1.0]]))
        nu = ParticleEnsemble(np.array([[5.0], [3.0], [4.0]]))
        xs, ys = optimal_pairs(mu, nu, stream(23))
        assert np.allclose(xs[:, 0], [0, 1, 2])
        assert np.allclose(ys[:, 0], [3, 4, 5])

    def test_2d_assignment(self):
        mu = ParticleEnsemble(np.array([[0.0, 0.0], [1.0, 0.0]]))
        nu = ParticleEnsemble(np.array([[1.1, 0.0], [0.1, 0.0]]))
        xs, ys = optimal_pairs(mu, nu, stream(24))
        gaps = np.linalg.norm(xs - ys, axis=1)
        assert np.allclose(np.sort(gaps), [0.1, 0.1])
