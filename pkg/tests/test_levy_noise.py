import math

import numpy as np
import pytest

from mkvlevy.errors import DomainError, PreconditionError
from mkvlevy.levy_noise import (CompoundWithDensity, LevyTriplet, NoiseIncrements,
                                SubordinateGaussian, characteristic_exponent,
                                sample_increments, subordinate_bm_increments)
from mkvlevy.streams import stream
from mkvlevy.subordinator import BernsteinSpec


def grid01(n=101, T=1.0):
    return np.linspace(0.0, T, n)


class TestTripletBasics:
    def test_zero_triplet_gives_zero_increments(self):
        tr = LevyTriplet(l=[0.0], Q=[[0.0]])
        out = sample_increments(tr, grid01(), stream(0), n_paths=7)
        assert np.all(out.dZ == 0.0)

    def test_pure_drift_exact(self):
        v = np.array([1.5, -2.0])
        tr = LevyTriplet(l=v, Q=np.zeros((2, 2)))
        out = sample_increments(tr, grid01(11), stream(0), n_paths=3)
        assert np.allclose(out.dZ, v * 0.1)

    def test_brownian_covariance(self):
        tr = LevyTriplet.brownian(2)
        out = sample_increments(tr, grid01(21), stream(1), n_paths=100_000)
        z1 = out.dZ.sum(axis=1)
        cov = np.cov(z1.T)
        se = 4.0 / math.sqrt(z1.shape[0])  # generous bound on the moment SEs
        assert abs(cov[0, 0] - 1.0) <= 4 * se
        assert abs(cov[1, 1] - 1.0) <= 4 * se
        assert abs(cov[0, 1]) <= 4 * se

    def test_asymmetric_q_rejected(self):
        with pytest.raises(PreconditionError):
            LevyTriplet(l=[0.0, 0.0], Q=[[1.0, 0.5], [0.0, 1.0]])

    def test_json_round_trip(self):
        tr = LevyTriplet.subordinate_bm(BernsteinSpec.stable(0.7), d=2)
        again = LevyTriplet.from_json(tr.to_json())
        assert isinstance(again.jump_spec, SubordinateGaussian)
        assert again.jump_spec.bernstein == tr.jump_spec.bernstein


class TestSubordinateBM:
    def test_drift_clock_is_brownian(self):
        spec = BernsteinSpec.pure_drift(1.0)
        out = subordinate_bm_increments(spec, grid01(101), stream(2), n_paths=50_000)
        assert np.allclose(out.sub_increments, 0.01)
        z1 = out.dZ.sum(axis=1)[:, 0]
        se = z1.std(ddof=1) ** 2 * math.sqrt(2.0 / (z1.size - 1))
        assert abs(z1.var(ddof=1) - 1.0) <= 4 * max(se, 1e-3)

    def test_characteristic_function_stable_clock(self):
        spec = BernsteinSpec.stable(0.75)
        out = subordinate_bm_increments(spec, grid01(21), stream(3), n_paths=100_000)
        z1 = out.dZ.sum(axis=1)[:, 0]
        for u in (0.7, 1.0, 2.0):
            re, im = np.cos(u * z1), np.sin(u * z1)
            est = re.mean() + 1j * im.mean()
            se = math.sqrt(re.var(ddof=1) + im.var(ddof=1)) / math.sqrt(z1.size)
            target = math.exp(-((u * u) / 2.0) ** 0.75)
            assert abs(est - target) <= 4 * se, u

    def test_pure_gaussian_symbol(self):
        tr = LevyTriplet.brownian(1)
        out = sample_increments(tr, grid01(21), stream(4), n_paths=100_000)
        z1 = out.dZ.sum(axis=1)[:, 0]
        for u in (0.5, 1.0, 2.0):
            re, im = np.cos(u * z1), np.sin(u * z1)
            est = re.mean() + 1j * im.mean()
            se = math.sqrt(re.var(ddof=1) + im.var(ddof=1)) / math.sqrt(z1.size)
            psi = characteristic_exponent(tr, [u])
            assert abs(est - math.exp(-psi.real)) <= 4 * se

    def test_increment_independence(self):
        spec = BernsteinSpec.stable(0.8)
        out = subordinate_bm_increments(spec, grid01(6), stream(5), n_paths=100_000)
        x = out.dZ[:, :, 0]
        # successive-increment correlation; heavy tails, so clip for the probe
        xc = np.clip(x, -50, 50)
        for k in range(4):
            a, b = xc[:, k], xc[:, k + 1]
            r = np.corrcoef(a, b)[0, 1]
            assert abs(r) <= 4.0 / math.sqrt(x.shape[0])

    def test_theta_moment_stable_under_doubling(self):
        spec = BernsteinSpec.stable(0.75)
        out = subordinate_bm_increments(spec, grid01(11), stream(6), n_paths=100_000)
        z1 = np.abs(out.dZ.sum(axis=1)[:, 0])
        half = z1[:50_000].mean()
        full = z1.mean()
        assert np.isfinite(full)
        assert abs(full - half) / full < 0.05

    def test_same_seed_identical(self):
        spec = BernsteinSpec.gamma(1.0)
        a = subordinate_bm_increments(spec, grid01(31), stream(7), n_paths=4)
        b = subordinate_bm_increments(spec, grid01(31), stream(7), n_paths=4)
        assert np.array_equal(a.dZ, b.dZ)


class TestCompoundWithDensity:
    def _spec(self):
        # symmetric uniform jumps on [1, 2], total rate 3
        dens = lambda x: 0.75 if 1.0 <= abs(x) <= 2.0 else 0.0

        def sampler(rng, n):
            return rng.uniform(1.0, 2.0, n) * rng.choice([-1.0, 1.0], n)

        return CompoundWithDensity(levy_density=dens, large_jump_sampler=sampler,
                                   small_jump_cutoff=0.5)

    def test_moments(self):
        tr = LevyTriplet(l=[0.0], Q=[[0.0]], jump_spec=self._spec())
        out = sample_increments(tr, grid01(101), stream(8), n_paths=50_000)
        z1 = out.dZ.sum(axis=1)[:, 0]
        # Var Z_1 = int x^2 nu = 2 * 0.75 * (8-1)/3 = 3.5
        se_m = z1.std(ddof=1) / math.sqrt(z1.size)
        assert abs(z1.mean()) <= 4 * se_m
        var = z1.var(ddof=1)
        se_v = var * math.sqrt(2.0 / (z1.size - 1)) * 3  # kurtosis slack
        assert abs(var - 3.5) <= 4 * se_v

    def test_large_jumps_logged(self):
        tr = LevyTriplet(l=[0.0], Q=[[0.0]], jump_spec=self._spec())
        out = sample_increments(tr, grid01(101), stream(9), n_paths=1)
        count = len(out.large_jumps)
        assert 0 < count < 20  # Poisson(3) tail
        for t, x in out.large_jumps:
            assert 0 <= t <= 1.0 and abs(x[0]) >= 1.0

    def test_needs_uniform_grid(self):
        tr = LevyTriplet(l=[0.0], Q=[[0.0]], jump_spec=self._spec())
        bad = np.array([0.0, 0.1, 0.3, 0.35])
        with pytest.raises(PreconditionError):
            sample_increments(tr, bad, stream(10))

    def test_d2_rejected(self):
        tr = LevyTriplet(l=[0.0, 0.0], Q=np.zeros((2, 2)), jump_spec=self._spec())
        with pytest.raises(DomainError):
            sample_increments(tr, grid01(11), stream(11))


class TestNoiseIncrementsShape:
    def test_shape_contract(self):
        with pytest.raises(PreconditionError):
            NoiseIncrements(grid=np.linspace(0, 1, 5), dZ=np.zeros((2, 7, 1)))

    def test_csv(self, tmp_path):
        out = sample_increments(LevyTriplet.brownian(1), grid01(6), stream(12))
        f = tmp_path / "noise.csv"
        out.to_csv(f)
        data = np.loadtxt(f, delimiter=",", skiprows=1)
        assert data.shape == (5, 2)
