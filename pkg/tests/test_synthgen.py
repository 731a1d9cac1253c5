"""Synthetic generator: shapes, determinism, allocation and noise structure."""

import numpy as np
import pytest

from hsmoe.synthgen import SynthConfig, empirical_allocation_frequencies, generate


class TestGenerate:
    def test_default_shapes(self):
        obs, truth, z = generate(SynthConfig(seed=1))
        assert len(obs) == 500
        assert obs[0].x.shape == (5,)
        assert truth.betas.shape == (10, 5)
        assert z.shape == (500,) and z.min() >= 1 and z.max() <= 10

    def test_determinism(self):
        a_obs, a_truth, a_z = generate(SynthConfig(seed=9))
        b_obs, b_truth, b_z = generate(SynthConfig(seed=9))
        assert np.array_equal(a_z, b_z)
        assert np.array_equal(a_truth.betas, b_truth.betas)
        assert all(
            np.array_equal(oa.x, ob.x) and oa.y == ob.y
            for oa, ob in zip(a_obs, b_obs)
        )
        c_z = generate(SynthConfig(seed=10))[2]
        assert not np.array_equal(a_z, c_z)

    def test_active_experts_dominate(self):
        obs, truth, z = generate(SynthConfig(seed=7))
        freqs = empirical_allocation_frequencies(z, 10)
        assert freqs[:3].sum() > 0.8
        assert np.all(truth.gate_bias[3:] == -3.0)
        assert np.all(truth.gate_coeffs[3:] == 0.0)

    def test_symmetric_gate_is_uniform(self):
        cfg = SynthConfig(
            n_experts=5, n_active=5, n_obs=40_000, dim=2,
            inactive_bias=0.0, temperature=1.0, active_gate_scale=0.0, seed=3,
        )
        _, truth, z = generate(cfg)
        assert np.all(truth.gate_coeffs == 0.0)
        freqs = empirical_allocation_frequencies(z, 5)
        se = np.sqrt(0.2 * 0.8 / z.size)
        assert np.all(np.abs(freqs - 0.2) <= 4 * se)

    def test_residual_variance_matches_noise(self):
        cfg = SynthConfig(n_obs=10_000, seed=5)
        obs, truth, z = generate(cfg)
        X = np.stack([o.x for o in obs])
        y = np.array([o.y for o in obs])
        resid = y - np.einsum("nd,nd->n", X, truth.betas[z - 1])
        for k in range(1, 4):
            r = resid[z == k]
            var = r.var(ddof=1)
            se = truth.sigma2s[k - 1] * np.sqrt(2.0 / (r.size - 1))
            assert abs(var - truth.sigma2s[k - 1]) <= 3 * se

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SynthConfig(n_active=0)
        with pytest.raises(ValueError):
            SynthConfig(n_active=11)
        with pytest.raises(ValueError):
            SynthConfig(temperature=0.0)


class TestEmpiricalFrequencies:
    def test_worked_example(self):
        np.testing.assert_allclose(
            empirical_allocation_frequencies([1, 1, 2], 3), [2 / 3, 1 / 3, 0.0]
        )

    def test_sums_to_one(self):
        rng = np.random.default_rng(0)
        z = rng.integers(1, 7, size=1000)
        f = empirical_allocation_frequencies(z, 6)
        assert f.sum() == pytest.approx(1.0, abs=1e-12)

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            empirical_allocation_frequencies([], 3)
        with pytest.raises(ValueError):
            empirical_allocation_frequencies([0, 1], 3)
        with pytest.raises(ValueError):
            empirical_allocation_frequencies([1, 4], 3)
