import math

import numpy as np
import pytest
from scipy import integrate

from offgpi.diffnet import Mlp
from offgpi.policy import (DeterministicPolicy, GaussianPolicy, NoiseSpec, act_deterministic, gaussian_entropy,
                           log1m_tanh_sq, rollout_noise, sample_squashed, squashed_backward, squashed_forward,
                           target_smoothing)

from conftest import assert_grad_close, central_diff


def zero_net(sizes, act="identity"):
    return Mlp(sizes, act, params=np.zeros(Mlp(sizes, act, rng=np.random.default_rng(0)).n_params))


class TestDeterministic:
    def test_zero_weights(self):
        p = DeterministicPolicy(3, 2, net=zero_net((3, 4, 2), "tanh"))
        np.testing.assert_array_equal(act_deterministic(p, np.ones(3)), [0.0, 0.0])

    def test_bounded(self, rng):
        p = DeterministicPolicy(3, 2, hidden=(16, 16), rng=rng)
        p.net.params *= 50
        a = act_deterministic(p, 10 * rng.standard_normal((200, 3)))
        assert np.all(np.abs(a) <= 1.0)

    def test_hand_single_layer(self):
        net = Mlp((2, 1), "tanh", params=[0.5, -0.25, 0.1])
        p = DeterministicPolicy(2, 1, net=net)
        assert act_deterministic(p, [1.0, 2.0])[0] == pytest.approx(math.tanh(0.5 - 0.5 + 0.1), abs=1e-15)


class TestNoise:
    def test_zero_sigma(self, rng):
        spec = NoiseSpec(rollout_sigma=0.0, target_sigma=0.0)
        a = np.array([0.3, -0.2])
        np.testing.assert_array_equal(rollout_noise(a, spec, rng), a)
        np.testing.assert_array_equal(target_smoothing(a, spec, rng), a)

    def test_rollout_bound_clamp(self):
        assert rollout_noise(np.array([0.95]), NoiseSpec(), noise=np.array([0.2]))[0] == 1.0

    def test_rollout_has_no_inner_clip(self):
        assert rollout_noise(np.array([0.0]), NoiseSpec(), noise=np.array([0.7]))[0] == pytest.approx(0.7)

    def test_rollout_std(self):
        r = np.random.default_rng(7)
        out = rollout_noise(np.zeros(100_000), NoiseSpec(), r)
        assert out.std() == pytest.approx(0.1, rel=0.02)

    def test_target_inner_clip(self):
        assert target_smoothing(np.array([0.0]), NoiseSpec(), noise=np.array([0.6]))[0] == 0.5
        assert target_smoothing(np.array([0.0]), NoiseSpec(), noise=np.array([-0.6]))[0] == -0.5

    def test_target_outer_clip(self):
        assert target_smoothing(np.array([0.8]), NoiseSpec(), noise=np.array([0.5]))[0] == 1.0

    def test_asymmetric_clip_rejected(self):
        with pytest.raises(ValueError):
            NoiseSpec(target_clip=(-0.5, 0.4))


class TestSquashedGaussian:
    def test_standard_normal_at_zero(self):
        p = GaussianPolicy(2, 1, net=zero_net((2, 3, 2)))
        a, lp = sample_squashed(p, np.zeros(2), np.zeros(1))
        assert a[0] == 0.0
        assert lp == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-15)

    def test_stable_log1m_tanh_sq(self):
        u = np.array([-30.0, -2.0, 0.0, 0.5, 40.0])
        with np.errstate(divide="ignore"):
            direct = np.log(1 - np.tanh(u[1:4]) ** 2)
        np.testing.assert_allclose(log1m_tanh_sq(u[1:4]), direct, rtol=1e-12)
        assert np.isfinite(log1m_tanh_sq(u)).all()
        assert log1m_tanh_sq(np.array([40.0]))[0] == pytest.approx(2 * math.log(2) - 80, rel=1e-12)

    def test_density_integrates_to_one(self, rng):
        p = GaussianPolicy(3, 1, hidden=(8,), rng=rng)
        s = rng.standard_normal(3)
        mean, log_std = p.head(s)
        m, sd = mean[0], math.exp(log_std[0])

        def density(a):
            # invert tanh to recover eta, then evaluate the policy's own log-prob
            u = math.atanh(a)
            return math.exp(sample_squashed(p, s, np.array([(u - m) / sd]))[1])

        total, _ = integrate.quad(density, -1 + 1e-12, 1 - 1e-12, limit=200)
        assert total == pytest.approx(1.0, abs=0.02)

    def test_log_std_clamped(self, rng):
        p = GaussianPolicy(2, 2, hidden=(8,), rng=rng)
        p.net.biases[-1][2:] = [100.0, -100.0]
        _, log_std = p.head(rng.standard_normal(2))
        np.testing.assert_array_equal(log_std, [2.0, -20.0])

    def test_actions_strictly_inside(self, rng):
        p = GaussianPolicy(2, 2, hidden=(8,), rng=rng)
        s = squashed_forward(p, rng.standard_normal((1000, 2)), rng.standard_normal((1000, 2)))
        assert np.all(np.abs(s.action) <= 1.0)
        assert np.isfinite(s.log_prob).all()

    def test_mean_of_pre_squash_samples(self, rng):
        p = GaussianPolicy(2, 1, hidden=(8,), rng=rng)
        st = rng.standard_normal(2)
        n = 20_000
        s = squashed_forward(p, np.tile(st, (n, 1)), rng.standard_normal((n, 1)))
        mean, log_std = p.head(st)
        se = math.exp(log_std[0]) / math.sqrt(n)
        assert abs(s.pre_squash.mean() - mean[0]) < 3 * se

    @pytest.mark.parametrize("weight_lp", [0.0, 0.7])
    def test_pathwise_gradient(self, rng, weight_lp):
        p = GaussianPolicy(3, 2, hidden=(6, 6), rng=rng)
        states = rng.standard_normal((5, 3))
        eta = rng.standard_normal((5, 2))
        ga = rng.standard_normal((5, 2))

        def objective():
            s = squashed_forward(p, states, eta)
            return float(np.sum(ga * s.action) + weight_lp * np.sum(s.log_prob))

        sample = squashed_forward(p, states, eta)
        g = squashed_backward(p, sample, ga, np.full(5, weight_lp))
        assert_grad_close(g, central_diff(objective, p.net.params))


class TestEntropy:
    def test_paper_value(self):
        assert gaussian_entropy(0.1) == pytest.approx(-0.884, abs=5e-4)

    def test_standard_normal(self):
        assert gaussian_entropy(1.0) == pytest.approx(0.5 * math.log(2 * math.pi * math.e), abs=1e-15)

    def test_monotone(self):
        vals = [gaussian_entropy(s) for s in np.geomspace(1e-4, 1e3, 200)]
        assert np.all(np.diff(vals) > 0)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            gaussian_entropy(0.0)
