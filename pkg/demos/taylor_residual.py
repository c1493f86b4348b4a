"""
Gaussian smoothing of a critic, to second order
===============================================

For a Gaussian actor with mean mu and spread sigma, the expected critic
value differs from the value at the mean by about sigma^2 / 2 times the
curvature of Q in the action. We check this on an exact quadratic and on
a critic learned by TD3.
"""
import numpy as np

from offgpi import AlgoConfig, Trainer, make_env, taylor_residual

rng = np.random.default_rng(0)
quadratic = lambda s, a: -np.sum(a * a, axis=1)
zero = lambda s: np.zeros((len(s), 1))

# On Q = -a^2 the expansion is exact: the residual is -sigma^2.
for sigma in (0.05, 0.1, 0.2, 0.5):
    rep = taylor_residual(quadratic, zero, sigma, np.zeros((50, 1)), 20_000, rng)
    print(f"sigma {sigma:4}: measured {rep.measured_residual:+.5f} +/- {rep.mc_standard_error:.5f}"
          f"   predicted {rep.predicted_residual:+.5f}")

# A learned critic is only approximately quadratic in the action.
cfg = AlgoConfig(algo="td3", hidden_layers=(64, 64), random_action_steps=1000, buffer_size=10_000)
tr = Trainer("td3", cfg, make_env("lqr1d"), seed=0)
tr.run(10_000, 0)


def critic(s, a):
    x = np.concatenate([s, a], axis=1)
    return np.minimum(tr.critic.q1(x)[:, 0], tr.critic.q2(x)[:, 0])


env = make_env("lqr1d")
states = np.array([env.reset(rng) for _ in range(256)])
rep = taylor_residual(critic, tr.policy.net, 0.1, states, 50_000, rng, eps=1e-2)
print(f"trained critic: measured {rep.measured_residual:+.5f} +/- {rep.mc_standard_error:.5f}, "
      f"predicted {rep.predicted_residual:+.5f}")
# The true Q of this task has action curvature -2(1 + gamma P), about -5.2,
# so the ideal prediction at sigma = 0.1 is roughly -0.026.
