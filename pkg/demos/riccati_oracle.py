"""
The linear-quadratic oracle
===========================

Lqr1d is a one-dimensional integrator, s' = s + u, with cost s^2 + u^2.
Its discounted optimum is known in closed form, which makes it a good
yardstick for the learned controllers.
"""
import numpy as np

from offgpi import evaluate, lqr_optimal, make_env
from offgpi.envs import lqr_policy

# Solve the Riccati fixed point for a few discounts.
for gamma in (0.0, 0.5, 0.9, 0.99):
    P, K = lqr_optimal(gamma)
    print(f"gamma={gamma:<5} P={P:.6f} K={K:.6f}")

# At gamma = 0.99 the optimal gain is about 0.615: each step removes ~60% of the state.
P, K = lqr_optimal(0.99)
env = make_env("lqr1d")

# Compare the optimal controller to doing nothing and to over-steering.
starts = np.linspace(-1, 1, 9)
for name, gain in (("do nothing", 0.0), ("optimal", K), ("deadbeat", 1.0)):
    mean, std = evaluate(env, lambda s, g=gain: -g * s, len(starts), None, initial_states=starts)
    print(f"{name:>10}: return {mean:8.3f} +/- {std:.3f}")

# The value function is -P s^2; one rollout from s0 = 1 confirms it.
s, total = 1.0, 0.0
for t in range(200):
    u = -K * s
    total += 0.99 ** t * -(s * s + u * u)
    s += u
print(f"discounted return from s0=1: {total:.5f}  (-P = {-P:.5f})")

# lqr_policy wraps the gain as an action function usable anywhere a policy is.
print("policy at s=0.5:", lqr_policy(0.99)(np.array([0.5])))
