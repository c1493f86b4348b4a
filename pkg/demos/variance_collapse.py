"""
Why the stochastic actor stops exploring
========================================

A Gaussian actor trained only to maximise Q (TDS) is pushed towards a
deterministic policy: noise around a maximum can only lower the expected
value. SAC's entropy bonus, with its temperature tuned towards a target
entropy, keeps the spread alive. TD3 sidesteps the issue by adding a fixed
sigma = 0.1 of rollout noise.
"""
from offgpi import AlgoConfig, Trainer, make_env
from offgpi.policy import gaussian_entropy

steps = 8000
traces = {}
for algo in ("tds", "sac", "td3"):
    cfg = AlgoConfig(algo=algo, hidden_layers=(64, 64), random_action_steps=1000, buffer_size=10_000)
    curve = Trainer(algo, cfg, make_env("lqr1d"), seed=0).run(steps, 1000)
    traces[algo] = (curve.initial_policy_sigma, curve.policy_sigma_mean, curve.alpha)

for algo, (initial, sigmas, alphas) in traces.items():
    print(f"{algo}: initial std {initial:.3f}")
    print("   std   " + " ".join(f"{s:6.3f}" for s in sigmas))
    if alphas[0] is not None:
        print("   alpha " + " ".join(f"{a:6.3f}" for a in alphas))

# TD3's fixed sigma of 0.1 corresponds to a differential entropy of about -0.884 nats,
# close to the -1 nat target SAC steers towards in one action dimension.
print(f"entropy of N(0, 0.1^2): {gaussian_entropy(0.1):.4f} nats")
