"""
TD3 and SAC against the Riccati controller
==========================================

Train both algorithms on Lqr1d and compare their evaluation returns with
the optimal controller's, measured from the same initial states.

The integrator is open-loop unstable. A deterministic tanh actor that
saturates early can push the state far from the origin, where the
saturated output gets almost no gradient, and stay stuck there. SAC's
log-probability contains log(1 - tanh(u)^2), so its entropy bonus keeps
the actor away from saturation. Expect SAC to end closer to the oracle.
"""
import numpy as np

from offgpi import AlgoConfig, Trainer, evaluate, make_env
from offgpi.algos import eval_rng
from offgpi.envs import lqr_optimal, lqr_policy

steps = 15_000
for algo in ("td3", "sac"):
    cfg = AlgoConfig(algo=algo, hidden_layers=(64, 64), random_action_steps=1000, buffer_size=10_000)
    trainer = Trainer(algo, cfg, make_env("lqr1d"), seed=1)
    curve = trainer.run(steps, 3000)
    print(algo)
    for step, ret in zip(curve.steps, curve.eval_return_mean):
        oracle, _ = evaluate(make_env("lqr1d"), lqr_policy(cfg.gamma), cfg.eval_episodes, eval_rng(1, step))
        print(f"  step {step:>6}: return {ret:9.3f}   oracle {oracle:7.3f}")

    # A linear fit of the learned actor near the origin gives its effective gain.
    s = np.linspace(-0.3, 0.3, 31)
    a = np.array([trainer.policy.mean_action(np.array([x]))[0] for x in s])
    slope, offset = np.polyfit(s, a, 1)
    print(f"  learned gain {-slope:.3f} (optimal {lqr_optimal(cfg.gamma)[1]:.3f}), offset {offset:+.4f}")
