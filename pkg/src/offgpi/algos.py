"""One off-policy actor-critic loop covering DDPG, TD3, TDS and SAC.

The four algorithms differ along two axes: whether the actor is a
reparameterised Gaussian (``stochastic_actor``) and whether an entropy
bonus enters both the critic target and the actor objective
(``entropy_term``). TD3's heuristics (twin-min critics, delayed policy
updates, target-policy smoothing) are a third switch.
"""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import diffnet
from .analysis import evaluate, mean_policy_std
from .critic import BellmanBatch, TwinCritic, action_grad, bellman_target, critic_loss_and_grads, min_q, soft_value, twin_eval
from .diffnet import AdamState, NonFiniteError, adam_step, backward, ema_update, forward_cached
from .envs import Env
from .policy import (DeterministicPolicy, GaussianPolicy, NoiseSpec, rollout_noise, squashed_backward,
                     squashed_forward, target_smoothing)
from .replay import ReplayBuffer

log = logging.getLogger(__name__)

ALGOS = ("ddpg", "td3", "tds", "sac")

# rows of the hyperparameter table that differ between algorithms
_PER_ALGO = {
    "ddpg": {"policy_update_period": 1, "has_target_policy": True},
    "td3": {"policy_update_period": 2, "has_target_policy": True},
    "tds": {"policy_update_period": 1, "has_target_policy": False},
    "sac": {"policy_update_period": 1, "has_target_policy": False},
}


class ConfigError(ValueError):
    pass


class TrainingDiverged(FloatingPointError):
    pass


@dataclass
class AlgoConfig:
    algo: str = "td3"
    collection_steps: int = 1000
    random_action_steps: int = 10000
    hidden_layers: tuple = (256, 256, 256)
    learning_rate: float = 3e-4
    buffer_size: int = 1_000_000
    action_limit: tuple = (-1.0, 1.0)
    tau: float = 5e-3
    critic_updates_per_env_step: int = 1
    policy_update_period: int | None = None
    has_target_policy: bool | None = None
    entropy_target: float | None = None  # None means -dim(A)
    log_std_limits: tuple = (-20.0, 2.0)
    target_sigma: float = 0.2
    target_clip: tuple = (-0.5, 0.5)
    rollout_sigma: float = 0.1
    gamma: float = 0.99
    batch_size: int = 256
    initial_alpha: float = 1.0
    eval_episodes: int = 10

    def __post_init__(self):
        if self.algo not in ALGOS:
            raise ConfigError(f"unknown algo {self.algo!r}; choose from {ALGOS}")
        for key, value in _PER_ALGO[self.algo].items():
            if getattr(self, key) is None:
                setattr(self, key, value)
        self.hidden_layers = tuple(int(h) for h in self.hidden_layers)
        self.action_limit = tuple(float(x) for x in self.action_limit)
        self.log_std_limits = tuple(float(x) for x in self.log_std_limits)
        self.target_clip = tuple(float(x) for x in self.target_clip)
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError(f"gamma must lie in [0, 1), got {self.gamma}")
        if not 0.0 < self.tau <= 1.0:
            raise ConfigError(f"tau must lie in (0, 1], got {self.tau}")
        if self.policy_update_period < 1 or self.critic_updates_per_env_step < 0:
            raise ConfigError("update periods must be positive")

    def noise_spec(self):
        return NoiseSpec(self.rollout_sigma, self.target_sigma, self.target_clip, self.action_limit)

    def target_entropy(self, action_dim):
        return -float(action_dim) if self.entropy_target is None else float(self.entropy_target)

    # flat "key = value" text, one field per line

    def to_text(self):
        return "".join(f"{f.name} = {_fmt(getattr(self, f.name))}\n" for f in dataclasses.fields(self))

    @classmethod
    def from_text(cls, text, **overrides):
        values = {}
        names = {f.name: f for f in dataclasses.fields(cls)}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in names:
                raise ConfigError(f"line {lineno}: unknown config key {key!r}")
            values[key] = _parse(names[key], value)
        values.update(overrides)
        return cls(**values)

    @classmethod
    def load(cls, path, **overrides):
        return cls.from_text(Path(path).read_text(), **overrides)


def _fmt(value):
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        if all(isinstance(v, int) for v in value):
            return ":".join(str(v) for v in value)
        return "[" + ", ".join(repr(float(v)) for v in value) + "]"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse(f, text):
    name = f.name
    if text == "auto":
        return None
    if name == "algo":
        return text
    if name == "hidden_layers":
        return tuple(int(x) for x in text.split(":"))
    if name in ("action_limit", "log_std_limits", "target_clip"):
        parts = [p for p in text.strip("[]() ").split(",") if p.strip()]
        if len(parts) != 2:
            raise ConfigError(f"{name} needs two numbers, got {text!r}")
        return tuple(float(p) for p in parts)
    if name == "has_target_policy":
        if text.lower() not in ("true", "false"):
            raise ConfigError(f"{name} must be true/false, got {text!r}")
        return text.lower() == "true"
    try:
        if name in ("collection_steps", "random_action_steps", "buffer_size", "critic_updates_per_env_step",
                    "policy_update_period", "batch_size", "eval_episodes"):
            return int(float(text)) if float(text).is_integer() else int(text)
        return float(text)
    except ValueError:
        raise ConfigError(f"cannot parse {name} = {text!r}") from None


@dataclass(frozen=True)
class AlgoVariant:
    name: str
    stochastic_actor: bool
    entropy_term: bool
    td3_heuristics: bool = True

    def __post_init__(self):
        if self.entropy_term and not self.stochastic_actor:
            raise ConfigError("an entropy term needs a stochastic actor")


VARIANTS = {
    "ddpg": AlgoVariant("ddpg", stochastic_actor=False, entropy_term=False, td3_heuristics=False),
    "td3": AlgoVariant("td3", stochastic_actor=False, entropy_term=False),
    "tds": AlgoVariant("tds", stochastic_actor=True, entropy_term=False),
    "sac": AlgoVariant("sac", stochastic_actor=True, entropy_term=True),
}


@dataclass
class TemperatureState:
    target_entropy: float
    log_alpha: np.ndarray
    adam: AdamState

    @classmethod
    def create(cls, target_entropy, initial_alpha=1.0, learning_rate=3e-4):
        return cls(float(target_entropy), np.array([np.log(initial_alpha)]), AdamState(1, learning_rate))

    @property
    def alpha(self):
        return float(np.exp(self.log_alpha[0]))


def temperature_update(ts: TemperatureState, log_probs):
    """One Adam step on ``log_alpha`` for ``-alpha * mean(log_prob + target_entropy)``."""
    residual = float(np.mean(np.asarray(log_probs) + ts.target_entropy))
    grad = -ts.alpha * residual
    adam_step(ts.adam, ts.log_alpha, np.array([grad]), name="log_alpha")
    return ts


def compute_targets(variant: AlgoVariant, critic: TwinCritic, policy, batch: BellmanBatch, alpha, gamma, rng,
                    target_policy=None, noise_spec=NoiseSpec(), eta=None):
    """Bellman targets ``r + gamma * (1 - done) * V(s')`` for one variant.

    Deterministic actors evaluate ``V(s')`` at the (target) policy action,
    smoothed with clipped noise under the TD3 heuristics. Stochastic actors
    draw a reparameterised action from the current policy; ``eta`` fixes
    that draw. With an entropy term the value is ``Q - alpha * log pi``.
    """
    s2 = batch.next_states
    if variant.stochastic_actor:
        if eta is None:
            eta = rng.standard_normal((len(batch), policy.action_dim))
        sample = squashed_forward(policy, s2, eta)
        a2, logp = sample.action, sample.log_prob
    else:
        actor = policy if target_policy is None else target_policy
        a2 = diffnet.forward(actor.net, s2)
        if variant.td3_heuristics:
            a2 = target_smoothing(a2, noise_spec, rng)
    q1, q2 = twin_eval(critic, s2, a2, which="target")
    v = min_q(q1, q2) if variant.td3_heuristics else q1
    if variant.entropy_term:
        v = soft_value(v, alpha, logp)
    y = bellman_target(batch.rewards, batch.dones, gamma, v)
    if not np.isfinite(y).all():
        raise NonFiniteError("non-finite Bellman target")
    return y


@dataclass
class ActorGradient:
    """Gradient of the actor loss ``-J_pi`` (ready for a descent step)."""

    loss: float
    grad: np.ndarray
    log_prob: np.ndarray | None = None


def _min_twin_action_grad(critic, states, actions, twin):
    q1, g1 = action_grad(critic.q1, states, actions)
    if not twin:
        return q1, g1
    q2, g2 = action_grad(critic.q2, states, actions)
    pick2 = q2 < q1
    return np.where(pick2, q2, q1), np.where(pick2[:, None], g2, g1)


def actor_gradient(variant: AlgoVariant, critic: TwinCritic, policy, states, alpha, rng, eta=None) -> ActorGradient:
    """Pathwise actor gradient for every member of the family.

    Deterministic actors ascend ``Q1(s, mu(s))``. Stochastic actors ascend
    ``min(Q1, Q2)`` at ``a = tanh(mean + std * eta)``, minus
    ``alpha * log pi(a|s)`` when the entropy term is on.
    """
    states = np.asarray(states, dtype=np.float64)
    n = len(states)
    if variant.stochastic_actor:
        if eta is None:
            eta = rng.standard_normal((n, policy.action_dim))
        sample = squashed_forward(policy, states, eta)
        q, g_a = _min_twin_action_grad(critic, states, sample.action, variant.td3_heuristics)
        objective = q
        g_logp = None
        if variant.entropy_term:
            objective = q - alpha * sample.log_prob
            g_logp = np.full(n, alpha / n)
        grad = squashed_backward(policy, sample, -g_a / n, g_logp)
        return ActorGradient(-float(np.mean(objective)), grad, sample.log_prob)

    actions, cache = forward_cached(policy.net, states)
    q, g_a = action_grad(critic.q1, states, actions)
    grad = backward(policy.net, states, -g_a / n, cache=cache, input_grad=False).param_grads
    return ActorGradient(-float(np.mean(q)), grad)


@dataclass
class LearningCurve:
    algo: str
    env: str
    seed: int
    steps: list = field(default_factory=list)
    eval_return_mean: list = field(default_factory=list)
    eval_return_std: list = field(default_factory=list)
    policy_sigma_mean: list = field(default_factory=list)
    alpha: list = field(default_factory=list)
    initial_policy_sigma: float = float("nan")

    def final_return(self, window=1):
        return float(np.mean(self.eval_return_mean[-window:]))


EVAL_STREAM = 0x5EED


def eval_rng(seed, step):
    """RNG used for the evaluation episodes recorded at ``step``."""
    return np.random.default_rng([EVAL_STREAM, int(seed), int(step)])


class Trainer:
    """Single-seed, single-threaded training run.

    Randomness comes from independent streams spawned from ``seed`` for
    network initialisation, environment resets, action selection and
    minibatch/noise draws, so a seed fully determines the run.
    """

    def __init__(self, variant, config: AlgoConfig, env: Env, seed=0):
        if isinstance(variant, str):
            variant = VARIANTS[variant]
        self.variant = variant
        self.config = config
        self.env = env
        self.seed = int(seed)
        init_ss, env_ss, act_ss, upd_ss, probe_ss = np.random.SeedSequence(self.seed).spawn(5)
        init_rng = np.random.default_rng(init_ss)
        self.env_rng = np.random.default_rng(env_ss)
        self.act_rng = np.random.default_rng(act_ss)
        self.update_rng = np.random.default_rng(upd_ss)

        sd, ad = env.state_dim, env.action_dim
        hidden = config.hidden_layers
        if variant.stochastic_actor:
            lo, hi = config.log_std_limits
            self.policy = GaussianPolicy(sd, ad, hidden, rng=init_rng, log_std_min=lo, log_std_max=hi)
        else:
            self.policy = DeterministicPolicy(sd, ad, hidden, rng=init_rng)
        self.critic = TwinCritic(sd, ad, hidden, rng=init_rng)
        self.target_policy = None
        if config.has_target_policy:
            self.target_policy = DeterministicPolicy(sd, ad, net=self.policy.net.copy()) \
                if not variant.stochastic_actor else GaussianPolicy(
                    sd, ad, net=self.policy.net.copy(), log_std_min=self.policy.log_std_min,
                    log_std_max=self.policy.log_std_max)
        lr = config.learning_rate
        self.policy_opt = AdamState(self.policy.net.n_params, lr)
        self.q1_opt = AdamState(self.critic.q1.n_params, lr)
        self.q2_opt = AdamState(self.critic.q2.n_params, lr)
        self.temperature = None
        if variant.entropy_term:
            self.temperature = TemperatureState.create(config.target_entropy(ad), config.initial_alpha, lr)
        self.noise = config.noise_spec()
        self.buffer = ReplayBuffer(sd, ad, config.buffer_size)
        probe_rng = np.random.default_rng(probe_ss)
        probe_env = type(env)(horizon=env.spec.max_episode_steps)
        self.probe_states = np.array([probe_env.reset(probe_rng) for _ in range(32)])

        self.env_steps = 0
        self.critic_updates = 0
        self.actor_updates = 0
        self.min_alpha = self.alpha
        self.last_losses = {}

    @property
    def alpha(self):
        return self.temperature.alpha if self.temperature is not None else 0.0

    def policy_sigma(self):
        if self.variant.stochastic_actor:
            return mean_policy_std(self.policy, self.probe_states)
        return self.config.rollout_sigma

    def eval_action(self, state):
        return self.policy.mean_action(state)

    def explore_action(self, state):
        if self.env_steps < self.config.random_action_steps:
            return self.act_rng.uniform(-1.0, 1.0, size=self.env.action_dim)
        if self.variant.stochastic_actor:
            eta = self.act_rng.standard_normal(self.env.action_dim)
            return squashed_forward(self.policy, state, eta).action
        return rollout_noise(self.policy.mean_action(state), self.noise, self.act_rng)

    def update(self):
        """One critic step and, every ``policy_update_period`` critic steps,
        one actor (and temperature) step followed by target averaging."""
        cfg, v = self.config, self.variant
        rng = self.update_rng
        batch = self.buffer.sample(cfg.batch_size, rng)
        alpha = self.alpha
        y = compute_targets(v, self.critic, self.policy, batch, alpha, cfg.gamma, rng,
                            target_policy=self.target_policy, noise_spec=self.noise)
        loss, g1, g2 = critic_loss_and_grads(self.critic, batch, y, use_q2=v.td3_heuristics)
        if not np.isfinite(loss):
            raise TrainingDiverged(f"critic loss {loss} at env step {self.env_steps}")
        adam_step(self.q1_opt, self.critic.q1.params, g1, name="q1")
        if g2 is not None:
            adam_step(self.q2_opt, self.critic.q2.params, g2, name="q2")
        self.critic_updates += 1
        self.last_losses["critic"] = loss

        if self.critic_updates % cfg.policy_update_period:
            return
        ag = actor_gradient(v, self.critic, self.policy, batch.states, alpha, rng)
        if not np.isfinite(ag.loss):
            raise TrainingDiverged(f"actor loss {ag.loss} at env step {self.env_steps}")
        adam_step(self.policy_opt, self.policy.net.params, ag.grad, name="policy")
        self.actor_updates += 1
        self.last_losses["actor"] = ag.loss
        if self.temperature is not None:
            temperature_update(self.temperature, ag.log_prob)
            self.min_alpha = min(self.min_alpha, self.alpha)
        self.critic.update_targets(cfg.tau)
        if self.target_policy is not None:
            ema_update(self.target_policy.net.params, self.policy.net.params, cfg.tau)

    def evaluate(self, step=None, episodes=None):
        step = self.env_steps if step is None else step
        episodes = self.config.eval_episodes if episodes is None else episodes
        eval_env = type(self.env)(horizon=self.env.spec.max_episode_steps)
        return evaluate(eval_env, self.eval_action, episodes, eval_rng(self.seed, step))

    def run(self, total_steps, eval_every, callback=None) -> LearningCurve:
        cfg = self.config
        curve = LearningCurve(self.variant.name, self.env.spec.name, self.seed,
                              initial_policy_sigma=self.policy_sigma())
        state = self.env.reset(self.env_rng)
        for _ in range(int(total_steps)):
            action = self.explore_action(state)
            next_state, reward, done = self.env.step(action)
            terminal = done and not self.env.truncated
            self.buffer.add(state, action, reward, next_state, terminal)
            state = self.env.reset(self.env_rng) if done else next_state
            self.env_steps += 1
            if self.env_steps >= cfg.collection_steps:
                for _ in range(cfg.critic_updates_per_env_step):
                    self.update()
            if eval_every and self.env_steps % eval_every == 0:
                mean, std = self.evaluate()
                curve.steps.append(self.env_steps)
                curve.eval_return_mean.append(mean)
                curve.eval_return_std.append(std)
                curve.policy_sigma_mean.append(self.policy_sigma())
                curve.alpha.append(self.alpha if self.temperature is not None else None)
                log.debug("%s seed %d step %d: return %.3f", self.variant.name, self.seed, self.env_steps, mean)
                if callback is not None:
                    callback(self, curve)
        diffnet.check_finite(self.policy.net, "policy")
        return curve


def train(variant, config, env, seeds, total_steps, eval_every):
    """Run one independent :class:`Trainer` per seed; returns their curves."""
    if isinstance(variant, str):
        variant = VARIANTS[variant]
    curves = []
    for seed in seeds:
        env_i = type(env)(horizon=env.spec.max_episode_steps)
        curves.append(Trainer(variant, config, env_i, seed).run(total_steps, eval_every))
    return curves
