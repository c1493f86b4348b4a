"""Actor heads: a tanh-bounded deterministic policy and a squashed Gaussian."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .diffnet import TANH, IDENTITY, Mlp, NonFiniteError, ShapeError, backward, forward, forward_cached

LOG_2PI = math.log(2.0 * math.pi)
LOG_2 = math.log(2.0)


@dataclass(frozen=True)
class NoiseSpec:
    rollout_sigma: float = 0.1
    target_sigma: float = 0.2
    target_clip: tuple[float, float] = (-0.5, 0.5)
    action_bounds: tuple[float, float] = (-1.0, 1.0)

    def __post_init__(self):
        lo, hi = self.target_clip
        if lo != -hi:
            raise ValueError(f"target_clip must be symmetric about 0, got {self.target_clip}")
        if self.rollout_sigma < 0 or self.target_sigma < 0:
            raise ValueError("noise sigmas must be nonnegative")


class DeterministicPolicy:
    """``state -> action`` with every output squashed by tanh."""

    stochastic = False

    def __init__(self, state_dim, action_dim, hidden=(256, 256, 256), rng=None, net=None):
        self.state_dim = state_dim
        self.action_dim = action_dim
        if net is None:
            net = Mlp((state_dim, *hidden, action_dim), TANH, rng=rng)
        if net.layer_sizes[0] != state_dim or net.layer_sizes[-1] != action_dim:
            raise ShapeError(f"{net!r} does not map {state_dim} -> {action_dim}")
        self.net = net

    def mean_action(self, state):
        return act_deterministic(self, state)


class GaussianPolicy:
    """Amortised diagonal Gaussian over pre-squash actions.

    The network emits ``2 * action_dim`` linear outputs: the pre-squash mean
    followed by the log standard deviation, which is clamped into
    ``[log_std_min, log_std_max]`` before use.
    """

    stochastic = True

    def __init__(self, state_dim, action_dim, hidden=(256, 256, 256), rng=None, net=None,
                 log_std_min=-20.0, log_std_max=2.0):
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.log_std_min = float(log_std_min)
        self.log_std_max = float(log_std_max)
        if net is None:
            net = Mlp((state_dim, *hidden, 2 * action_dim), IDENTITY, rng=rng)
        if net.layer_sizes[0] != state_dim or net.layer_sizes[-1] != 2 * action_dim:
            raise ShapeError(f"{net!r} does not map {state_dim} -> 2*{action_dim}")
        self.net = net

    def head(self, states):
        """Return ``(mean, clamped log_std)`` for a state or a batch."""
        out = forward(self.net, states)
        d = self.action_dim
        mean = out[..., :d]
        log_std = np.clip(out[..., d:], self.log_std_min, self.log_std_max)
        return mean, log_std

    def mean_action(self, state):
        mean, _ = self.head(state)
        return np.tanh(mean)


def act_deterministic(policy: DeterministicPolicy, state) -> np.ndarray:
    return forward(policy.net, state)


def _draw(rng, sigma, shape, noise):
    if noise is not None:
        return np.asarray(noise, dtype=np.float64)
    if sigma == 0:
        return np.zeros(shape)
    return rng.normal(0.0, sigma, size=shape)


def rollout_noise(action, spec: NoiseSpec, rng=None, noise=None) -> np.ndarray:
    """Exploration noise for data collection: no inner clip, only the action bound."""
    action = np.asarray(action, dtype=np.float64)
    eps = _draw(rng, spec.rollout_sigma, action.shape, noise)
    return np.clip(action + eps, *spec.action_bounds)


def target_smoothing(action, spec: NoiseSpec, rng=None, noise=None) -> np.ndarray:
    """Target-policy smoothing: clipped Gaussian noise, then the action bound.

    ``noise`` overrides the raw (pre-clip) draw.
    """
    action = np.asarray(action, dtype=np.float64)
    eps = np.clip(_draw(rng, spec.target_sigma, action.shape, noise), *spec.target_clip)
    return np.clip(action + eps, *spec.action_bounds)


def log1m_tanh_sq(u):
    """``log(1 - tanh(u)**2)`` without cancellation for large ``|u|``."""
    return 2.0 * (LOG_2 - u - np.logaddexp(0.0, -2.0 * u))


@dataclass
class SquashedSample:
    action: np.ndarray
    log_prob: np.ndarray
    pre_squash: np.ndarray
    mean: np.ndarray
    log_std: np.ndarray
    std: np.ndarray
    eta: np.ndarray
    states: np.ndarray
    clamp_open: np.ndarray
    cache: object


def squashed_forward(policy: GaussianPolicy, states, eta) -> SquashedSample:
    """Reparameterised sample ``tanh(mean + std * eta)`` with its log-density.

    Works on a single state (1-D) or a batch; ``eta`` must match the action
    shape. Keeps what :func:`squashed_backward` needs.
    """
    eta = np.asarray(eta, dtype=np.float64)
    if not np.isfinite(eta).all():
        raise NonFiniteError("eta contains non-finite values")
    out, cache = forward_cached(policy.net, states)
    d = policy.action_dim
    if eta.shape != out[..., :d].shape:
        raise ShapeError(f"eta shape {eta.shape} != action shape {out[..., :d].shape}")
    mean = out[..., :d]
    raw = out[..., d:]
    log_std = np.clip(raw, policy.log_std_min, policy.log_std_max)
    clamp_open = (raw >= policy.log_std_min) & (raw <= policy.log_std_max)
    std = np.exp(log_std)
    u = mean + std * eta
    action = np.tanh(u)
    log_prob = np.sum(-0.5 * eta * eta - log_std - 0.5 * LOG_2PI - log1m_tanh_sq(u), axis=-1)
    return SquashedSample(action, log_prob, u, mean, log_std, std, eta,
                          np.asarray(states, dtype=np.float64), clamp_open, cache)


def sample_squashed(policy: GaussianPolicy, state, eta):
    s = squashed_forward(policy, state, eta)
    return s.action, s.log_prob


def squashed_backward(policy: GaussianPolicy, sample: SquashedSample, grad_action, grad_log_prob=None):
    """Parameter gradient of ``sum(grad_action * action + grad_log_prob * log_prob)``.

    ``eta`` is held fixed, so this is the pathwise derivative. The log-prob
    term includes its own dependence on the parameters through both the
    Gaussian normaliser and the tanh correction.
    """
    grad_action = np.asarray(grad_action, dtype=np.float64)
    a = sample.action
    g_u = grad_action * (1.0 - a * a)
    g_logstd = g_u * sample.std * sample.eta
    if grad_log_prob is not None:
        gl = np.asarray(grad_log_prob, dtype=np.float64)[..., None]
        g_u = g_u + gl * 2.0 * a
        g_logstd = g_logstd + gl * (2.0 * a * sample.std * sample.eta - 1.0)
    g_logstd = g_logstd * sample.clamp_open
    upstream = np.concatenate([g_u, g_logstd], axis=-1)
    return backward(policy.net, sample.states, upstream, cache=sample.cache, input_grad=False).param_grads


def gaussian_entropy(sigma) -> float:
    """Differential entropy of N(0, sigma^2) in nats."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    return math.log(sigma * math.sqrt(2.0 * math.pi * math.e))
