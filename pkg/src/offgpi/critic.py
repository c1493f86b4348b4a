"""Twin Q-networks, Bellman targets and the squared-error critic loss."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffnet import IDENTITY, Mlp, NonFiniteError, ShapeError, backward, ema_update, forward, forward_cached


@dataclass
class BellmanBatch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray

    def __post_init__(self):
        n = len(self.states)
        if not all(len(x) == n for x in (self.actions, self.rewards, self.next_states, self.dones)):
            raise ShapeError("BellmanBatch arrays must share the batch length")

    def __len__(self):
        return len(self.states)


class TwinCritic:
    """Two independent Q(s, a) networks plus their Polyak-averaged targets.

    Both networks read ``concat(state, action)``.
    """

    def __init__(self, state_dim, action_dim, hidden=(256, 256, 256), rng=None, nets=None):
        self.state_dim = state_dim
        self.action_dim = action_dim
        sizes = (state_dim + action_dim, *hidden, 1)
        if nets is None:
            rng = np.random.default_rng() if rng is None else rng
            nets = (Mlp(sizes, IDENTITY, rng=rng), Mlp(sizes, IDENTITY, rng=rng))
        self.q1, self.q2 = nets
        for q in (self.q1, self.q2):
            if q.layer_sizes[0] != state_dim + action_dim or q.layer_sizes[-1] != 1:
                raise ShapeError(f"{q!r} is not a Q-network for ({state_dim}, {action_dim})")
        self.q1_target = self.q1.copy()
        self.q2_target = self.q2.copy()

    def nets(self, which="online"):
        if which == "online":
            return self.q1, self.q2
        if which == "target":
            return self.q1_target, self.q2_target
        raise ValueError(f"which must be 'online' or 'target', got {which!r}")

    def update_targets(self, tau):
        ema_update(self.q1_target.params, self.q1.params, tau)
        ema_update(self.q2_target.params, self.q2.params, tau)


def critic_input(state, action):
    return np.concatenate([np.asarray(state, dtype=np.float64), np.asarray(action, dtype=np.float64)], axis=-1)


def twin_eval(c: TwinCritic, state, action, which="online"):
    """Return ``(q1, q2)``; scalars for a single pair, ``(N,)`` arrays for a batch."""
    x = critic_input(state, action)
    n1, n2 = c.nets(which)
    return forward(n1, x)[..., 0], forward(n2, x)[..., 0]


def min_q(q1_val, q2_val):
    return np.minimum(q1_val, q2_val)


def bellman_target(reward, done, gamma, next_value):
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
    return np.asarray(reward) + gamma * (1.0 - np.asarray(done, dtype=np.float64)) * np.asarray(next_value)


def soft_value(q_min, alpha, log_prob):
    """Entropy-augmented state value ``Q - alpha * log pi``."""
    if alpha < 0:
        raise ValueError(f"alpha must be nonnegative, got {alpha}")
    return np.asarray(q_min) - alpha * np.asarray(log_prob)


def critic_loss_and_grads(c: TwinCritic, batch: BellmanBatch, targets, use_q2=True):
    """Mean squared error of each online critic against shared, fixed targets.

    Returns ``(loss, grad_q1, grad_q2)`` where ``loss`` is the sum of the two
    per-critic MSEs. With ``use_q2=False`` only the first critic is fit and
    ``grad_q2`` is ``None``.
    """
    y = np.asarray(targets, dtype=np.float64)
    if not np.isfinite(y).all():
        raise NonFiniteError("critic targets contain non-finite values")
    x = critic_input(batch.states, batch.actions)
    n = len(y)
    loss = 0.0
    grads = []
    for net in ((c.q1, c.q2) if use_q2 else (c.q1,)):
        pred, cache = forward_cached(net, x)
        resid = pred[:, 0] - y
        loss += float(np.mean(resid * resid))
        upstream = (2.0 / n) * resid[:, None]
        grads.append(backward(net, x, upstream, cache=cache, input_grad=False).param_grads)
    if not use_q2:
        grads.append(None)
    return loss, grads[0], grads[1]


def action_grad(net: Mlp, states, actions, upstream=None):
    """``(Q(s, a), dQ/da)`` for a batch, optionally weighted per sample."""
    x = critic_input(states, actions)
    q, cache = forward_cached(net, x)
    if upstream is None:
        upstream = np.ones_like(q)
    gx = backward(net, x, upstream, cache=cache, param_grads=False).input_grad
    return q[..., 0], gx[..., -actions.shape[-1]:]
