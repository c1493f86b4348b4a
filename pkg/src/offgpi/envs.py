"""Deterministic desk-scale control tasks with actions in [-1, 1]^d.

All tasks integrate with semi-implicit Euler. ``step`` reports ``done``
when the episode ends; none of them has a true terminal state, so
``truncated`` is set whenever ``done`` is, and learners should keep
bootstrapping through those transitions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .diffnet import NonFiniteError, ShapeError


@dataclass(frozen=True)
class EnvSpec:
    name: str
    state_dim: int
    action_dim: int
    max_episode_steps: int


class Env:
    spec: EnvSpec

    def __init__(self, horizon=None):
        if horizon is not None:
            self.spec = EnvSpec(self.spec.name, self.spec.state_dim, self.spec.action_dim, int(horizon))
        self.t = 0
        self.truncated = False

    @property
    def state_dim(self):
        return self.spec.state_dim

    @property
    def action_dim(self):
        return self.spec.action_dim

    def _clip_action(self, action):
        a = np.asarray(action, dtype=np.float64).reshape(-1)
        if a.shape != (self.action_dim,):
            raise ShapeError(f"{self.spec.name} expects {self.action_dim} action dims, got {a.shape}")
        if not np.isfinite(a).all():
            raise NonFiniteError(f"non-finite action {a}")
        return np.clip(a, -1.0, 1.0)

    def _advance(self):
        self.t += 1
        done = self.t >= self.spec.max_episode_steps
        self.truncated = done
        return done

    def reset(self, rng, state=None):
        self.t = 0
        self.truncated = False
        return self._reset(rng, state)


class Lqr1d(Env):
    """Scalar integrator ``s' = s + u`` with reward ``-(s^2 + u^2)``."""

    spec = EnvSpec("lqr1d", 1, 1, 200)
    a_coef = 1.0
    b_coef = 1.0

    def _reset(self, rng, state=None):
        s = rng.uniform(-1.0, 1.0) if state is None else float(np.asarray(state).reshape(-1)[0])
        self.s = float(s)
        return self.observation()

    def observation(self):
        return np.array([self.s])

    def step(self, action):
        u = float(self._clip_action(action)[0])
        s = self.s
        reward = -(s * s + u * u)
        self.s = self.a_coef * s + self.b_coef * u
        return self.observation(), reward, self._advance()


def wrap_angle(theta):
    return ((theta + math.pi) % (2.0 * math.pi)) - math.pi


class Pendulum(Env):
    """Torque-limited swing-up; angle 0 is upright, observation (cos, sin, rate)."""

    spec = EnvSpec("pendulum", 3, 1, 200)
    g = 10.0
    m = 1.0
    length = 1.0
    dt = 0.05
    max_speed = 8.0
    max_torque = 2.0

    def _reset(self, rng, state=None):
        if state is None:
            self.theta = float(rng.uniform(-math.pi, math.pi))
            self.theta_dot = float(rng.uniform(-1.0, 1.0))
        else:
            self.theta, self.theta_dot = (float(x) for x in state)
        return self.observation()

    def observation(self):
        return np.array([math.cos(self.theta), math.sin(self.theta), self.theta_dot])

    def step(self, action):
        torque = self.max_torque * float(self._clip_action(action)[0])
        th, thdot = self.theta, self.theta_dot
        reward = -(wrap_angle(th) ** 2 + 0.1 * thdot ** 2 + 0.001 * torque ** 2)
        accel = 3.0 * self.g / (2.0 * self.length) * math.sin(th) + 3.0 / (self.m * self.length ** 2) * torque
        thdot = min(max(thdot + accel * self.dt, -self.max_speed), self.max_speed)
        self.theta = th + thdot * self.dt
        self.theta_dot = thdot
        return self.observation(), reward, self._advance()


class PointMass2d(Env):
    """Planar double integrator driven towards the origin."""

    spec = EnvSpec("pointmass2d", 4, 2, 150)
    dt = 0.05
    max_speed = 2.0
    goal = np.zeros(2)

    def _reset(self, rng, state=None):
        if state is None:
            self.pos = rng.uniform(-1.0, 1.0, size=2)
            self.vel = np.zeros(2)
        else:
            state = np.asarray(state, dtype=np.float64)
            self.pos, self.vel = state[:2].copy(), state[2:].copy()
        return self.observation()

    def observation(self):
        return np.concatenate([self.pos, self.vel])

    def step(self, action):
        a = self._clip_action(action)
        diff = self.pos - self.goal
        reward = -(float(diff @ diff) + 0.01 * float(a @ a))
        self.vel = np.clip(self.vel + a * self.dt, -self.max_speed, self.max_speed)
        self.pos = self.pos + self.vel * self.dt
        return self.observation(), reward, self._advance()


ENVS = {"lqr1d": Lqr1d, "pendulum": Pendulum, "pointmass2d": PointMass2d}


def make_env(name, **kwargs) -> Env:
    try:
        cls = ENVS[name]
    except KeyError:
        raise ValueError(f"unknown environment {name!r}; choose from {sorted(ENVS)}") from None
    return cls(**kwargs)


def riccati_update(p, gamma):
    gp = gamma * p
    return 1.0 + gp - gp * gp / (1.0 + gp)


def lqr_optimal(gamma, tol=1e-12, max_iter=1_000_000):
    """Discounted LQR solution for :class:`Lqr1d`.

    Returns ``(P, K)``: the optimal value is ``-P * s**2`` and the optimal
    control ``u = -K * s``.
    """
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
    p = 1.0
    for _ in range(max_iter):
        p_next = riccati_update(p, gamma)
        if abs(p_next - p) < tol:
            p = p_next
            break
        p = p_next
    else:
        raise RuntimeError(f"Riccati iteration did not converge in {max_iter} steps")
    gp = gamma * p
    return p, gp / (1.0 + gp)


def lqr_policy(gamma):
    _, k = lqr_optimal(gamma)
    return lambda s: np.clip(-k * np.asarray(s, dtype=np.float64), -1.0, 1.0)
