"""Objective analysis and experiment statistics.

* second-order comparison of a Gaussian actor's objective with the
  deterministic one (finite-difference action Hessians, Monte Carlo);
* policy standard-deviation traces;
* Welch's unequal-variance t-test with an exact Student-t tail;
* deterministic policy evaluation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .diffnet import NonFiniteError


# -- policy evaluation ---------------------------------------------------------

def _as_action_fn(policy):
    if callable(policy) and not hasattr(policy, "mean_action"):
        return policy
    return policy.mean_action


def evaluate(env, policy, episodes, rng, initial_states=None):
    """Mean and sample std of undiscounted returns over noise-free episodes.

    ``policy`` is a callable ``state -> action`` or any object with a
    ``mean_action`` method. ``initial_states`` pins the start of each
    episode instead of drawing it from ``rng``.
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    act = _as_action_fn(policy)
    returns = np.empty(episodes)
    for ep in range(episodes):
        start = None if initial_states is None else initial_states[ep]
        state = env.reset(rng, state=start)
        total, done = 0.0, False
        while not done:
            state, reward, done = env.step(act(state))
            total += reward
        returns[ep] = total
    std = float(returns.std(ddof=1)) if episodes > 1 else 0.0
    return float(returns.mean()), std


# -- policy spread ---------------------------------------------------------------

def mean_policy_std(policy, states):
    """Mean of ``exp(clamped log_std)`` over states and action dimensions."""
    _, log_std = policy.head(states)
    return float(np.mean(np.exp(log_std)))


def mean_negative_log_prob(policy, states, rng):
    """Monte Carlo estimate of the squashed policy's entropy over ``states``."""
    from .policy import squashed_forward

    eta = rng.standard_normal((len(states), policy.action_dim))
    return float(-np.mean(squashed_forward(policy, states, eta).log_prob))


@dataclass
class VarianceTrace:
    steps: list
    stds: list


def variance_trace(policy_snapshots, probe_states, rollout_sigma=0.1):
    """Policy spread for a sequence of ``(env_step, policy)`` snapshots.

    Deterministic actors explore with fixed Gaussian noise, so their entry
    is the constant ``rollout_sigma``.
    """
    steps, stds = [], []
    for step, policy in policy_snapshots:
        steps.append(step)
        stds.append(mean_policy_std(policy, probe_states) if getattr(policy, "stochastic", False)
                    else float(rollout_sigma))
    return VarianceTrace(steps, stds)


# -- second-order objective analysis -------------------------------------------

def action_hessian(critic_fn, state, action, eps=1e-3):
    """Symmetrised central-difference Hessian of ``critic_fn`` in the action.

    ``critic_fn(states, actions)`` must accept batches and return one value
    per row. ``state``/``action`` may be single vectors (returns ``(d, d)``)
    or aligned batches (returns ``(N, d, d)``).
    """
    if not 1e-5 <= eps <= 1e-2:
        raise ValueError(f"eps must lie in [1e-5, 1e-2], got {eps}")
    state = np.asarray(state, dtype=np.float64)
    action = np.asarray(action, dtype=np.float64)
    single = action.ndim == 1
    if single:
        state, action = state[None], action[None]
    n, d = action.shape
    eye = np.eye(d) * eps

    def q(a):
        v = np.asarray(critic_fn(state, a), dtype=np.float64).reshape(n)
        if not np.isfinite(v).all():
            raise NonFiniteError("critic returned non-finite values")
        return v

    q0 = q(action)
    h = np.empty((n, d, d))
    for i in range(d):
        h[:, i, i] = (q(action + eye[i]) - 2.0 * q0 + q(action - eye[i])) / (eps * eps)
        for j in range(i + 1, d):
            pp = q(action + eye[i] + eye[j])
            pm = q(action + eye[i] - eye[j])
            mp = q(action - eye[i] + eye[j])
            mm = q(action - eye[i] - eye[j])
            h[:, i, j] = h[:, j, i] = (pp - pm - mp + mm) / (4.0 * eps * eps)
    h = 0.5 * (h + np.swapaxes(h, 1, 2))
    return h[0] if single else h


@dataclass
class TaylorReport:
    sigma: float
    j_d: float
    j_r: float
    predicted_residual: float
    measured_residual: float
    mc_standard_error: float
    n_states: int
    n_samples: int


def taylor_residual(critic_fn, mu_fn, sigma, states, mc_samples, rng, eps=1e-3, antithetic=True):
    """Compare ``J_R - J_D`` with its second-order prediction.

    ``J_D`` averages ``Q(s, mu(s))`` over ``states``; ``J_R`` averages
    ``Q(s, a)`` with ``a ~ N(mu(s), sigma^2 I)``. The prediction is
    ``sigma^2 / 2`` times the mean trace of the action Hessian at
    ``mu(s)``. The standard error is that of ``J_R`` conditional on the
    state set (the per-state baseline ``Q(s, mu(s))`` is exact). With
    ``antithetic`` the noise is drawn in ``+/- eta`` pairs, which cancels
    the first-order term exactly.
    """
    states = np.asarray(states, dtype=np.float64)
    if len(states) == 0:
        raise ValueError("taylor_residual needs at least one state")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    mu = np.asarray(mu_fn(states), dtype=np.float64).reshape(len(states), -1)
    n, d = mu.shape
    q_mu = np.asarray(critic_fn(states, mu), dtype=np.float64).reshape(n)
    j_d = float(q_mu.mean())

    per_state = max(1, math.ceil(mc_samples / n))
    if antithetic:
        per_state += per_state % 2
    half = per_state // 2 if antithetic else per_state
    eta = rng.standard_normal((half, n, d))
    if antithetic:
        eta = np.concatenate([eta, -eta])
    s_rep = np.broadcast_to(states, (eta.shape[0],) + states.shape).reshape(-1, states.shape[1])
    a = (mu[None] + sigma * eta).reshape(-1, d)
    q_a = np.asarray(critic_fn(s_rep, a), dtype=np.float64).reshape(eta.shape[0], n)
    diff = q_a - q_mu[None]
    units = 0.5 * (diff[:half] + diff[half:]) if antithetic else diff
    measured = float(diff.mean())
    se = float(units.std(ddof=1) / math.sqrt(units.size)) if units.size > 1 else float("nan")

    hess = action_hessian(critic_fn, states, mu, eps=eps)
    predicted = 0.5 * sigma * sigma * float(np.trace(hess, axis1=1, axis2=2).mean())
    return TaylorReport(float(sigma), j_d, j_d + measured, predicted, measured, se, n, int(diff.size))


# -- Welch's t-test ---------------------------------------------------------------

def _betacf(a, b, x, max_iter=10_000, tol=1e-16):
    # modified Lentz evaluation of the incomplete-beta continued fraction
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = tiny if abs(d) < tiny else d
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            return h
    raise RuntimeError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc_regularized(a, b, x):
    """Regularized incomplete beta function ``I_x(a, b)``."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return float(x)
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _betacf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _betacf(b, a, 1.0 - x) / b


def student_t_two_tailed_p(t, dof):
    """``P(|T| >= |t|)`` for Student's t with ``dof`` degrees of freedom."""
    if dof <= 0:
        raise ValueError("dof must be positive")
    if math.isinf(t):
        return 0.0
    return betainc_regularized(0.5 * dof, 0.5, dof / (dof + t * t))


@dataclass(frozen=True)
class WelchResult:
    t_statistic: float
    degrees_of_freedom: float
    p_value: float

    def significant(self, level=0.05):
        return self.p_value < level


def welch_t_test(samples_a, samples_b) -> WelchResult:
    """Two-tailed Welch t-test for a difference in means."""
    a = np.asarray(samples_a, dtype=np.float64)
    b = np.asarray(samples_b, dtype=np.float64)
    na, nb = len(a), len(b)
    if na < 2 or nb < 2:
        raise ValueError("each sample needs at least 2 observations")
    va = float(a.var(ddof=1)) / na
    vb = float(b.var(ddof=1)) / nb
    diff = float(a.mean() - b.mean())
    se2 = va + vb
    if se2 == 0.0:
        t = 0.0 if diff == 0.0 else math.copysign(math.inf, diff)
        return WelchResult(t, float(na + nb - 2), 1.0 if diff == 0.0 else 0.0)
    t = diff / math.sqrt(se2)
    dof = se2 * se2 / (va * va / (na - 1) + vb * vb / (nb - 1))
    return WelchResult(t, dof, student_t_two_tailed_p(t, dof))
