"""Exact values on small social MDPs and Monte-Carlo welfare estimates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng as rngmod
from .smdp import Smdp

#: Trials per counter-keyed random block in Monte-Carlo rollouts.
ROLLOUT_BLOCK = 1 << 14


@dataclass(frozen=True, eq=False)
class ValueTable:
    v: np.ndarray
    q: np.ndarray
    residual: float
    iterations: int


@dataclass(frozen=True, eq=False)
class Policy:
    """Stationary stochastic policy; ``probs[s, a] = pi(a | s)``."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        p = np.array(self.probs, dtype=float)
        if p.ndim != 2:
            raise ValueError(f"policy must be a (S, A) matrix, got shape {p.shape}")
        if np.any(p < 0) or not np.allclose(p.sum(axis=1), 1.0, atol=1e-9):
            raise ValueError("policy rows must be probability distributions")
        p /= p.sum(axis=1, keepdims=True)
        p.flags.writeable = False
        object.__setattr__(self, "probs", p)

    @classmethod
    def deterministic(cls, actions, num_actions: int) -> Policy:
        actions = np.asarray(actions, dtype=np.intp)
        probs = np.zeros((actions.size, num_actions))
        probs[np.arange(actions.size), actions] = 1.0
        return cls(probs)

    @classmethod
    def uniform(cls, num_states: int, num_actions: int) -> Policy:
        return cls(np.full((num_states, num_actions), 1.0 / num_actions))

    def __call__(self, s: int) -> np.ndarray:
        return self.probs[s]


def _stop_threshold(tol: float, gamma: float) -> float:
    # ||v_{k+1} - v_k|| <= tol (1 - g) / (2 g)  implies  ||T v_{k+1} - v*|| <= tol
    return tol * (1 - gamma) / (2 * gamma)


def value_iteration(model: Smdp, tol: float = 1e-10, max_iter: int = 1_000_000) -> ValueTable:
    """Optimal values with ``||v - V*||_inf <= tol``.

    Iteration starts at the lower value bound ``u_min / (1 - gamma)`` so all
    iterates increase monotonically and stay inside the value range.
    """
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    g = model.gamma
    r = model.rewards
    P = model.kernel
    if g == 0:
        q = r.copy()
        return ValueTable(q.max(axis=1), q, 0.0, 1)
    v = np.full(model.num_states, model.value_range[0])
    threshold = _stop_threshold(tol, g)
    residual = np.inf
    it = 0
    while residual > threshold and it < max_iter:
        v_new = (r + g * (P @ v)).max(axis=1)
        residual = float(np.max(np.abs(v_new - v)))
        v = v_new
        it += 1
    q = r + g * (P @ v)
    return ValueTable(q.max(axis=1), q, residual, it + 1)


def policy_evaluation(model: Smdp, policy: Policy, tol: float = 1e-10, max_iter: int = 1_000_000) -> np.ndarray:
    """``V^pi`` to within ``tol`` in sup-norm, by iterating the policy Bellman operator."""
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    pi = policy.probs
    if pi.shape != (model.num_states, model.num_actions):
        raise ValueError(f"policy shape {pi.shape} does not match model")
    g = model.gamma
    r_pi = (pi * model.rewards).sum(axis=1)
    P_pi = np.einsum("sa,sat->st", pi, model.kernel)
    if g == 0:
        return r_pi
    v = np.full(model.num_states, model.value_range[0])
    threshold = _stop_threshold(tol, g)
    residual = np.inf
    it = 0
    while residual > threshold and it < max_iter:
        v_new = r_pi + g * (P_pi @ v)
        residual = float(np.max(np.abs(v_new - v)))
        v = v_new
        it += 1
    return r_pi + g * (P_pi @ v)


def greedy_policy(table: ValueTable) -> Policy:
    """Deterministic argmax policy; ties go to the lowest action index."""
    q = np.asarray(table.q)
    return Policy.deterministic(np.argmax(q, axis=1), q.shape[1])


def truncation_bias(model: Smdp, horizon: int) -> float:
    """Largest possible contribution of the steps a horizon-``T`` rollout omits."""
    return model.gamma**horizon * model.welfare.u_max / (1 - model.gamma)


def monte_carlo_welfare(model: Smdp, policy: Policy, s0: int, horizon: int, trials: int,
                        seed: int = 0) -> tuple[float, float]:
    """Mean discounted welfare ``sum_t gamma^t W(s_{t+1})`` over truncated rollouts.

    Each step draws the successor from the policy-averaged kernel
    ``sum_a pi(a|s) p(.|s, a)``, which gives the same state process as drawing
    the action first.

    Returns ``(estimate, standard_error)``.  Trials are split in blocks of
    ``ROLLOUT_BLOCK``; block ``b`` draws from the stream keyed by
    ``(seed, ROLLOUT, s0, b)``, so the result does not depend on scheduling.
    """
    model._check_index(s0)
    if horizon < 1 or trials < 1:
        raise ValueError("horizon and trials must both be at least 1")
    S = model.num_states
    # welfare depends on states only, so the action can be summed out of each step
    P_pi = np.einsum("sa,sat->st", policy.probs, model.kernel)
    cols = np.cumsum(P_pi, axis=1).T.copy()  # cols[j, s] = P(next <= j | s)
    W = model.state_welfare
    discounts = model.gamma ** np.arange(horizon)
    returns = np.empty(trials)
    for b, start in enumerate(range(0, trials, ROLLOUT_BLOCK)):
        size = min(ROLLOUT_BLOCK, trials - start)
        gen = rngmod.stream(seed, rngmod.ROLLOUT, s0, b)
        s = np.full(size, s0, dtype=np.intp)
        total = np.zeros(size)
        for t in range(horizon):
            u = gen.random(size)
            nxt = np.zeros(size, dtype=np.intp)
            for j in range(S - 1):
                nxt += u >= cols[j][s]
            s = nxt
            total += discounts[t] * W[s]
        returns[start:start + size] = total
    est = float(returns.mean())
    se = float(returns.std(ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0
    return est, se
