"""Shielding a black-box policy: keep only actions whose estimated value clears a safety floor."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import rng as rngmod
from .oracle import value_iteration
from .planner.sampling import DEFAULT_NODE_BUDGET, PlannerParams, q_hat_row
from .smdp import ModelPair, empirical_reward
from .welfare import WelfareConfig, gamma_factor

BlackBoxPolicy = Callable[[int], np.ndarray]


def alpha_threshold(d: float, N: int, n: int, K: int, C: int, H: int, gamma: float,
                    welfare: WelfareConfig, delta: float, num_actions: int) -> float:
    """Margin added to the floor so that clearing it certifies safety w.p. ``1 - delta``.

    Sum of a model-error term, assessor, reward and child sampling terms, and
    the truncation term ``gamma^H dU / (1 - gamma)``.
    """
    if welfare.is_extreme:
        raise ValueError("the safety margin requires a finite welfare exponent q")
    if n > N:
        raise ValueError(f"n={n} exceeds the society size N={N}")
    if min(N, n, K, C, H, num_actions) < 1:
        raise ValueError("N, n, K, C, H and |A| must all be at least 1")
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if not 0 <= gamma < 1:
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
    if d < 0:
        raise ValueError(f"d must be non-negative, got {d}")
    dU = welfare.delta_u
    g = gamma
    d_prime = d_prime_of(d)
    log_term = math.log(12) + (H - 1) * math.log(C * num_actions) - math.log(delta)
    if n == N or dU == 0:
        assessor = 0.0
    else:
        g_max = gamma_factor(welfare.u_max, welfare.u_min, welfare.u_max, welfare.q)
        assessor = math.sqrt((N - n) / (n * N * g_max))
    reward = math.sqrt(dU**2 / (2 * K))
    child = g * math.sqrt(dU**2 / (2 * C * (1 - g) ** 2))
    return (2 * dU * d_prime / (1 - g) ** 2
            + math.sqrt(log_term) / (1 - g) * (assessor + reward + child)
            + g**H * dU / (1 - g))


def d_prime_of(d: float) -> float:
    if math.isinf(d):
        return 1.0
    return math.sqrt(min(d / 2, -math.expm1(-d)))


@dataclass(frozen=True)
class SafeguardConfig:
    omega: float
    delta: float
    params: PlannerParams
    gamma_max: float
    d_prime: float
    alpha: float

    @classmethod
    def build(cls, pair: ModelPair, omega: float, delta: float, params: PlannerParams,
              d: float | None = None) -> SafeguardConfig:
        """Config for ``pair``; ``d`` defaults to the realized sup-KL of the pair."""
        model = pair.model
        w = model.welfare
        lo, hi = model.value_range
        if not lo <= omega <= hi:
            raise ValueError(f"omega must lie in [{lo}, {hi}], got {omega}")
        params.check_population(model.num_individuals)
        d = pair.realized_d if d is None else d
        alpha = alpha_threshold(d, model.num_individuals, params.n, params.K, params.C, params.H,
                                model.gamma, w, delta, model.num_actions)
        g_max = gamma_factor(w.u_max, w.u_min, w.u_max, w.q) if w.delta_u > 0 else math.inf
        return cls(omega, delta, params, g_max, d_prime_of(d), alpha)

    def floor(self, gamma: float, u_max: float) -> float:
        """Estimates must reach ``gamma * omega + u_max + alpha``."""
        return gamma * self.omega + u_max + self.alpha


def safe_action_set(pair: ModelPair, s: int, config: SafeguardConfig, seed: int = 0, *,
                    node_budget: int | None = DEFAULT_NODE_BUDGET, fixed_assessors: bool = False,
                    exploit_determinism: bool = True) -> frozenset[int]:
    """Actions whose depth-``H`` estimate clears the floor; possibly empty."""
    model = pair.model
    q = q_hat_row(pair, s, config.params.H, config.params, seed, node_budget=node_budget,
                  fixed_assessors=fixed_assessors, exploit_determinism=exploit_determinism)
    floor = config.floor(model.gamma, model.welfare.u_max)
    return frozenset(int(a) for a in np.flatnonzero(q >= floor))


def restrict_row(row, safe: frozenset[int] | set[int], literal: bool = False) -> np.ndarray:
    """Drop mass on unsafe actions.

    The kept mass ``Pi`` is renormalized to one.  With ``literal=True`` the
    kept entries are divided by ``1 - Pi`` instead, which generally does not
    give a distribution; that variant exists only for auditing.
    """
    row = np.asarray(row, dtype=float)
    mask = np.zeros(row.size, dtype=bool)
    mask[list(safe)] = True
    kept = np.where(mask, row, 0.0)
    mass = kept.sum()
    if mass == 0:
        return np.zeros_like(row)
    if np.all(row[~mask] == 0):
        return row.copy()
    return kept / ((1 - mass) if literal else mass)


def restrict_policy(probs, safe_sets, literal: bool = False) -> np.ndarray:
    """Row-wise :func:`restrict_row` for an ``(S, A)`` policy matrix."""
    probs = np.asarray(probs, dtype=float)
    if len(safe_sets) != probs.shape[0]:
        raise ValueError("need one safe set per state")
    return np.stack([restrict_row(probs[s], safe_sets[s], literal) for s in range(probs.shape[0])])


@dataclass(frozen=True)
class StepOutcome:
    action: int | None
    safe_set: frozenset[int] | None = None

    @property
    def halted(self) -> bool:
        return self.action is None


def sample_action(row, gen: np.random.Generator) -> int | None:
    """Inverse-CDF draw from ``row`` (normalized by its sum); ``None`` for an all-zero row."""
    row = np.asarray(row, dtype=float)
    total = row.sum()
    if total <= 0:
        return None
    cdf = np.cumsum(row / total)
    a = int(np.searchsorted(cdf, gen.random(), side="right"))
    # never land on a zero-probability tail action through rounding
    return min(a, int(np.flatnonzero(row > 0)[-1]))


def plain_step(s: int, pi: BlackBoxPolicy, seed: int) -> int:
    """Unshielded step; uses the same action stream as :func:`safe_step`."""
    return sample_action(pi(s), rngmod.stream(seed, rngmod.ACTION, s))


def safe_step(pair: ModelPair, s: int, pi: BlackBoxPolicy, config: SafeguardConfig, seed: int = 0, *,
              literal: bool = False, **kwargs) -> StepOutcome:
    """One shielded step: estimate, filter, restrict, sample, or halt."""
    safe = safe_action_set(pair, s, config, rngmod.derive_seed(seed, rngmod.SAFEGUARD), **kwargs)
    row = restrict_row(pi(s), safe, literal)
    action = sample_action(row, rngmod.stream(seed, rngmod.ACTION, s))
    return StepOutcome(action, safe)


class UniformPolicy:
    def __init__(self, num_actions: int):
        self.row = np.full(num_actions, 1.0 / num_actions)

    def __call__(self, s: int) -> np.ndarray:
        return self.row


class MyopicPolicy:
    """Greedy on a sampled immediate-reward estimate, computed once per state."""

    def __init__(self, pair: ModelPair, K: int, n: int, seed: int = 0):
        model = pair.model
        self.rows = np.zeros((model.num_states, model.num_actions))
        for s in range(model.num_states):
            est = [empirical_reward(pair, s, a, K, n, rngmod.stream(seed, rngmod.POLICY, s, a))
                   for a in range(model.num_actions)]
            self.rows[s, int(np.argmax(est))] = 1.0

    def __call__(self, s: int) -> np.ndarray:
        return self.rows[s]


class AdversarialPolicy:
    """Picks the action with the worst expected optimal successor value."""

    def __init__(self, pair: ModelPair):
        model = pair.model
        v = value_iteration(model).v
        succ = model.kernel @ v
        self.rows = np.zeros((model.num_states, model.num_actions))
        self.rows[np.arange(model.num_states), np.argmin(succ, axis=1)] = 1.0

    def __call__(self, s: int) -> np.ndarray:
        return self.rows[s]


POLICIES = ("random", "myopic", "adversarial")


def make_policy(name: str, pair: ModelPair, seed: int = 0, K: int = 32, n: int | None = None) -> BlackBoxPolicy:
    if name == "random":
        return UniformPolicy(pair.model.num_actions)
    if name == "myopic":
        return MyopicPolicy(pair, K, n or pair.model.num_individuals, seed)
    if name == "adversarial":
        return AdversarialPolicy(pair)
    raise ValueError(f"unknown policy {name!r}; expected one of {', '.join(POLICIES)}")


@dataclass
class Episode:
    states: list[int]
    actions: list[int]
    welfare: list[float]
    halted: bool


def run_episode(pair: ModelPair, s0: int, pi: BlackBoxPolicy, length: int, seed: int,
                config: SafeguardConfig | None = None, literal: bool = False, **kwargs) -> Episode:
    """Roll out ``length`` steps in the true model, shielded when ``config`` is given.

    Step ``t`` uses master seed ``derive_seed(seed, t)`` for its action and
    estimates and ``(seed, ROLLOUT, t)`` for the transition, so shielded and
    unshielded runs share their randomness.
    """
    model = pair.model
    cdf = np.cumsum(model.kernel, axis=2)
    cdf[..., -1] = 1.0
    s = s0
    states, actions, welfare = [s0], [], []
    for t in range(length):
        step_seed = rngmod.derive_seed(seed, t)
        if config is None:
            a = plain_step(s, pi, step_seed)
        else:
            out = safe_step(pair, s, pi, config, step_seed, literal=literal, **kwargs)
            if out.halted:
                return Episode(states, actions, welfare, True)
            a = out.action
        u = rngmod.stream(seed, rngmod.ROLLOUT, t).random()
        s = int(min(np.searchsorted(cdf[s, a], u, side="right"), model.num_states - 1))
        actions.append(a)
        states.append(s)
        welfare.append(float(model.state_welfare[s]))
    return Episode(states, actions, welfare, False)
