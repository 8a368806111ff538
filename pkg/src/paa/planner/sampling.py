"""Sparse-sampling estimates of Q and the greedy planning policy built on them."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .. import rng as rngmod
from ..smdp import ModelPair, sample_next_states, sample_welfare
from ..welfare import power_mean_q

#: Default cap on the number of Q-estimate nodes one root evaluation may expand.
DEFAULT_NODE_BUDGET = 2_000_000


class NodeBudgetError(RuntimeError):
    def __init__(self, nodes: int, budget: int):
        super().__init__(f"sparse-sampling tree needs {nodes} nodes, budget is {budget}")
        self.nodes = nodes
        self.budget = budget


@dataclass(frozen=True)
class PlannerParams:
    """Depth ``H``, reward samples ``K``, child samples ``C`` and assessors ``n``."""

    H: int
    K: int
    C: int
    n: int

    def __post_init__(self) -> None:
        for name in ("H", "K", "C", "n"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value}")
            object.__setattr__(self, name, int(value))

    def check_population(self, N: int) -> None:
        if self.n > N:
            raise ValueError(f"n={self.n} exceeds the society size N={N}")


def tree_nodes(params: PlannerParams, num_actions: int) -> int:
    """Q-estimate nodes below (and including) one root: ``sum_{h<H} (C|A|)^h``."""
    branch = params.C * num_actions
    return sum(branch**h for h in range(params.H))


def _fixed_assessors(pair: ModelPair, params: PlannerParams, seed: int, s: int) -> np.ndarray:
    gen = rngmod.stream(seed, rngmod.ASSESSORS, s)
    return np.sort(gen.choice(pair.model.num_individuals, size=params.n, replace=False))


def _exact_backup(pair: ModelPair, h: int, assessors: np.ndarray | None) -> np.ndarray:
    """``(S, A)`` depth-``h`` backup for a point-mass kernel and deterministic rewards."""
    model = pair.model
    succ = np.argmax(pair.approx_kernel, axis=2)
    if assessors is None:
        w = model.state_welfare
    else:
        w = power_mean_q(model.utilities[assessors], model.welfare.q, axis=0)
    q = np.zeros(succ.shape)
    v = np.zeros(model.num_states)
    for _ in range(h):
        q = w[succ] + model.gamma * v[succ]
        v = q.max(axis=1)
    return q


def _sampled(pair: ModelPair, states: np.ndarray, actions: np.ndarray, h: int,
             params: PlannerParams, gen: np.random.Generator, assessors: np.ndarray | None) -> np.ndarray:
    """Vectorized estimates for a batch of nodes sharing depth ``h``."""
    if h == 0:
        return np.zeros(states.size)
    model = pair.model
    nxt = sample_next_states(pair.approx_cdf, states, actions, params.K, gen)
    rewards = sample_welfare(model, nxt, params.n, gen, assessors=assessors).mean(axis=1)
    if h == 1:
        return rewards
    A = model.num_actions
    children = sample_next_states(pair.approx_cdf, states, actions, params.C, gen)
    child_states = np.repeat(children.ravel(), A)
    child_actions = np.tile(np.arange(A), children.size)
    q_child = _sampled(pair, child_states, child_actions, h - 1, params, gen, assessors)
    v_child = q_child.reshape(states.size, params.C, A).max(axis=2)
    return rewards + model.gamma * v_child.mean(axis=1)


def _prepare(pair: ModelPair, params: PlannerParams, h: int, node_budget: int | None,
             exploit_determinism: bool, fixed_assessors: bool) -> bool:
    model = pair.model
    params.check_population(model.num_individuals)
    if h < 0:
        raise ValueError(f"depth must be non-negative, got {h}")
    if model.welfare.is_extreme:
        warnings.warn("q = ±inf carries no sampling guarantee; running exploratory estimate", stacklevel=3)
    deterministic = (exploit_determinism and pair.is_deterministic
                     and (fixed_assessors or params.n == model.num_individuals))
    if not deterministic and node_budget is not None:
        nodes = tree_nodes(PlannerParams(max(h, 1), params.K, params.C, params.n), model.num_actions)
        if nodes > node_budget:
            raise NodeBudgetError(nodes, node_budget)
    return deterministic


def q_hat_row(pair: ModelPair, s: int, h: int, params: PlannerParams, seed: int = 0, *,
              node_budget: int | None = DEFAULT_NODE_BUDGET, fixed_assessors: bool = False,
              exploit_determinism: bool = True) -> np.ndarray:
    """Depth-``h`` estimates for every action in state ``s``.

    The estimate for action ``a`` uses the stream ``(seed, PLANNER, s, a)``,
    so it equals :func:`q_hat` for the same arguments.  With
    ``fixed_assessors`` one assessor set, keyed by ``(seed, ASSESSORS, s)``,
    rates every sampled state of the tree; otherwise each sampled state is
    rated by a fresh set.

    When the approximate kernel is a point mass everywhere and rewards are
    deterministic, every sample in the tree coincides; the estimate is then
    the exact depth-``h`` backup and no tree is expanded.
    """
    model = pair.model
    model._check_index(s)
    deterministic = _prepare(pair, params, h, node_budget, exploit_determinism, fixed_assessors)
    assessors = _fixed_assessors(pair, params, seed, s) if fixed_assessors else None
    if deterministic:
        return _exact_backup(pair, h, assessors)[s].copy()
    out = np.empty(model.num_actions)
    for a in range(model.num_actions):
        gen = rngmod.stream(seed, rngmod.PLANNER, s, a)
        out[a] = _sampled(pair, np.array([s]), np.array([a]), h, params, gen, assessors)[0]
    return out


def q_hat(pair: ModelPair, s: int, a: int, h: int, params: PlannerParams, seed: int = 0, *,
          node_budget: int | None = DEFAULT_NODE_BUDGET, fixed_assessors: bool = False,
          exploit_determinism: bool = True) -> float:
    """Sparse-sampling estimate of ``Q(s, a)`` with look-ahead ``h``."""
    model = pair.model
    model._check_index(s, a)
    deterministic = _prepare(pair, params, h, node_budget, exploit_determinism, fixed_assessors)
    assessors = _fixed_assessors(pair, params, seed, s) if fixed_assessors else None
    if deterministic:
        return float(_exact_backup(pair, h, assessors)[s, a])
    gen = rngmod.stream(seed, rngmod.PLANNER, s, a)
    return float(_sampled(pair, np.array([s]), np.array([a]), h, params, gen, assessors)[0])


def paa_action(pair: ModelPair, s: int, params: PlannerParams, seed: int = 0, **kwargs) -> int:
    """Greedy action on the depth-``H`` estimates; ties go to the lowest index."""
    return int(np.argmax(q_hat_row(pair, s, params.H, params, seed, **kwargs)))
