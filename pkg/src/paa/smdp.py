"""Finite social MDPs, sampled rewards and model-error measurement."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import rel_entr

from .rng import as_generator
from .welfare import WelfareConfig, power_mean_q

#: Row sums closer than this to one are accepted as they are.
ROW_TOLERANCE = 1e-9
#: Row sums drifting further than this from one are rejected.
ROW_HARD_LIMIT = 1e-6


class KernelError(ValueError):
    """A transition kernel is malformed; the message names the offending row."""


def validate_kernel(probs, name: str = "kernel") -> np.ndarray:
    """Return a read-only ``(S, A, S)`` float copy of ``probs``.

    Rows whose sum drifts from one by more than ``ROW_TOLERANCE`` but no more
    than ``ROW_HARD_LIMIT`` are renormalized with a warning; other rows are
    kept bit-for-bit.
    """
    p = np.array(probs, dtype=float)
    if p.ndim != 3 or p.shape[0] < 1 or p.shape[1] < 1 or p.shape[2] != p.shape[0]:
        raise KernelError(f"{name} must have shape (S, A, S), got {p.shape}")
    if not np.all(np.isfinite(p)):
        raise KernelError(f"{name} contains non-finite entries")
    bad = np.argwhere(p < 0)
    if bad.size:
        s, a, _ = bad[0]
        raise KernelError(f"{name}[{s}][{a}] has a negative probability")
    sums = p.sum(axis=2)
    drift = np.abs(sums - 1.0)
    if np.any(drift > ROW_HARD_LIMIT):
        s, a = np.argwhere(drift > ROW_HARD_LIMIT)[0]
        raise KernelError(f"{name}[{s}][{a}] sums to {sums[s, a]:.12g}, expected 1")
    drifting = drift > ROW_TOLERANCE
    if np.any(drifting):
        warnings.warn(f"{name}: renormalized {int(drifting.sum())} row(s) with sum drift up to {drift.max():.3g}",
                      stacklevel=2)
        p[drifting] /= sums[drifting][:, None]
    p.flags.writeable = False
    return p


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Smdp:
    """Social MDP: true kernel ``p``, utilities ``u[i, s]``, welfare rule and discount.

    Rewards are the expected welfare of the *next* state.
    """

    kernel: np.ndarray
    utilities: np.ndarray
    welfare: WelfareConfig
    gamma: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "kernel", validate_kernel(self.kernel))
        u = _readonly(self.utilities)
        if u.ndim != 2 or u.shape[0] < 1 or u.shape[1] != self.kernel.shape[0]:
            raise ValueError(f"utilities must have shape (N, {self.kernel.shape[0]}), got {u.shape}")
        lo, hi = self.welfare.u_min, self.welfare.u_max
        outside = np.argwhere((u < lo) | (u > hi))
        if outside.size:
            i, s = outside[0]
            raise ValueError(f"utilities[{i}][{s}] = {u[i, s]} outside [{lo}, {hi}]")
        if self.welfare.q < 1 and np.any(u == 0):
            raise ValueError(f"zero utilities are not allowed with q={self.welfare.q}")
        object.__setattr__(self, "utilities", u)
        gamma = float(self.gamma)
        if not 0 <= gamma < 1:
            raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
        object.__setattr__(self, "gamma", gamma)

    @property
    def num_states(self) -> int:
        return self.kernel.shape[0]

    @property
    def num_actions(self) -> int:
        return self.kernel.shape[1]

    @property
    def num_individuals(self) -> int:
        return self.utilities.shape[0]

    @cached_property
    def state_welfare(self) -> np.ndarray:
        """``W_q`` of the whole society in every state."""
        return _readonly(power_mean_q(self.utilities, self.welfare.q, axis=0))

    @cached_property
    def rewards(self) -> np.ndarray:
        """``(S, A)`` matrix of true rewards."""
        return _readonly(self.kernel @ self.state_welfare)

    @property
    def value_range(self) -> tuple[float, float]:
        g = self.gamma
        return self.welfare.u_min / (1 - g), self.welfare.u_max / (1 - g)

    def _check_index(self, s: int, a: int | None = None) -> None:
        if not 0 <= s < self.num_states:
            raise IndexError(f"state {s} out of range 0..{self.num_states - 1}")
        if a is not None and not 0 <= a < self.num_actions:
            raise IndexError(f"action {a} out of range 0..{self.num_actions - 1}")


def true_reward(model: Smdp, s: int, a: int) -> float:
    """Expected welfare of the state reached from ``s`` under action ``a``."""
    model._check_index(s, a)
    return float(model.rewards[s, a])


def sup_kl(p, p_hat) -> float:
    """Largest row-wise ``KL(p(.|s,a) || p_hat(.|s,a))``; ``inf`` if ``p`` is not
    absolutely continuous with respect to ``p_hat`` on some row."""
    p = np.asarray(p, dtype=float)
    p_hat = np.asarray(p_hat, dtype=float)
    if p.shape != p_hat.shape:
        raise ValueError(f"kernel shapes differ: {p.shape} vs {p_hat.shape}")
    # rounding can leave a tiny negative sum for identical rows
    return max(0.0, float(rel_entr(p, p_hat).sum(axis=-1).max()))


def expectation_gap_bound(f_min: float, f_max: float, d: float) -> float:
    """Largest possible ``|E_p f - E_q f|`` when ``KL(p || q) <= d`` and
    ``f`` takes values in ``[f_min, f_max]``."""
    if d < 0 or math.isnan(d):
        raise ValueError(f"divergence must be non-negative, got {d}")
    if f_min > f_max:
        raise ValueError(f"need f_min <= f_max, got {f_min} > {f_max}")
    tv_sq = 1.0 if math.isinf(d) else min(d / 2, -math.expm1(-d))
    return 2.0 * (f_max - f_min) * math.sqrt(tv_sq)


@dataclass(frozen=True, eq=False)
class ModelPair:
    """A social MDP together with the approximate kernel a planner uses."""

    model: Smdp
    approx_kernel: np.ndarray
    realized_d: float = field(init=False)

    def __post_init__(self) -> None:
        approx = validate_kernel(self.approx_kernel, name="approx_kernel")
        if approx.shape != self.model.kernel.shape:
            raise ValueError(f"approximate kernel shape {approx.shape} != {self.model.kernel.shape}")
        object.__setattr__(self, "approx_kernel", approx)
        object.__setattr__(self, "realized_d", sup_kl(self.model.kernel, approx))

    @classmethod
    def exact(cls, model: Smdp) -> ModelPair:
        return cls(model, model.kernel)

    @property
    def true_kernel(self) -> np.ndarray:
        return self.model.kernel

    @cached_property
    def approx_cdf(self) -> np.ndarray:
        c = np.cumsum(self.approx_kernel, axis=2)
        c[..., -1] = 1.0
        return c

    @cached_property
    def is_deterministic(self) -> bool:
        """True when every approximate row is a point mass."""
        return bool(np.all(self.approx_kernel.max(axis=2) == 1.0))


def perturb_kernel(model: Smdp, lam: float, mode: str = "uniform_mixture") -> ModelPair:
    """Mix every row of the true kernel with the uniform distribution:
    ``p_hat = (1 - lam) p + lam / S``."""
    if mode != "uniform_mixture":
        raise ValueError(f"unknown perturbation mode {mode!r}")
    if not 0 <= lam <= 1:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    if lam == 0:
        return ModelPair.exact(model)
    p = model.kernel
    approx = (1 - lam) * p + lam / p.shape[2]
    return ModelPair(model, approx)


def sample_next_states(cdf: np.ndarray, states, actions, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``count`` successors for each ``(state, action)``; returns shape ``(M, count)``."""
    states = np.asarray(states, dtype=np.intp)
    actions = np.asarray(actions, dtype=np.intp)
    rows = cdf[states, actions]  # (M, S)
    u = rng.random((states.size, count))
    # first index whose cumulative probability exceeds u
    nxt = (u[:, :, None] >= rows[:, None, :]).sum(axis=2)
    return np.minimum(nxt, cdf.shape[2] - 1)


def sample_welfare(model: Smdp, next_states: np.ndarray, n: int, rng: np.random.Generator,
                   assessors: np.ndarray | None = None) -> np.ndarray:
    """Welfare reported for each sampled state by ``n`` assessors.

    Without ``assessors`` a fresh uniform subset is drawn for every sample;
    with ``n == N`` the whole society is polled.
    """
    N = model.num_individuals
    if assessors is not None:
        sub = model.utilities[assessors]
        return power_mean_q(sub[:, next_states], model.welfare.q, axis=0)
    if n == N:
        return model.state_welfare[next_states]
    flat = next_states.ravel()
    keys = rng.random((flat.size, N))
    idx = np.argpartition(keys, n - 1, axis=1)[:, :n]
    values = model.utilities[idx, flat[:, None]]
    return power_mean_q(values, model.welfare.q, axis=1).reshape(next_states.shape)


def empirical_reward(pair: ModelPair, s: int, a: int, K: int, n: int, rng=None,
                     fixed_assessors=None) -> float:
    """Monte-Carlo reward estimate from ``K`` successors drawn from the approximate kernel.

    Each successor is rated by a freshly drawn set of ``n`` assessors unless
    ``fixed_assessors`` (an index array or :class:`AssessorSet`) is given.
    """
    model = pair.model
    model._check_index(s, a)
    if K < 1:
        raise ValueError(f"K must be at least 1, got {K}")
    if not 1 <= n <= model.num_individuals:
        raise ValueError(f"need 1 <= n <= N={model.num_individuals}, got n={n}")
    rng = as_generator(rng)
    nxt = sample_next_states(pair.approx_cdf, [s], [a], K, rng)[0]
    fixed = None if fixed_assessors is None else np.asarray(getattr(fixed_assessors, "indices", fixed_assessors))
    w = sample_welfare(model, nxt, n, rng, assessors=fixed)
    return float(np.mean(w))
