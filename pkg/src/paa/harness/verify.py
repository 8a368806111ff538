"""Empirical soundness suites for the concentration bounds, the value identity and the planner."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .. import rng as rngmod
from ..oracle import Policy, monte_carlo_welfare, policy_evaluation, truncation_bias, value_iteration
from ..planner.params import ToleranceSpec, q_error_bound
from ..planner.sampling import PlannerParams, q_hat_row
from ..smdp import expectation_gap_bound, perturb_kernel, sup_kl
from ..welfare import (
    WelfareConfig,
    hoeffding_serfling_bound,
    power_mean_concentration_bound,
    power_mean_q,
)
from .scenario import random_model

SUITES = ("lemma1", "lemma2", "lemma3", "lemma5", "planner")


@dataclass
class Verdict:
    case: str
    observed: float
    bound: float
    passed: bool
    detail: dict | None = None

    def as_dict(self) -> dict:
        d = asdict(self)
        if d["detail"] is None:
            del d["detail"]
        return d


def _binomial_slack(p: float, trials: int) -> float:
    return 3.0 * math.sqrt(p * (1 - p) / trials)


# -- value identity ---------------------------------------------------------

def lemma1_suite(seed: int = 0, num_models: int = 20, num_policies: int = 10, trials: int = 100_000,
                 num_states: int = 8, num_actions: int = 3, num_individuals: int = 50, gamma: float = 0.9,
                 qs=(-2.0, 0.0, 1.0, 2.0), u_range=(0.1, 1.0), tail: float = 1e-3) -> list[Verdict]:
    """Monte-Carlo discounted welfare against exact policy evaluation.

    The rollout horizon ``T`` is the smallest with ``gamma^T dU / (1 - gamma) <= tail``;
    each comparison allows ``3`` standard errors plus the omitted tail.
    """
    dU = u_range[1] - u_range[0]
    T = max(1, math.ceil(math.log(tail * (1 - gamma) / dU) / math.log(gamma))) if gamma > 0 else 1
    out = []
    for m in range(num_models):
        q = qs[m % len(qs)]
        welfare = WelfareConfig(q, *u_range)
        model = random_model(num_states, num_actions, num_individuals, welfare, gamma,
                             rngmod.derive_seed(seed, 1, m))
        pgen = rngmod.stream(seed, rngmod.POLICY, m)
        for j in range(num_policies):
            probs = pgen.dirichlet(np.ones(num_actions), size=num_states)
            policy = Policy(probs)
            s0 = int(pgen.integers(num_states))
            v = policy_evaluation(model, policy, tol=1e-12)[s0]
            est, se = monte_carlo_welfare(model, policy, s0, T, trials, seed=rngmod.derive_seed(seed, 2, m, j))
            slack = 3 * se + truncation_bias(model, T)
            gap = abs(est - v)
            out.append(Verdict(f"model{m}/q={q:g}/policy{j}/s0={s0}", gap, slack, gap <= slack,
                               {"mc": est, "exact": float(v), "std_error": se, "horizon": T}))
    return out


def lemma1_deterministic(seed: int = 0, horizon: int = 200) -> list[Verdict]:
    """Deterministic model and policy: a single rollout equals the exact value up to the tail."""
    welfare = WelfareConfig(1.0, 0.1, 1.0)
    model = random_model(6, 2, 10, welfare, 0.9, seed, deterministic=True)
    policy = Policy.deterministic(np.zeros(6, dtype=int), 2)
    v = policy_evaluation(model, policy, tol=1e-13)
    out = []
    for s in range(6):
        est, se = monte_carlo_welfare(model, policy, s, horizon, 4, seed=seed)
        bias = truncation_bias(model, horizon) + 1e-12
        out.append(Verdict(f"deterministic/s0={s}", abs(est - v[s]), bias, abs(est - v[s]) <= bias and se <= 1e-12))
    return out


# -- subsampling bounds -----------------------------------------------------

def _subsamples(population: np.ndarray, n: int, count: int, gen: np.random.Generator) -> np.ndarray:
    keys = gen.random((count, population.size))
    idx = np.argpartition(keys, n - 1, axis=1)[:, :n]
    return population[idx]


def lemma2_suite(seed: int = 0, N: int = 200, u_range=(0.1, 1.0),
                 qs=(-2.0, 0.0, 0.5, 1.0, 2.0, math.inf, -math.inf), ns=(20, 50, 100, 199),
                 epsilons=(0.02, 0.05, 0.1), count: int = 10_000) -> list[Verdict]:
    """Power mean of a subsample drawn without replacement versus the whole population."""
    gen = rngmod.stream(seed, rngmod.VERIFY, 2)
    population = gen.uniform(*u_range, size=N)
    out = []
    for n in ns:
        sub = _subsamples(population, n, count, gen)
        for q in qs:
            welfare = WelfareConfig(q, *u_range)
            full = power_mean_q(population, q)
            dev = np.abs(power_mean_q(sub, q, axis=1) - full)
            for eps in epsilons:
                bound = power_mean_concentration_bound(n, N, eps, welfare)
                freq = float(np.mean(dev >= eps))
                limit = bound + _binomial_slack(bound, count)
                out.append(Verdict(f"q={q:g}/n={n}/eps={eps:g}", freq, limit, freq <= limit,
                                   {"bound": bound, "population_welfare": full}))
    return out


def lemma5_suite(seed: int = 0, N: int = 200, u_range=(0.1, 1.0), ns=(20, 50, 100, 199),
                 epsilons=(0.02, 0.05, 0.1), count: int = 10_000) -> list[Verdict]:
    """Raw sample mean without replacement against the Hoeffding–Serfling bound."""
    gen = rngmod.stream(seed, rngmod.VERIFY, 5)
    population = gen.uniform(*u_range, size=N)
    mu = population.mean()
    out = []
    for n in ns:
        dev = np.abs(_subsamples(population, n, count, gen).mean(axis=1) - mu)
        for eps in epsilons:
            bound = hoeffding_serfling_bound(n, N, eps, *u_range)
            freq = float(np.mean(dev >= eps))
            limit = bound + _binomial_slack(bound, count)
            out.append(Verdict(f"n={n}/eps={eps:g}", freq, limit, freq <= limit, {"bound": bound}))
    return out


# -- model error ------------------------------------------------------------

def _random_pair(gen: np.random.Generator):
    size = int(gen.integers(1, 11))
    style = int(gen.integers(4))
    if style == 0:
        p = gen.dirichlet(np.full(size, gen.choice([0.1, 1.0, 10.0])))
        p_hat = gen.dirichlet(np.full(size, gen.choice([0.1, 1.0, 10.0])))
    elif style == 1:
        # close pair: small perturbation of one distribution
        p = gen.dirichlet(np.ones(size))
        lam = gen.uniform(0, 0.2)
        p_hat = (1 - lam) * p + lam * gen.dirichlet(np.ones(size))
    elif style == 2:
        # sparse p, full-support p_hat
        p = np.zeros(size)
        p[gen.integers(size)] = 1.0
        p_hat = gen.dirichlet(np.ones(size))
    else:
        # p_hat may miss part of p's support (infinite divergence)
        p = gen.dirichlet(np.ones(size))
        p_hat = gen.dirichlet(np.ones(size))
        p_hat[gen.integers(size)] = 0.0
        p_hat = p_hat / p_hat.sum() if p_hat.sum() > 0 else np.full(size, 1.0 / size)
    return p, p_hat


def lemma3_suite(seed: int = 0, cases: int = 10_000, slack: float = 1e-12) -> list[Verdict]:
    """Expectation gap under a divergence budget; deterministic, so zero violations are required."""
    gen = rngmod.stream(seed, rngmod.VERIFY, 3)
    out = []
    for i in range(cases):
        p, p_hat = _random_pair(gen)
        f = gen.uniform(-2.0, 2.0, size=p.size)
        lo, hi = f.min(), f.max()
        if gen.random() < 0.5:
            lo -= gen.uniform(0, 1)
            hi += gen.uniform(0, 1)
        d = sup_kl(p[None, None, :], p_hat[None, None, :])
        gap = abs(float(p @ f - p_hat @ f))
        bound = expectation_gap_bound(lo, hi, d)
        out.append(Verdict(f"case{i}/size={p.size}", gap, bound, gap <= bound + slack))
    return out


# -- planner ----------------------------------------------------------------

@dataclass(frozen=True)
class PlannerTrial:
    lam: float
    d: float
    alpha_H: float
    phi_H: float
    gaps: np.ndarray  # (seeds, S, A)

    @property
    def exceed_freq(self) -> np.ndarray:
        return (self.gaps > self.alpha_H).mean(axis=0)


def planner_trial(lam: float, seed: int = 0, seeds: int = 500, num_states: int = 6, num_actions: int = 2,
                  num_individuals: int = 40, params: PlannerParams = PlannerParams(3, 16, 16, 20),
                  gamma: float = 0.5, welfare: WelfareConfig = WelfareConfig(1.0, 0.1, 1.0),
                  delta: float = 0.1) -> PlannerTrial:
    """``|Q* - Q_hat^H|`` over many planner seeds on one seeded instance."""
    model = random_model(num_states, num_actions, num_individuals, welfare, gamma, rngmod.derive_seed(seed, 6))
    pair = perturb_kernel(model, lam)
    q_star = value_iteration(model, tol=1e-12).q
    tol = ToleranceSpec(None, delta, gamma, welfare, num_individuals, num_actions, d=pair.realized_d)
    alpha, phi = q_error_bound(params, tol)
    gaps = np.empty((seeds, num_states, num_actions))
    for r in range(seeds):
        run_seed = rngmod.derive_seed(seed, 7, r)
        for s in range(num_states):
            gaps[r, s] = np.abs(q_star[s] - q_hat_row(pair, s, params.H, params, run_seed))
    return PlannerTrial(lam, pair.realized_d, alpha, phi, gaps)


def planner_suite(seed: int = 0, lambdas=(0.0, 0.05), seeds: int = 500, **kwargs) -> list[Verdict]:
    out = []
    for lam in lambdas:
        trial = planner_trial(lam, seed, seeds, **kwargs)
        qs = np.quantile(trial.gaps, [0.5, 0.9, 0.99, 1.0])
        quant = {"q50": qs[0], "q90": qs[1], "q99": qs[2], "max": qs[3]}
        freq = trial.exceed_freq
        for (s, a), f in np.ndenumerate(freq):
            if trial.phi_H < 1:
                limit = trial.phi_H + _binomial_slack(trial.phi_H, seeds)
                passed = bool(f <= limit)
            else:
                limit, passed = 1.0, True
            out.append(Verdict(f"lambda={lam:g}/s={s}/a={a}", float(f), limit, passed,
                               {"alpha_H": trial.alpha_H, "phi_H": trial.phi_H, "d": trial.d,
                                **{k: float(v) for k, v in quant.items()}}))
    return out


def run_suite(name: str, seed: int = 0) -> list[Verdict]:
    if name == "lemma1":
        return lemma1_deterministic(seed) + lemma1_suite(seed)
    if name == "lemma2":
        return lemma2_suite(seed)
    if name == "lemma3":
        return lemma3_suite(seed)
    if name == "lemma5":
        return lemma5_suite(seed)
    if name == "planner":
        return planner_suite(seed)
    raise ValueError(f"unknown suite {name!r}; expected one of {', '.join(SUITES)}")
