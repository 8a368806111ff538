"""Command implementations shared by the CLI and the tests."""

from __future__ import annotations

import math
import time

import numpy as np

from .. import rng as rngmod
from ..oracle import value_iteration
from ..planner.params import (
    InfeasibleToleranceError,
    ToleranceSpec,
    compute_aa_params,
    compute_paa_params,
    divergence_limit,
    min_feasible_epsilon,
    q_error_bound,
)
from ..planner.sampling import DEFAULT_NODE_BUDGET, PlannerParams, q_hat_row
from ..safeguard import SafeguardConfig, make_policy, run_episode
from .reports import Report, run_id
from .scenario import Scenario, ScenarioError
from .verify import run_suite


def _report(command: str, scenario: Scenario | None, seed: int, *extra) -> Report:
    rep = Report(run_id(command, scenario.canonical if scenario else "", seed, *extra), seed)
    if scenario is not None:
        rep.add("realized_d", scenario.pair.realized_d)
    return rep


def tolerance_for(scenario: Scenario, epsilon: float | None, delta: float | None) -> ToleranceSpec:
    m = scenario.model
    return ToleranceSpec(epsilon, delta if delta is not None else 0.0, m.gamma, m.welfare,
                         m.num_individuals, m.num_actions, d=scenario.pair.realized_d)


def _planner_params(scenario: Scenario) -> PlannerParams:
    if scenario.planner is None or scenario.planner.params is None:
        raise ScenarioError("$.planner", "explicit H, K, C and n are required for this command")
    return scenario.planner.params


def cmd_params(scenario: Scenario, epsilon: float | None = None, delta: float | None = None,
               k_override: int | None = None) -> Report:
    """Planner resources for the requested tolerance, or the smallest feasible one."""
    block = scenario.planner
    epsilon = epsilon if epsilon is not None else (block.epsilon if block else None)
    delta = delta if delta is not None else (block.delta if block else None)
    if epsilon is None:
        raise ScenarioError("$.planner.epsilon", "required (or pass --epsilon)")
    rep = _report("params", scenario, scenario.seed, epsilon, delta, k_override)
    tol = tolerance_for(scenario, epsilon, delta)
    dU = tol.welfare.delta_u
    rep.add("d_limit", divergence_limit(epsilon, tol.gamma, dU))
    rep.add("min_epsilon", min_feasible_epsilon(tol.d, tol.gamma, dU))
    try:
        if delta is None:
            params, budget = compute_aa_params(tol)
        else:
            params, budget = compute_paa_params(tol, k_override)
    except InfeasibleToleranceError:
        rep.add("feasible", False)
        raise
    rep.add("feasible", True)
    for name in ("H", "K", "C", "n"):
        rep.add(name, getattr(params, name))
    for name in ("beta", "k", "eps1", "eps2", "eps3", "eps4", "eps5", "delta1", "delta3", "delta5",
                 "alpha_H", "phi_H"):
        value = getattr(budget, name)
        if value is not None:
            rep.add(name, value)
    rep.summary.update(H=params.H, K=params.K, C=params.C, n=params.n, guarantee="AA" if delta is None else "PAA")
    return rep


def cmd_oracle(scenario: Scenario) -> Report:
    table = value_iteration(scenario.model, tol=1e-12)
    rep = _report("oracle", scenario, scenario.seed)
    for s in range(scenario.model.num_states):
        rep.add("v_star", table.v[s], state=s)
        for a in range(scenario.model.num_actions):
            rep.add("q_star", table.q[s, a], state=s, action=a)
    rep.summary.update(iterations=table.iterations, residual=table.residual)
    return rep


def _error_bounds(scenario: Scenario, params: PlannerParams) -> tuple[float, float] | None:
    block = scenario.planner
    if block is None or block.delta is None or scenario.model.welfare.is_extreme:
        return None
    return q_error_bound(params, tolerance_for(scenario, None, block.delta))


def cmd_plan(scenario: Scenario, seed: int, *, node_budget: int | None = DEFAULT_NODE_BUDGET,
             fixed_assessors: bool = False) -> Report:
    """Depth-``H`` estimates, greedy action and its exact loss in every state."""
    params = _planner_params(scenario)
    model = scenario.model
    table = value_iteration(model, tol=1e-12)
    rep = _report("plan", scenario, seed, fixed_assessors)
    bounds = _error_bounds(scenario, params)
    if bounds is not None:
        rep.add("alpha_H", bounds[0])
        rep.add("phi_H", bounds[1])
    start = time.perf_counter()
    for s in range(model.num_states):
        q = q_hat_row(scenario.pair, s, params.H, params, seed, node_budget=node_budget,
                      fixed_assessors=fixed_assessors)
        a = int(np.argmax(q))
        for b in range(model.num_actions):
            rep.add("q_hat", q[b], state=s, action=b)
        rep.add("v_star", table.v[s], state=s)
        rep.add("gap", table.v[s] - table.q[s, a], state=s, action=a)
    rep.summary["seconds"] = round(time.perf_counter() - start, 3)
    return rep


def cmd_evaluate(scenario: Scenario, seed: int, repetitions: int, *, epsilon: float | None = None,
                 node_budget: int | None = DEFAULT_NODE_BUDGET, fixed_assessors: bool = False) -> Report:
    """Greedy-choice loss ``V*(s) - Q*(s, a)`` over repeated planner runs in every state.

    If every estimate at ``s`` is within ``alpha_H``, the loss is at most
    ``2 alpha_H``; a union bound over actions gives failure probability at
    most ``|A| phi_H``.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be at least 1")
    params = _planner_params(scenario)
    model = scenario.model
    epsilon = epsilon if epsilon is not None else (scenario.planner.epsilon if scenario.planner else None)
    table = value_iteration(model, tol=1e-12)
    rep = _report("evaluate", scenario, seed, repetitions, epsilon, fixed_assessors)
    bounds = _error_bounds(scenario, params)
    gaps = np.empty((model.num_states, repetitions))
    for r in range(repetitions):
        run_seed = rngmod.derive_seed(seed, r)
        for s in range(model.num_states):
            q = q_hat_row(scenario.pair, s, params.H, params, run_seed, node_budget=node_budget,
                          fixed_assessors=fixed_assessors)
            a = int(np.argmax(q))
            gaps[s, r] = table.v[s] - table.q[s, a]
            rep.add(f"gap[{r}]", gaps[s, r], state=s, action=a)
    for s in range(model.num_states):
        rep.add("gap_mean", gaps[s].mean(), state=s)
        rep.add("gap_max", gaps[s].max(), state=s)
        if epsilon is not None:
            rep.add("frac_gap_above_epsilon", np.mean(gaps[s] > epsilon), state=s)
        if bounds is not None:
            alpha, phi = bounds
            p = min(1.0, model.num_actions * phi)
            freq = float(np.mean(gaps[s] > 2 * alpha))
            rep.add("frac_gap_above_2alpha", freq, state=s)
            rep.add("predicted_frac", p, state=s)
            rep.add("within_prediction", freq <= p + 3 * math.sqrt(p * (1 - p) / repetitions), state=s)
    if bounds is not None:
        rep.summary.update(alpha_H=bounds[0], phi_H=bounds[1])
    rep.summary.update(mean_gap=float(gaps.mean()), max_gap=float(gaps.max()))
    return rep


def safeguard_config(scenario: Scenario) -> SafeguardConfig:
    block = scenario.safeguard
    if block is None:
        raise ScenarioError("$.safeguard", "missing required block")
    return SafeguardConfig.build(scenario.pair, block.omega, block.delta, block.params)


def cmd_safeguard(scenario: Scenario, seed: int, policy: str, episodes: int, length: int, *,
                  literal: bool = False, node_budget: int | None = DEFAULT_NODE_BUDGET,
                  fixed_assessors: bool = False) -> Report:
    """Shielded versus unshielded episodes of a black-box policy from the start state."""
    if episodes < 1 or length < 1:
        raise ValueError("episodes and length must be at least 1")
    model, pair = scenario.model, scenario.pair
    config = safeguard_config(scenario)
    pi = make_policy(policy, pair, seed=seed)
    v = value_iteration(model, tol=1e-12).v
    successor_value = model.kernel @ v
    destructive = v < config.omega
    rep = _report("safeguard", scenario, seed, policy, episodes, length, literal, fixed_assessors)
    rep.add("alpha", config.alpha)
    rep.add("floor", config.floor(model.gamma, model.welfare.u_max))
    totals = {"shielded": [0, 0, 0, 0], "unshielded": [0, 0, 0, 0]}  # entries, halts, admissions, unsafe
    discounts = model.gamma ** np.arange(length)
    for e in range(episodes):
        ep_seed = rngmod.derive_seed(seed, e)
        for label, cfg in (("unshielded", None), ("shielded", config)):
            ep = run_episode(pair, scenario.start_state, pi, length, ep_seed, cfg, literal,
                             node_budget=node_budget, fixed_assessors=fixed_assessors)
            entries = int(destructive[ep.states[1:]].sum())
            unsafe = int(sum(successor_value[s, a] < config.omega for s, a in zip(ep.states, ep.actions)))
            t = totals[label]
            t[0] += entries
            t[1] += ep.halted
            t[2] += len(ep.actions)
            t[3] += unsafe
            rep.add(f"{label}.destructive_entries[{e}]", entries)
            rep.add(f"{label}.halted[{e}]", ep.halted)
            rep.add(f"{label}.unsafe_actions[{e}]", unsafe)
            rep.add(f"{label}.welfare[{e}]", float(np.dot(discounts[:len(ep.welfare)], ep.welfare)))
    for label, (entries, halts, steps, unsafe) in totals.items():
        rep.add(f"{label}.total_destructive_entries", entries)
        rep.add(f"{label}.total_halts", halts)
        rep.add(f"{label}.total_actions", steps)
        rep.add(f"{label}.total_unsafe_actions", unsafe)
        rep.summary[label] = {"destructive_entries": entries, "halts": halts, "actions": steps,
                              "unsafe_actions": unsafe}
    rep.summary.update(alpha=config.alpha, omega=config.omega)
    return rep


def cmd_verify_bounds(suite: str, seed: int = 0) -> tuple[Report, bool]:
    verdicts = run_suite(suite, seed)
    rep = _report("verify-bounds", None, seed, suite)
    for v in verdicts:
        rep.add(f"{v.case}.observed", v.observed)
        rep.add(f"{v.case}.bound", v.bound)
        rep.add(f"{v.case}.passed", v.passed)
    failed = [v.case for v in verdicts if not v.passed]
    rep.summary.update(suite=suite, cases=len(verdicts), failed=len(failed), failed_cases=failed[:20])
    return rep, not failed
