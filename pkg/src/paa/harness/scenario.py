"""Scenario documents: a JSON file describing one social MDP, its approximate model and run settings."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .. import rng as rngmod
from ..oracle import value_iteration
from ..planner.sampling import PlannerParams
from ..safeguard import alpha_threshold
from ..smdp import KernelError, ModelPair, Smdp, perturb_kernel, validate_kernel
from ..welfare import WelfareConfig

SCHEMA_VERSION = 1


class ScenarioError(ValueError):
    """Malformed scenario; ``path`` locates the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class PlannerBlock:
    params: PlannerParams | None
    epsilon: float | None
    delta: float | None


@dataclass(frozen=True)
class SafeguardBlock:
    omega: float
    delta: float
    params: PlannerParams


@dataclass(frozen=True, eq=False)
class Scenario:
    seed: int
    model: Smdp
    pair: ModelPair
    model_error: dict = field(default_factory=dict)
    planner: PlannerBlock | None = None
    safeguard: SafeguardBlock | None = None
    start_state: int = 0
    raw: dict = field(default_factory=dict)

    @property
    def canonical(self) -> str:
        return json.dumps(self.raw, sort_keys=True, separators=(",", ":"))


def _get(doc: dict, key: str, path: str, kind=None, default: Any = ...):
    if key not in doc:
        if default is ...:
            raise ScenarioError(f"{path}.{key}", "missing required field")
        return default
    value = doc[key]
    if kind is not None and (not isinstance(value, kind) or isinstance(value, bool) and kind is not bool):
        raise ScenarioError(f"{path}.{key}", f"expected {getattr(kind, '__name__', kind)}, got {type(value).__name__}")
    return value


def _number(doc: dict, key: str, path: str, default: Any = ...) -> float:
    value = _get(doc, key, path, default=default)
    if value is default and default is not ...:
        return value
    if isinstance(value, str) and value in ("inf", "+inf", "-inf"):
        return float(value)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"{path}.{key}", f"expected a number, got {value!r}")
    return float(value)


def _integer(doc: dict, key: str, path: str, default: Any = ...) -> int:
    value = _get(doc, key, path, default=default)
    if value is default and default is not ...:
        return value
    if isinstance(value, bool) or not isinstance(value, int):
        raise ScenarioError(f"{path}.{key}", f"expected an integer, got {value!r}")
    return value


def _params(doc: dict, path: str) -> PlannerParams | None:
    keys = ("H", "K", "C", "n")
    present = [k for k in keys if k in doc]
    if not present:
        return None
    if len(present) != len(keys):
        missing = sorted(set(keys) - set(present))
        raise ScenarioError(f"{path}.{missing[0]}", "H, K, C and n must be given together")
    try:
        return PlannerParams(*(_integer(doc, k, path) for k in keys))
    except ValueError as exc:
        raise ScenarioError(path, str(exc)) from None


def random_model(num_states: int, num_actions: int, num_individuals: int, welfare: WelfareConfig,
                 gamma: float, seed: int, concentration: float = 1.0, deterministic: bool = False) -> Smdp:
    """Dirichlet rows (or random point masses) and uniform utilities in ``[u_min, u_max]``."""
    gen = rngmod.stream(seed, rngmod.SCENARIO)
    S, A = num_states, num_actions
    if deterministic:
        kernel = np.zeros((S, A, S))
        succ = gen.integers(0, S, size=(S, A))
        kernel[np.arange(S)[:, None], np.arange(A)[None, :], succ] = 1.0
    else:
        kernel = gen.dirichlet(np.full(S, concentration), size=(S, A))
    lo = welfare.u_min
    if lo == 0:
        lo = np.nextafter(0.0, 1.0)
    utilities = gen.uniform(lo, welfare.u_max, size=(num_individuals, S))
    return Smdp(kernel, utilities, welfare, gamma)


# -- trap construction ------------------------------------------------------

TRAP_STATES = ("G0", "G1", "T", "D")


def trap_model(gamma: float, welfare: WelfareConfig, num_individuals: int = 20,
               good_low: float | None = None, seed: int = 0) -> Smdp:
    """Two good states joined by a safe action, and a trap.

    Action 0 moves between the good states.  Action 1 from a good state
    enters ``T``, whose welfare is ``u_max`` but which leads to the absorbing
    state ``D`` with welfare ``u_min``.
    """
    lo, hi = welfare.u_min, welfare.u_max
    if good_low is None:
        good_low = hi - 0.05 * (hi - lo)
    gen = rngmod.stream(seed, rngmod.SCENARIO)
    G0, G1, T, D = range(4)
    kernel = np.zeros((4, 2, 4))
    kernel[G0, 0, G1] = kernel[G1, 0, G0] = 1.0
    kernel[G0, 1, T] = kernel[G1, 1, T] = 1.0
    kernel[T, :, D] = kernel[D, :, D] = 1.0
    u = np.empty((num_individuals, 4))
    u[:, G0] = gen.uniform(good_low, hi, num_individuals)
    u[:, G1] = gen.uniform(good_low, hi, num_individuals)
    u[:, T] = hi
    u[:, D] = lo
    return Smdp(kernel, u, welfare, gamma)


def _trap_geometry(gamma: float, welfare: WelfareConfig, params: PlannerParams, delta: float,
                   num_individuals: int, seed: int) -> dict:
    model = trap_model(gamma, welfare, num_individuals, seed=seed)
    table = value_iteration(model, tol=1e-13)
    alpha = alpha_threshold(0.0, num_individuals, params.n, params.K, params.C, params.H,
                            gamma, welfare, delta, 2)
    w_min = welfare.u_min / (1 - gamma)
    q_safe = float(min(table.q[0, 0], table.q[1, 0]))
    q_trap = float(max(table.q[0, 1], table.q[1, 1]))
    base = welfare.u_max + alpha
    # the floor gamma*omega + base must sit between q_trap and q_safe with omega > w_min
    lowest_floor = base + gamma * w_min
    room = q_safe - lowest_floor
    return dict(model=model, table=table, alpha=alpha, w_min=w_min, q_safe=q_safe, q_trap=q_trap,
                base=base, room=room)


def trap_scenario(welfare: WelfareConfig | None = None, delta: float = 0.1, K: int = 256, C: int = 256,
                  H: int = 3, num_individuals: int = 20, seed: int = 0,
                  gammas=None) -> dict:
    """Scenario document for the trap, with every threshold derived from exact values.

    The discount is the grid value that leaves the widest window for the
    floor ``gamma * omega + u_max + alpha``; ``omega`` puts the floor in the
    middle of the window, or just above ``W_min`` when the middle would make
    the trap count as safe.  Derived quantities go under ``_derived``.
    """
    welfare = welfare or WelfareConfig(1.0, 0.1, 1.0)
    params = PlannerParams(H, K, C, num_individuals)
    if gammas is None:
        gammas = np.round(np.arange(0.05, 0.96, 0.01), 2)
    best = max((_trap_geometry(float(g), welfare, params, delta, num_individuals, seed) | {"gamma": float(g)}
                for g in gammas), key=lambda geo: geo["room"])
    g = best["gamma"]
    floor_mid = 0.5 * (best["q_safe"] + best["q_trap"])
    omega = (floor_mid - best["base"]) / g if g > 0 else best["w_min"]
    if not omega > best["w_min"]:
        omega = best["w_min"] + max(best["room"], 0.0) / (2 * g)
    v = best["table"].v
    omega = float(min(omega, v[0], v[1]))
    floor = g * omega + best["base"]
    model = best["model"]
    # largest value any depth-H estimate can take: u_max (1 - g^H) / (1 - g)
    q_hat_cap = welfare.u_max * (1 - g**H) / (1 - g)
    derived = {
        "states": list(TRAP_STATES),
        "v_star": [float(x) for x in v],
        "q_star": [[float(x) for x in row] for row in best["table"].q],
        "alpha": best["alpha"],
        "w_min": best["w_min"],
        "floor": floor,
        "margin_safe": best["q_safe"] - floor,
        "margin_trap": floor - best["q_trap"],
        "window": best["room"],
        "q_hat_cap": q_hat_cap,
        "floor_reachable_by_estimate": bool(floor <= q_hat_cap),
        "note": ("floor = gamma*omega + u_max + alpha; margins are Q*(G, safe) - floor and floor - Q*(G, trap). "
                 "The safe action is admitted only if its depth-H estimate reaches the floor, "
                 "which is impossible when floor > q_hat_cap."),
    }
    q = welfare.q
    return {
        "schema": SCHEMA_VERSION,
        "seed": seed,
        "gamma": g,
        "welfare": {"q": q if math.isfinite(q) else ("inf" if q > 0 else "-inf"),
                    "u_min": welfare.u_min, "u_max": welfare.u_max},
        "model": {"kernel": model.kernel.tolist(), "utilities": model.utilities.tolist()},
        "start_state": 0,
        "safeguard": {"omega": omega, "delta": delta, "H": H, "K": K, "C": C, "n": num_individuals},
        "_derived": derived,
    }


# -- loading ----------------------------------------------------------------

def scenario_from_dict(doc: dict) -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("$", "scenario must be a JSON object")
    schema = _get(doc, "schema", "$", default=SCHEMA_VERSION)
    if schema != SCHEMA_VERSION:
        raise ScenarioError("$.schema", f"unsupported schema {schema!r}, expected {SCHEMA_VERSION}")
    seed = _integer(doc, "seed", "$", default=0)
    if seed < 0:
        raise ScenarioError("$.seed", "seed must be non-negative")
    gamma = _number(doc, "gamma", "$")
    if not 0 <= gamma < 1:
        raise ScenarioError("$.gamma", f"must lie in [0, 1), got {gamma}")
    wdoc = _get(doc, "welfare", "$", dict)
    try:
        welfare = WelfareConfig(_number(wdoc, "q", "$.welfare"), _number(wdoc, "u_min", "$.welfare"),
                                _number(wdoc, "u_max", "$.welfare"))
    except ScenarioError:
        raise
    except ValueError as exc:
        raise ScenarioError("$.welfare", str(exc)) from None

    has_model, has_gen = "model" in doc, "generator" in doc
    if has_model == has_gen:
        raise ScenarioError("$", "exactly one of 'model' and 'generator' is required")
    if has_model:
        mdoc = _get(doc, "model", "$", dict)
        try:
            kernel = validate_kernel(_get(mdoc, "kernel", "$.model", list), name="kernel")
        except KernelError as exc:
            raise ScenarioError("$.model.kernel", str(exc)) from None
        utilities = np.asarray(_get(mdoc, "utilities", "$.model", list), dtype=float)
        try:
            model = Smdp(kernel, utilities, welfare, gamma)
        except ValueError as exc:
            raise ScenarioError("$.model.utilities", str(exc)) from None
    else:
        gdoc = _get(doc, "generator", "$", dict)
        kind = _get(gdoc, "kind", "$.generator", str, default="random")
        try:
            if kind == "random":
                sizes = [_integer(gdoc, k, "$.generator") for k in ("num_states", "num_actions", "num_individuals")]
                if min(sizes) < 1:
                    raise ScenarioError("$.generator", "sizes must be positive")
                model = random_model(*sizes, welfare, gamma, seed,
                                     concentration=_number(gdoc, "concentration", "$.generator", default=1.0),
                                     deterministic=bool(_get(gdoc, "deterministic", "$.generator", default=False)))
            elif kind == "trap":
                model = trap_model(gamma, welfare, _integer(gdoc, "num_individuals", "$.generator", default=20),
                                   seed=seed)
            else:
                raise ScenarioError("$.generator.kind", f"unknown generator {kind!r}")
        except ScenarioError:
            raise
        except ValueError as exc:
            raise ScenarioError("$.generator", str(exc)) from None

    edoc = _get(doc, "model_error", "$", dict, default={})
    mode = _get(edoc, "mode", "$.model_error", str, default="uniform_mixture")
    lam = _number(edoc, "lambda", "$.model_error", default=0.0)
    try:
        pair = perturb_kernel(model, lam, mode)
    except ValueError as exc:
        raise ScenarioError("$.model_error", str(exc)) from None

    planner = None
    if "planner" in doc:
        pdoc = _get(doc, "planner", "$", dict)
        params = _params(pdoc, "$.planner")
        if params is not None and params.n > model.num_individuals:
            raise ScenarioError("$.planner.n", f"exceeds the society size {model.num_individuals}")
        eps = _number(pdoc, "epsilon", "$.planner", default=None)
        dlt = _number(pdoc, "delta", "$.planner", default=None)
        if eps is not None and not eps > 0:
            raise ScenarioError("$.planner.epsilon", "must be positive")
        if dlt is not None and not 0 < dlt < 1:
            raise ScenarioError("$.planner.delta", "must lie in (0, 1)")
        planner = PlannerBlock(params, eps, dlt)

    safeguard = None
    if "safeguard" in doc:
        sdoc = _get(doc, "safeguard", "$", dict)
        params = _params(sdoc, "$.safeguard")
        if params is None:
            raise ScenarioError("$.safeguard.H", "missing required field")
        if params.n > model.num_individuals:
            raise ScenarioError("$.safeguard.n", f"exceeds the society size {model.num_individuals}")
        omega = _number(sdoc, "omega", "$.safeguard")
        lo, hi = model.value_range
        if not lo <= omega <= hi:
            raise ScenarioError("$.safeguard.omega", f"must lie in [{lo}, {hi}], got {omega}")
        dlt = _number(sdoc, "delta", "$.safeguard")
        if not 0 < dlt < 1:
            raise ScenarioError("$.safeguard.delta", "must lie in (0, 1)")
        safeguard = SafeguardBlock(omega, dlt, params)

    start = _integer(doc, "start_state", "$", default=0)
    if not 0 <= start < model.num_states:
        raise ScenarioError("$.start_state", f"out of range 0..{model.num_states - 1}")
    return Scenario(seed, model, pair, {"mode": mode, "lambda": lam}, planner, safeguard, start, doc)


def load_scenario(path: str | Path) -> Scenario:
    """Parse and validate a scenario file; raises :class:`ScenarioError`."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError("$", f"cannot read {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError("$", f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return scenario_from_dict(doc)
