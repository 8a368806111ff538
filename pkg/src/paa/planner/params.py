"""Closed-form planner resources and the error/confidence budgets they imply."""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from decimal import ROUND_CEILING, Context, Decimal, localcontext
from fractions import Fraction

import numpy as np

from ..smdp import expectation_gap_bound
from ..welfare import WelfareConfig, gamma_factor
from .sampling import PlannerParams


class InfeasibleToleranceError(ValueError):
    """The requested tolerance cannot be guaranteed with the given model error."""

    def __init__(self, message: str, min_epsilon: float | None = None):
        super().__init__(message)
        self.min_epsilon = min_epsilon


@dataclass(frozen=True)
class ToleranceSpec:
    """Target tolerances plus the problem constants the calculators need.

    ``epsilon`` may be ``None`` for pure error-budget queries; ``omega`` is
    only read by the safeguard.
    """

    epsilon: float | None
    delta: float
    gamma: float
    welfare: WelfareConfig
    num_individuals: int
    num_actions: int
    d: float = 0.0
    omega: float | None = None

    def __post_init__(self) -> None:
        if self.epsilon is not None and not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if not 0 <= self.delta < 1:
            raise ValueError(f"delta must lie in [0, 1), got {self.delta}")
        if not 0 <= self.gamma < 1:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        if not self.d >= 0:
            raise ValueError(f"d must be non-negative, got {self.d}")
        if self.num_individuals < 1 or self.num_actions < 1:
            raise ValueError("num_individuals and num_actions must be positive")
        if self.omega is not None:
            lo = self.welfare.u_min / (1 - self.gamma)
            hi = self.welfare.u_max / (1 - self.gamma)
            if not lo <= self.omega <= hi:
                raise ValueError(f"omega must lie in [{lo}, {hi}], got {self.omega}")


@dataclass(frozen=True)
class ErrorBudget:
    """Per-term accuracies and failure probabilities of the depth-``H`` estimate.

    ``alpha_H`` bounds ``|Q* - Q_hat^H|`` for every state-action pair with
    probability at least ``1 - phi_H``.  ``eps2`` and ``eps4`` come from the
    model error alone and cannot be reduced by sampling.
    """

    beta: float | None
    k: int | None
    eps1: float
    eps2: float
    eps3: float
    eps4: float
    eps5: float
    delta1: float
    delta3: float
    delta5: float
    alpha_H: float
    phi_H: float

    @property
    def paa_failure(self) -> float | None:
        """Probability bound ``2 k phi_H`` attached to the PAA guarantee."""
        if self.k is None:
            return None
        return min(1.0, 2 * self.k * self.phi_H)


# The calculators decide integers from real-valued bounds that routinely exceed
# 1e15 and from a beta that can be a small difference of larger terms, so they
# work in 60-digit decimal arithmetic.  Inputs are converted exactly from floats.
_CTX = Context(prec=60)


def _dec(x) -> Decimal:
    return x if isinstance(x, Decimal) else Decimal(x)


def _ceil(x: Decimal) -> int:
    return int(x.to_integral_value(rounding=ROUND_CEILING))


def _precise(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        with localcontext(_CTX):
            return fn(*args, **kwargs)
    return wrapper


@_precise
def _limit_dec(epsilon, gamma, delta_u) -> Decimal:
    e, g, dU = _dec(epsilon), _dec(gamma), _dec(delta_u)
    return e * e * (1 - g) ** 6 / (8 * dU * dU)


def divergence_limit(epsilon: float, gamma: float, delta_u: float) -> float:
    """Model error ``d`` must stay strictly below this for tolerance ``epsilon``."""
    if delta_u == 0:
        return math.inf
    return float(_limit_dec(epsilon, gamma, delta_u))


def min_feasible_epsilon(d: float, gamma: float, delta_u: float) -> float:
    """Tolerances must exceed this value under model error ``d``."""
    return math.sqrt(8 * d) * delta_u / (1 - gamma) ** 3


def _check_common(tol: ToleranceSpec) -> float:
    if tol.welfare.is_extreme:
        raise ValueError("parameter calculators require a finite welfare exponent q")
    if tol.epsilon is None:
        raise ValueError("epsilon is required")
    dU = tol.welfare.delta_u
    if dU == 0:
        raise ValueError("u_min == u_max: every policy is optimal, no planning needed")
    if not _dec(tol.d) < _limit_dec(tol.epsilon, tol.gamma, dU):
        limit = divergence_limit(tol.epsilon, tol.gamma, dU)
        min_eps = min_feasible_epsilon(tol.d, tol.gamma, dU)
        raise InfeasibleToleranceError(
            f"model error d={tol.d:.6g} must be below {limit:.6g} for epsilon={tol.epsilon}; "
            f"smallest achievable epsilon is {min_eps:.6g}",
            min_epsilon=min_eps,
        )
    return dU


@_precise
def _min_power_below(gamma, x, strict: bool) -> int:
    """Smallest integer ``j >= 1`` with ``gamma**j < x`` (or ``<=`` if not strict)."""
    g, x = _dec(gamma), _dec(x)
    if g == 0:
        return 1
    ok = (lambda j: g**j < x) if strict else (lambda j: g**j <= x)
    if ok(1):
        return 1
    if x <= 0:
        raise ValueError("no power of gamma lies below a non-positive bound")
    j = max(1, int(x.ln() / g.ln()))
    while j > 1 and ok(j - 1):
        j -= 1
    while not ok(j):
        j += 1
    return j


@_precise
def _k_bound(tol: ToleranceSpec) -> Decimal:
    g, dU = _dec(tol.gamma), _dec(tol.welfare.delta_u)
    return (1 - g) * _dec(tol.epsilon) / dU - (8 * _dec(tol.d)).sqrt() / (1 - g) ** 2


def min_k(tol: ToleranceSpec) -> int:
    """Smallest admissible look-ahead ``k`` that leaves a positive ``beta``."""
    _check_common(tol)
    return _min_power_below(tol.gamma, _k_bound(tol), strict=True)


@_precise
def _paa_beta(tol: ToleranceSpec, k: int) -> Decimal:
    dU, g, e, d = (_dec(x) for x in (tol.welfare.delta_u, tol.gamma, tol.epsilon, tol.d))
    return (1 - g) ** 2 * e / 8 - d.sqrt() * dU / (Decimal(8).sqrt() * (1 - g)) - (1 - g) * g**k * dU / 8


@_precise
def _aa_beta(tol: ToleranceSpec) -> Decimal:
    dU, g, e, d = (_dec(x) for x in (tol.welfare.delta_u, tol.gamma, tol.epsilon, tol.d))
    return (1 - g) ** 2 * e / 10 - (2 * d).sqrt() * dU / (5 * (1 - g))


def paa_beta(tol: ToleranceSpec, k: int) -> float:
    return float(_paa_beta(tol, k))


def aa_beta(tol: ToleranceSpec) -> float:
    return float(_aa_beta(tol))


@_precise
def horizon(beta, delta_u, gamma) -> int:
    """``max(1, ceil(log_gamma(beta / delta_u)))``."""
    beta, dU = _dec(beta), _dec(delta_u)
    if gamma == 0 or beta >= dU:
        return 1
    return _min_power_below(gamma, beta / dU, strict=False)


def _child_samples(gamma: float, K: int) -> int:
    exact = Fraction(gamma) ** 2 / (1 - Fraction(gamma)) ** 2 * K
    return max(1, math.ceil(exact))


@_precise
def _gamma_dec(eps: Decimal, a: float, b: float, q: float) -> Decimal:
    """The power-mean sensitivity factor evaluated in decimal arithmetic."""
    a, b, q = _dec(a), _dec(b), _dec(q)
    if q < 0:
        return (1 - Decimal(2) ** q) ** 2 * b ** (2 * q - 2) / (a**q - b**q) ** 2
    if q == 0:
        return 1 / ((b + eps) ** 2 * (b.ln() - a.ln()) ** 2)
    if q < 1:
        return q * q * a ** (2 * q) / ((b + (1 - q) * eps) ** 2 * (b**q - a**q) ** 2)
    if q == 1:
        return 1 / (b - a) ** 2
    return q * q * a ** (2 * q) / ((b + q * eps) ** 2 * (b**q - a**q) ** 2)


@_precise
def _assessors_real(beta, tol: ToleranceSpec, K: int) -> Decimal:
    w = tol.welfare
    N = Decimal(tol.num_individuals)
    g = _gamma_dec(_dec(beta), w.u_min, w.u_max, w.q)
    return N / (1 + _dec(w.delta_u) ** 2 * N * g / (2 * K))


def _assessors(beta, tol: ToleranceSpec, K: int) -> int:
    return min(tol.num_individuals, max(1, _ceil(_assessors_real(beta, tol, K))))


@_precise
def _paa_K_real(beta, H: int, k: int, delta, num_actions: int, delta_u) -> Decimal:
    beta, dU, delta = _dec(beta), _dec(delta_u), _dec(delta)
    r = dU * dU / (beta * beta)
    if H == 1:
        return r / 2 * (24 * k / delta).ln()
    log_inner = (Decimal(24 * k).ln() / (H - 1) + Decimal(H - 1).ln() + Decimal(num_actions).ln() + r.ln())
    return r * ((H - 1) * log_inner + (1 / delta).ln())


@_precise
def _aa_K_real(beta, H: int, num_actions: int, delta_u) -> Decimal:
    beta, dU = _dec(beta), _dec(delta_u)
    r = dU * dU / (beta * beta)
    if H == 1:
        return r / 2 * (12 * dU / beta).ln()
    log_inner = Decimal(12).ln() / (H - 1) + Decimal(H - 1).ln() + Decimal(num_actions).ln() + r.ln()
    return r * ((H - 1) * log_inner + (dU / beta).ln())


def paa_reward_samples(beta: float, H: int, k: int, delta: float, num_actions: int, delta_u: float) -> float:
    """Real-valued lower bound on ``K`` for the probably-approximately-aligned guarantee."""
    return float(_paa_K_real(beta, H, k, delta, num_actions, delta_u))


def aa_reward_samples(beta: float, H: int, num_actions: int, delta_u: float) -> float:
    """Real-valued lower bound on ``K`` for the approximately-aligned guarantee."""
    return float(_aa_K_real(beta, H, num_actions, delta_u))


def _log_sum(*logs: float) -> float:
    finite = [x for x in logs if x > -math.inf]
    if not finite:
        return -math.inf
    top = max(finite)
    return top + math.log(sum(math.exp(x - top) for x in finite))


def _budget_from_beta(beta: float, k: int | None, params: PlannerParams, tol: ToleranceSpec) -> ErrorBudget:
    """Budget with ``eps1 = eps3 = gamma * eps5 = beta`` (the calculators' split)."""
    w = tol.welfare
    dU = w.delta_u
    g = tol.gamma
    N = tol.num_individuals
    H, K, C, n = params.H, params.K, params.C, params.n
    eps2 = expectation_gap_bound(w.u_min, w.u_max, tol.d)
    eps4 = eps2 / (1 - g)
    eps1 = eps3 = beta
    eps5 = beta / g if g > 0 else 0.0

    log_d3 = math.log(2) - 2 * K * beta**2 / dU**2
    if g > 0:
        ratio = (1 - g) * eps5 / dU
        log_d5 = math.log(2) - 2 * C * ratio * ratio  # may reach -inf for tiny gamma
    else:
        log_d5 = -math.inf
    if n >= N:
        log_d1 = -math.inf
    else:
        gam = gamma_factor(eps1, w.u_min, w.u_max, w.q)
        log_d1 = math.log(2) - n * eps1**2 * gam / (1 - n / N)
    log_phi = math.log(2) + _log_sum(log_d1, log_d3, log_d5) + (H - 1) * math.log(C * tol.num_actions)
    phi = math.exp(min(0.0, log_phi))
    alpha = (eps1 + eps2 + eps3 + g * (eps4 + eps5) + g**H * dU) / (1 - g)
    clip = lambda lg: math.exp(min(0.0, lg))  # noqa: E731
    return ErrorBudget(beta, k, eps1, eps2, eps3, eps4, eps5,
                       clip(log_d1), clip(log_d3), clip(log_d5), alpha, phi)


def compute_paa_params(tol: ToleranceSpec, k_override: int | None = None) -> tuple[PlannerParams, ErrorBudget]:
    """Resources making the greedy planner ``delta``-``epsilon``-PAA.

    Raises :class:`InfeasibleToleranceError` when the model error ``d`` is too
    large for ``epsilon`` or when ``k_override`` leaves no positive ``beta``.
    """
    dU = _check_common(tol)
    if not 0 < tol.delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {tol.delta}")
    k = min_k(tol)
    if k_override is not None:
        if k_override < k:
            raise InfeasibleToleranceError(f"k={k_override} is below the admissible minimum {k}")
        k = int(k_override)
    beta = _paa_beta(tol, k)
    if not beta > 0:
        raise InfeasibleToleranceError(f"beta={float(beta):.6g} is not positive for k={k}")
    H = horizon(beta, dU, tol.gamma)
    K = max(1, _ceil(_paa_K_real(beta, H, k, tol.delta, tol.num_actions, dU)))
    C = _child_samples(tol.gamma, K)
    n = _assessors(beta, tol, K)
    params = PlannerParams(H, K, C, n)
    return params, _budget_from_beta(float(beta), k, params, tol)


def compute_aa_params(tol: ToleranceSpec) -> tuple[PlannerParams, ErrorBudget]:
    """Resources making the greedy planner ``epsilon``-AA (no failure probability)."""
    dU = _check_common(tol)
    beta = _aa_beta(tol)
    if not beta > 0:
        raise InfeasibleToleranceError(f"beta={float(beta):.6g} is not positive")
    H = horizon(beta, dU, tol.gamma)
    K = max(1, _ceil(_aa_K_real(beta, H, tol.num_actions, dU)))
    C = _child_samples(tol.gamma, K)
    n = _assessors(beta, tol, K)
    params = PlannerParams(H, K, C, n)
    return params, _budget_from_beta(float(beta), None, params, tol)


@_precise
def paa_inequalities(tol: ToleranceSpec, params: PlannerParams, k: int) -> dict[str, tuple[float, float, bool]]:
    """Re-substitute ``(H, K, C, n)`` into the PAA resource conditions.

    Returns ``name -> (value, required, holds)``.
    """
    dU = _dec(tol.welfare.delta_u)
    g = _dec(tol.gamma)
    d = _dec(tol.d)
    beta = _paa_beta(tol, k)
    x = _k_bound(tol)
    limit = _limit_dec(tol.epsilon, tol.gamma, tol.welfare.delta_u)
    H_req = Decimal(1) if g == 0 or beta >= dU else max(Decimal(1), (beta / dU).ln() / g.ln())
    K_req = _paa_K_real(beta, params.H, k, tol.delta, tol.num_actions, dU)
    C_req = g * g / (1 - g) ** 2 * params.K
    n_req = min(_assessors_real(beta, tol, params.K), Decimal(tol.num_individuals))
    rows = {
        "d < limit": (d, limit, d < limit),
        "gamma^k < x": (g**k, x, g**k < x),
        "beta > 0": (beta, Decimal(0), beta > 0),
        "H >= bound": (Decimal(params.H), H_req, params.H >= H_req),
        "K >= bound": (Decimal(params.K), K_req, params.K >= K_req),
        "C >= bound": (Decimal(params.C), C_req, params.C >= C_req),
        "n >= bound": (Decimal(params.n), n_req, params.n >= n_req),
    }
    return {name: (float(v), float(r), bool(ok)) for name, (v, r, ok) in rows.items()}


def error_budget(params: PlannerParams, tol: ToleranceSpec) -> ErrorBudget:
    """Accuracy ``alpha_H`` and failure probability ``phi_H`` for arbitrary resources.

    The failure budget is split evenly, ``delta1 = delta3 = delta5 =
    delta / (6 (C|A|)^(H-1))``, and each concentration bound is inverted for
    its accuracy.  The assessor term uses ``Gamma(u_max, u_min, u_max, q)``.
    """
    w = tol.welfare
    if w.is_extreme:
        raise ValueError("error budgets require a finite welfare exponent q")
    if not 0 < tol.delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {tol.delta}")
    params.check_population(tol.num_individuals)
    dU = w.delta_u
    g = tol.gamma
    N = tol.num_individuals
    H, K, C, n = params.H, params.K, params.C, params.n
    log_branch = (H - 1) * math.log(C * tol.num_actions)
    log_each = math.log(tol.delta) - math.log(6) - log_branch
    L = math.log(12) + log_branch - math.log(tol.delta)  # ln(2 / delta_i)
    if n >= N or dU == 0:
        eps1 = 0.0
    else:
        g_max = gamma_factor(w.u_max, w.u_min, w.u_max, w.q)
        eps1 = math.sqrt((N - n) / (n * N * g_max) * L)
    eps3 = math.sqrt(dU**2 / (2 * K) * L)
    eps5 = math.sqrt(dU**2 / (2 * C * (1 - g) ** 2) * L)
    eps2 = expectation_gap_bound(w.u_min, w.u_max, tol.d)
    eps4 = eps2 / (1 - g)
    alpha = (eps1 + eps2 + eps3 + g * (eps4 + eps5) + g**H * dU) / (1 - g)
    d_each = math.exp(log_each)
    # 2 (delta1 + delta3 + delta5) (C|A|)^(H-1) collapses to delta under the even split
    phi = min(1.0, tol.delta)
    return ErrorBudget(None, None, eps1, eps2, eps3, eps4, eps5, d_each, d_each, d_each, alpha, phi)


def q_error_bound(params: PlannerParams, tol: ToleranceSpec) -> tuple[float, float]:
    """``(alpha_H, phi_H)``: ``|Q* - Q_hat^H| <= alpha_H`` w.p. at least ``1 - phi_H``."""
    b = error_budget(params, tol)
    return b.alpha_H, b.phi_H


@dataclass(frozen=True)
class SuboptimalityBound:
    bound_1: float
    confidence_1: float
    bound_2: float


def suboptimality_bound(epsilon_q: float, delta_q: float, gamma: float, v_range: float,
                        k: int | None = None) -> SuboptimalityBound:
    """Value loss of the greedy policy on a Q estimate that is ``epsilon_q``-accurate
    with probability ``1 - delta_q`` per state-action pair.

    ``bound_1`` holds with probability ``confidence_1 = 1 - 2 k delta_q``;
    ``k=None`` means the limit ``k -> inf``.  ``bound_2`` holds almost surely.
    """
    if epsilon_q < 0 or not 0 <= delta_q < 1 or not 0 <= gamma < 1:
        raise ValueError("need epsilon_q >= 0, delta_q in [0, 1), gamma in [0, 1)")
    head = 2 * epsilon_q / (1 - gamma)
    if k is None:
        bound_1 = head
        confidence_1 = 1.0 if delta_q == 0 else 0.0
    else:
        if k < 1:
            raise ValueError(f"k must be a positive integer, got {k}")
        bound_1 = head + gamma**k * v_range
        confidence_1 = max(0.0, 1 - 2 * k * delta_q)
    bound_2 = (2 * epsilon_q + 2 * delta_q * v_range) / (1 - gamma)
    return SuboptimalityBound(bound_1, confidence_1, bound_2)


def phi_prediction(phi_H: float, k: int) -> float:
    return float(np.clip(2 * k * phi_H, 0.0, 1.0))
