"""Power-mean social welfare and its without-replacement concentration bounds."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .rng import as_generator

#: Exponents with ``|q|`` at or above this value are evaluated as ``min``/``max``.
INFINITE_Q_THRESHOLD = 1e6


def normalize_q(q: float) -> float:
    q = float(q)
    if math.isnan(q):
        raise ValueError("welfare exponent q must not be NaN")
    if q >= INFINITE_Q_THRESHOLD:
        return math.inf
    if q <= -INFINITE_Q_THRESHOLD:
        return -math.inf
    return q


@dataclass(frozen=True)
class WelfareConfig:
    """Aggregation rule: exponent ``q`` and the utility range ``[u_min, u_max]``.

    ``u_min = 0`` is accepted only for ``q >= 1``; logarithms and negative
    powers need strictly positive utilities.
    """

    q: float
    u_min: float
    u_max: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "q", normalize_q(self.q))
        u_min, u_max = float(self.u_min), float(self.u_max)
        if not (math.isfinite(u_min) and math.isfinite(u_max)):
            raise ValueError("utility bounds must be finite")
        if u_min > u_max:
            raise ValueError(f"u_min={u_min} exceeds u_max={u_max}")
        if u_min < 0:
            raise ValueError(f"u_min must be non-negative, got {u_min}")
        if u_min == 0 and self.q < 1:
            raise ValueError(f"u_min = 0 requires q >= 1 (got q={self.q})")
        object.__setattr__(self, "u_min", u_min)
        object.__setattr__(self, "u_max", u_max)

    @property
    def delta_u(self) -> float:
        return self.u_max - self.u_min

    @property
    def is_extreme(self) -> bool:
        """True for the egalitarian/elitist rules ``q = -inf`` and ``q = +inf``."""
        return math.isinf(self.q)


@dataclass(frozen=True)
class AssessorSet:
    indices: tuple[int, ...]
    population: int

    def __post_init__(self) -> None:
        if len(set(self.indices)) != len(self.indices):
            raise ValueError("assessor indices must be distinct")
        if any(i < 0 or i >= self.population for i in self.indices):
            raise ValueError(f"assessor index outside 0..{self.population - 1}")

    @property
    def n(self) -> int:
        return len(self.indices)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.indices, dtype=np.intp)


def power_mean_q(values, q: float, axis: int = -1) -> np.ndarray | float:
    """Power mean of ``values`` along ``axis`` without bound checks.

    Finite non-zero exponents are evaluated as
    ``ref * exp(log1p(mean(expm1(q * log(u / ref)))) / q)`` where ``ref`` is the
    largest entry for ``q > 0`` and the smallest for ``q < 0``.  Every
    ``expm1`` argument is then non-positive, so nothing overflows, and the
    ``log1p``/``expm1`` pair keeps exponents close to zero accurate.
    """
    x = np.asarray(values, dtype=float)
    q = normalize_q(q)
    if q == math.inf:
        out = x.max(axis=axis)
    elif q == -math.inf:
        out = x.min(axis=axis)
    elif q == 1.0:
        out = x.mean(axis=axis)
    elif q == 0.0:
        with np.errstate(divide="ignore"):
            out = np.exp(np.log(x).mean(axis=axis))
    else:
        ref = x.max(axis=axis, keepdims=True) if q > 0 else x.min(axis=axis, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            logs = np.log(x / ref)
            inner = np.log1p(np.expm1(q * logs).mean(axis=axis)) / q
            out = np.squeeze(ref, axis=axis) * np.exp(inner)
        # an all-zero slice (q > 0) or a zero entry (q < 0) gives welfare 0
        out = np.where(np.squeeze(ref, axis=axis) > 0, out, 0.0)
    if np.ndim(out) == 0:
        return float(out)
    return out


def power_mean(values, config: WelfareConfig) -> float:
    """Social welfare ``W_q`` of one utility profile.

    >>> power_mean([1.0, 7.0], WelfareConfig(q=2, u_min=0.0, u_max=10.0))
    5.0
    """
    x = np.asarray(values, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("utility vector must not be empty")
    if np.any(x < config.u_min) or np.any(x > config.u_max):
        raise ValueError(
            f"utilities must lie in [{config.u_min}, {config.u_max}], "
            f"got range [{x.min()}, {x.max()}]"
        )
    if config.q < 1 and np.any(x == 0):
        raise ValueError(f"zero utility is not allowed with q={config.q} < 1")
    result = power_mean_q(x, config.q)
    # guard the [min, max] postcondition against last-ulp drift
    return float(min(max(result, x.min()), x.max()))


def gamma_factor(epsilon: float, a: float, b: float, q: float) -> float:
    """Sensitivity factor of the power mean on ``[a, b]`` at deviation ``epsilon``.

    It rescales the Hoeffding–Serfling exponent so that the bound applies to
    ``W_q`` of a subsample instead of its raw mean.
    """
    q = normalize_q(q)
    if math.isinf(q):
        raise ValueError("gamma_factor is undefined for q = ±inf")
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if not a < b:
        raise ValueError(f"need a < b, got a={a}, b={b}")
    if a < 0 or (a == 0 and q != 1):
        raise ValueError(f"a must be positive for q != 1 (got a={a}, q={q})")

    if q < 0:
        return (1 - 2.0**q) ** 2 * b ** (2 * q - 2) / (a**q - b**q) ** 2
    if q == 0:
        return 1.0 / ((b + epsilon) ** 2 * (math.log(b) - math.log(a)) ** 2)
    if q < 1:
        return q**2 * a ** (2 * q) / ((b + (1 - q) * epsilon) ** 2 * (b**q - a**q) ** 2)
    if q == 1:
        return 1.0 / (b - a) ** 2
    return q**2 * a ** (2 * q) / ((b + q * epsilon) ** 2 * (b**q - a**q) ** 2)


def _check_sizes(n: int, N: int) -> None:
    if not 1 <= n < N:
        raise ValueError(f"need 1 <= n < N, got n={n}, N={N}")


def _clamp(p: float) -> float:
    return min(1.0, max(0.0, p))


def power_mean_concentration_bound(n: int, N: int, epsilon: float, config: WelfareConfig) -> float:
    """Upper bound on ``P(|W_q(X_n) - W_q(X)| >= epsilon)`` for a size-``n``
    subsample drawn without replacement from ``N`` utilities in
    ``[config.u_min, config.u_max]``.

    The bound is only claimed for ``0 < epsilon < W_q(X)``; the formula is
    evaluated for any positive ``epsilon``.  Results are clamped to ``[0, 1]``.
    """
    _check_sizes(n, N)
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if config.is_extreme:
        return 1.0 - n / N
    if config.delta_u == 0:
        return 0.0
    m = min(n, N - n)
    g = gamma_factor(epsilon, config.u_min, config.u_max, config.q)
    exponent = -2.0 * n * epsilon**2 * g / ((1 - n / N) * (1 + 1 / m))
    return _clamp(2.0 * math.exp(exponent))


def hoeffding_serfling_bound(n: int, N: int, epsilon: float, a: float, b: float) -> float:
    """Two-sided Hoeffding–Serfling bound for the mean of a size-``n``
    sample drawn without replacement from ``N`` points in ``[a, b]``."""
    _check_sizes(n, N)
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if a > b:
        raise ValueError(f"need a <= b, got a={a}, b={b}")
    if a == b:
        return 0.0
    m = min(n, N - n)
    exponent = -2.0 * epsilon**2 * n / ((1 - n / N) * (1 + 1 / m) * (b - a) ** 2)
    return _clamp(2.0 * math.exp(exponent))


def sample_assessors(N: int, n: int, rng_seed) -> AssessorSet:
    """Uniform size-``n`` subset of ``range(N)``; deterministic for an int seed."""
    if not 1 <= n <= N:
        raise ValueError(f"need 1 <= n <= N, got n={n}, N={N}")
    rng = as_generator(rng_seed)
    picked = rng.choice(N, size=n, replace=False)
    return AssessorSet(tuple(sorted(int(i) for i in picked)), N)


class InformationalBasis(enum.Enum):
    ONCI = "ONCI"
    CNCI = "CNCI"
    CUCI = "CUCI"
    OLCI = "OLCI"
    CFCI = "CFCI"
    CRSI = "CRSI"


@dataclass(frozen=True)
class AdmissibleQ:
    """Exponents admitted by an informational basis.

    ``impossible`` marks bases for which no acceptable welfare functional
    exists.  ``all_real`` adds every finite exponent to ``values``.
    """

    impossible: bool
    values: frozenset = frozenset()
    all_real: bool = False

    def __contains__(self, q: float) -> bool:
        if self.impossible:
            return False
        q = normalize_q(q)
        return q in self.values or (self.all_real and math.isfinite(q))

    def describe(self) -> str:
        if self.impossible:
            return "impossibility"
        parts = sorted(self.values)
        text = ", ".join("+inf" if v == math.inf else "-inf" if v == -math.inf else f"{v:g}" for v in parts)
        if self.all_real:
            return f"all reals ∪ {{{text}}}"
        return f"{{{text}}}"


_INF = frozenset({math.inf, -math.inf})
_ADMISSIBLE = {
    InformationalBasis.ONCI: AdmissibleQ(impossible=True),
    InformationalBasis.CNCI: AdmissibleQ(impossible=True),
    InformationalBasis.CUCI: AdmissibleQ(False, frozenset({1.0})),
    InformationalBasis.OLCI: AdmissibleQ(False, _INF),
    InformationalBasis.CFCI: AdmissibleQ(False, _INF | {1.0}),
    InformationalBasis.CRSI: AdmissibleQ(False, _INF, all_real=True),
}


def allowed_q_for_basis(basis: InformationalBasis | str) -> AdmissibleQ:
    return _ADMISSIBLE[InformationalBasis(basis)]
