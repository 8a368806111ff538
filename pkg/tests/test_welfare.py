import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from paa.welfare import (
    AssessorSet,
    InformationalBasis,
    WelfareConfig,
    allowed_q_for_basis,
    gamma_factor,
    hoeffding_serfling_bound,
    power_mean,
    power_mean_concentration_bound,
    power_mean_q,
    sample_assessors,
)

mpmath.mp.dps = 50


def mp_power_mean(values, q):
    xs = [mpmath.mpf(v) for v in values]
    if q == 0:
        return mpmath.exp(mpmath.fsum(mpmath.log(x) for x in xs) / len(xs))
    return (mpmath.fsum(x**q for x in xs) / len(xs)) ** (1 / mpmath.mpf(q))


# Frozen from 50-digit evaluations of the expressions in the comments.
GAMMA_Q0 = 1.7201396537236428  # 1 / ((1.1)^2 (ln 2)^2)
LEMMA2_EXAMPLE = 0.2814959740824614  # 2 exp(-2*50*0.01 / (0.5 * 1.02))


def test_frozen_constants_match_high_precision():
    g = 1 / ((mpmath.mpf("1.1")) ** 2 * mpmath.log(2) ** 2)
    assert float(g) == pytest.approx(GAMMA_Q0, rel=1e-15)
    b = 2 * mpmath.exp(-2 * 50 * mpmath.mpf("0.01") / (mpmath.mpf("0.5") * mpmath.mpf("1.02")))
    assert float(b) == pytest.approx(LEMMA2_EXAMPLE, rel=1e-15)


class TestPowerMean:
    cfg = staticmethod(lambda q: WelfareConfig(q, 0.0 if q >= 1 else 0.1, 10.0))

    def test_arithmetic(self):
        assert power_mean([2, 4], self.cfg(1)) == 3

    def test_geometric(self):
        assert power_mean([1, 4], self.cfg(0)) == pytest.approx(2, rel=1e-15)

    def test_quadratic(self):
        assert power_mean([1, 7], self.cfg(2)) == pytest.approx(5, rel=1e-15)

    def test_min_branch(self):
        assert power_mean([3, 5, 9], self.cfg(-math.inf)) == 3

    def test_max_branch(self):
        assert power_mean([3, 5, 9], self.cfg(math.inf)) == 9

    def test_large_exponent_treated_as_extreme(self):
        assert WelfareConfig(2e6, 0.1, 1).q == math.inf
        assert WelfareConfig(-1e6, 0.1, 1).q == -math.inf
        assert WelfareConfig(999_999.0, 0.1, 1).q == 999_999.0

    @pytest.mark.parametrize("q", [-50.0, -2.0, -0.3, 0.0, 0.5, 1.0, 3.0, 80.0])
    def test_matches_high_precision(self, q):
        rng = np.random.default_rng(7)
        v = rng.uniform(0.1, 1.0, size=17)
        assert power_mean(v, WelfareConfig(q, 0.1, 1.0)) == pytest.approx(float(mp_power_mean(v, q)), rel=1e-12)

    def test_no_overflow_for_big_exponent(self):
        v = [1e3, 2e3, 5e2]
        got = power_mean(v, WelfareConfig(500, 1.0, 1e4))
        assert math.isfinite(got)
        assert got == pytest.approx(float(mp_power_mean(v, 500)), rel=1e-12)

    def test_vectorized_axis(self):
        u = np.array([[1.0, 2.0], [4.0, 8.0]])
        np.testing.assert_allclose(power_mean_q(u, 0, axis=0), [2.0, 4.0], rtol=1e-15)

    def test_errors(self):
        with pytest.raises(ValueError):
            power_mean([], self.cfg(1))
        with pytest.raises(ValueError):
            power_mean([11.0], self.cfg(1))
        with pytest.raises(ValueError):
            WelfareConfig(0.5, 0.0, 1.0)
        with pytest.raises(ValueError):
            WelfareConfig(1.0, 2.0, 1.0)
        with pytest.raises(ValueError):
            WelfareConfig(float("nan"), 0.1, 1.0)


vectors = st.lists(st.floats(0.1, 1.0), min_size=1, max_size=12)
exponents = st.one_of(st.floats(-40, 40), st.sampled_from([0.0, math.inf, -math.inf]))


@settings(max_examples=300, deadline=None)
@given(vectors, exponents)
def test_bounded_by_min_and_max(v, q):
    w = power_mean(v, WelfareConfig(q, 0.1, 1.0))
    assert min(v) <= w <= max(v)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.1, 1.0), st.integers(1, 20), exponents)
def test_constant_vector_is_fixed_point(c, size, q):
    assert power_mean([c] * size, WelfareConfig(q, 0.1, 1.0)) == pytest.approx(c, rel=1e-12)


@settings(max_examples=300, deadline=None)
@given(vectors, exponents, exponents)
def test_monotone_in_exponent(v, q1, q2):
    lo, hi = sorted([q1, q2])
    assert power_mean(v, WelfareConfig(lo, 0.1, 1.0)) <= power_mean(v, WelfareConfig(hi, 0.1, 1.0)) + 1e-12


@settings(max_examples=200, deadline=None)
@given(vectors)
def test_continuous_at_zero(v):
    g = power_mean(v, WelfareConfig(0, 0.1, 1.0))
    for q in (1e-8, -1e-8):
        assert abs(power_mean(v, WelfareConfig(q, 0.1, 1.0)) - g) <= 1e-6


class TestGammaFactor:
    def test_linear_branch(self):
        assert gamma_factor(0.1, 0.0, 1.0, 1) == 1.0

    def test_negative_branch(self):
        for eps in (1e-3, 0.1, 5.0):
            assert gamma_factor(eps, 0.5, 1.0, -1) == pytest.approx(0.25, rel=1e-15)

    def test_log_branch(self):
        assert gamma_factor(0.1, 0.5, 1.0, 0) == pytest.approx(GAMMA_Q0, rel=1e-12)

    @pytest.mark.parametrize("q", [-3.0, -0.5, 0.0, 0.3, 0.9, 1.0, 1.5, 4.0])
    def test_all_branches_match_high_precision(self, q):
        e, a, b = mpmath.mpf("0.07"), mpmath.mpf("0.2"), mpmath.mpf("0.9")
        if q < 0:
            ref = (1 - 2**q) ** 2 * b ** (2 * q - 2) / (a**q - b**q) ** 2
        elif q == 0:
            ref = 1 / ((b + e) ** 2 * (mpmath.log(b) - mpmath.log(a)) ** 2)
        elif q < 1:
            ref = q**2 * a ** (2 * q) / ((b + (1 - q) * e) ** 2 * (b**q - a**q) ** 2)
        elif q == 1:
            ref = 1 / (b - a) ** 2
        else:
            ref = q**2 * a ** (2 * q) / ((b + q * e) ** 2 * (b**q - a**q) ** 2)
        assert gamma_factor(0.07, 0.2, 0.9, q) == pytest.approx(float(ref), rel=1e-12)

    def test_errors(self):
        for args in [(0.1, 0.5, 1.0, math.inf), (0.0, 0.5, 1.0, 1), (0.1, 1.0, 1.0, 1), (0.1, 0.0, 1.0, 2)]:
            with pytest.raises(ValueError):
                gamma_factor(*args)


class TestConcentrationBounds:
    def test_extreme_exponent(self):
        for eps in (0.01, 0.5, 3.0):
            assert power_mean_concentration_bound(50, 100, eps, WelfareConfig(math.inf, 0, 1)) == 0.5
            assert power_mean_concentration_bound(50, 100, eps, WelfareConfig(-math.inf, 0.1, 1)) == 0.5

    def test_linear_example(self):
        got = power_mean_concentration_bound(50, 100, 0.1, WelfareConfig(1, 0, 1))
        assert got == pytest.approx(LEMMA2_EXAMPLE, rel=1e-12)

    def test_clamped(self):
        assert power_mean_concentration_bound(1, 100, 1e-6, WelfareConfig(1, 0, 1)) == 1.0

    def test_hoeffding_serfling_example(self):
        assert hoeffding_serfling_bound(50, 100, 0.1, 0, 1) == pytest.approx(LEMMA2_EXAMPLE, rel=1e-12)

    def test_hoeffding_serfling_constant_population(self):
        for n in (1, 10, 99):
            assert hoeffding_serfling_bound(n, 100, 0.1, 0.5, 0.5) == 0.0

    def test_hoeffding_serfling_clamped(self):
        assert hoeffding_serfling_bound(1, 2, 0.1, 0, 1) == 1.0

    def test_linear_exponent_agrees_with_hoeffding_serfling(self):
        for n, eps in [(10, 0.05), (70, 0.2), (99, 0.01)]:
            assert power_mean_concentration_bound(n, 100, eps, WelfareConfig(1, 0.2, 0.7)) == pytest.approx(
                hoeffding_serfling_bound(n, 100, eps, 0.2, 0.7), rel=1e-14)

    def test_size_errors(self):
        with pytest.raises(ValueError):
            power_mean_concentration_bound(100, 100, 0.1, WelfareConfig(1, 0, 1))
        with pytest.raises(ValueError):
            hoeffding_serfling_bound(0, 100, 0.1, 0, 1)


class TestAssessors:
    def test_full_set(self):
        for seed in range(5):
            assert sample_assessors(5, 5, seed).indices == (0, 1, 2, 3, 4)

    def test_deterministic(self):
        assert sample_assessors(100, 7, 42) == sample_assessors(100, 7, 42)

    def test_single_draw_uniform(self):
        from scipy.stats import chisquare

        counts = np.bincount([sample_assessors(5, 1, seed).indices[0] for seed in range(10_000)], minlength=5)
        sigma = math.sqrt(10_000 * 0.2 * 0.8)
        assert np.all(np.abs(counts - 2000) <= 3 * sigma)
        assert chisquare(counts).pvalue > 1e-3

    def test_errors(self):
        with pytest.raises(ValueError):
            sample_assessors(5, 0, 1)
        with pytest.raises(ValueError):
            sample_assessors(5, 6, 1)
        with pytest.raises(ValueError):
            AssessorSet((1, 1), 5)


class TestInformationalBasis:
    def test_cardinal_unit(self):
        adm = allowed_q_for_basis("CUCI")
        assert 1 in adm and 0 not in adm and adm.describe() == "{1}"

    def test_ordinal_impossible(self):
        assert allowed_q_for_basis(InformationalBasis.ONCI).impossible
        assert allowed_q_for_basis("CNCI").describe() == "impossibility"

    def test_ratio_scale_everything(self):
        adm = allowed_q_for_basis("CRSI")
        for q in (-3.2, 0, 1, 17, math.inf, -math.inf):
            assert q in adm

    def test_level_and_full(self):
        assert math.inf in allowed_q_for_basis("OLCI") and 1 not in allowed_q_for_basis("OLCI")
        assert 1 in allowed_q_for_basis("CFCI") and 2 not in allowed_q_for_basis("CFCI")
