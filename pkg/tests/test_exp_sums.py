import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from markov_billiard.errors import DegenerateRates, InvalidInput
from markov_billiard.exp_sums import (ExpSumSpec, compensated_sum, hypoexp_density,
                                      hypoexp_tail, mixed_density, normalization_integral,
                                      partial_fraction_check, sample_exp_sum)
from markov_billiard.stats import ks_test


def separated_means(min_size=1, max_size=5):
    """Means whose pairwise relative gaps are at least 5%."""
    return st.lists(st.floats(0.05, 5.0), min_size=min_size, max_size=max_size).filter(
        lambda a: all(abs(x - y) / max(x, y) >= 0.05
                      for i, x in enumerate(a) for y in a[i + 1:]))


class TestSpec:
    def test_defaults_to_unit_multiplicities(self):
        spec = ExpSumSpec((1.0, 2.0))
        assert spec.multiplicities == (1, 1)
        assert spec.total_terms == 2

    @pytest.mark.parametrize("means", [(), (0.0,), (-1.0, 2.0), (math.inf,)])
    def test_rejects_bad_means(self, means):
        with pytest.raises(InvalidInput):
            ExpSumSpec(means)

    def test_rejects_bad_multiplicities(self):
        with pytest.raises(InvalidInput):
            ExpSumSpec((1.0, 2.0), (1, 0))
        with pytest.raises(InvalidInput):
            ExpSumSpec((1.0, 2.0), (1,))

    def test_gap_guard(self):
        ExpSumSpec((1.0, 1.0 + 2e-6)).require_distinct()
        with pytest.raises(DegenerateRates):
            ExpSumSpec((1.0, 1.0 + 1e-7)).require_distinct()


class TestDensity:
    def test_single_mean_at_zero(self):
        assert hypoexp_density([1.0], 0.0) == 1.0

    def test_two_means_vanish_at_zero(self):
        assert hypoexp_density([1.0, 2.0], 0.0) == pytest.approx(0.0, abs=1e-15)

    def test_two_means_hand_reduction(self):
        u = math.log(2.0)
        expected = math.exp(-u / 2) - math.exp(-u)
        assert hypoexp_density([1.0, 2.0], u) == pytest.approx(expected, rel=1e-14)
        assert expected == pytest.approx(1 / math.sqrt(2) - 0.5)

    def test_vectorized(self):
        u = np.linspace(0, 5, 7)
        out = hypoexp_density([1.0, 2.0], u)
        np.testing.assert_allclose(out, np.exp(-u / 2) - np.exp(-u), atol=1e-15)

    def test_errors(self):
        with pytest.raises(InvalidInput):
            hypoexp_density([1.0], -0.1)
        with pytest.raises(DegenerateRates):
            hypoexp_density([1.0, 1.0], 1.0)
        with pytest.raises(InvalidInput):
            hypoexp_density(ExpSumSpec((1.0,), (2,)), 1.0)

    def test_many_geometric_means_stay_accurate(self):
        # 21 means with ratio 1/2, as in a truncated infinite layer
        means = 2.0 ** -(np.arange(21) + 1)
        value, _ = normalization_integral(ExpSumSpec(tuple(means)))
        assert value == pytest.approx(1.0, abs=1e-8)

    @settings(max_examples=40, deadline=None)
    @given(separated_means())
    def test_normalization(self, means):
        value, _ = normalization_integral(ExpSumSpec(tuple(means)))
        assert value == pytest.approx(1.0, abs=1e-8)


class TestTail:
    @pytest.mark.parametrize("alpha,t", [(0.5, 0.3), (2.0, 4.0), (1.0, 0.0)])
    def test_single_mean(self, alpha, t):
        assert hypoexp_tail([alpha], t) == pytest.approx(math.exp(-t / alpha), rel=1e-14)

    def test_origin(self):
        assert hypoexp_tail([1.0, 2.0], 0.0) == pytest.approx(1.0, abs=1e-15)

    def test_two_means_hand_integration(self):
        assert hypoexp_tail([1.0, 2.0], math.log(4.0)) == pytest.approx(0.75, rel=1e-14)

    @settings(max_examples=30, deadline=None)
    @given(separated_means())
    def test_monotone_from_one(self, means):
        t = np.linspace(0, 10 * sum(means), 1000)
        tail = hypoexp_tail(means, t)
        assert tail[0] == pytest.approx(1.0, abs=1e-12)
        assert np.all(np.diff(tail) <= 1e-12)
        assert np.all((tail >= 0) & (tail <= 1))


class TestMixedDensity:
    def test_erlang(self):
        spec = ExpSumSpec((1.0,), (2,))
        assert mixed_density(spec, 1.0) == pytest.approx(math.exp(-1.0), rel=1e-14)

    def test_erlang_shape_three_against_gamma(self):
        from scipy import stats
        spec = ExpSumSpec((0.7,), (3,))
        u = np.linspace(0, 6, 13)
        np.testing.assert_allclose(mixed_density(spec, u), stats.gamma.pdf(u, 3, scale=0.7),
                                   rtol=1e-12, atol=1e-15)

    def test_matches_simple_density(self):
        spec = ExpSumSpec((1.0, 2.0), (1, 1))
        assert mixed_density(spec, math.log(2.0)) == pytest.approx(
            hypoexp_density([1.0, 2.0], math.log(2.0)), rel=1e-13)

    @settings(max_examples=30, deadline=None)
    @given(separated_means(1, 4))
    def test_unit_multiplicities_equal_simple_density(self, means):
        u = np.linspace(0, 5 * sum(means), 50)
        np.testing.assert_allclose(mixed_density(ExpSumSpec(tuple(means)), u),
                                   hypoexp_density(means, u), atol=1e-10)

    @pytest.mark.parametrize("means,mult", [((1.0, 2.0), (2, 2)), ((0.5, 1.5, 3.0), (1, 3, 2)),
                                            ((1.0,), (5,))])
    def test_normalization(self, means, mult):
        value, _ = normalization_integral(ExpSumSpec(means, mult))
        assert value == pytest.approx(1.0, abs=1e-8)

    def test_two_groups_against_convolution(self):
        # E1 + E2 + 3(E3 + E4): convolve two Erlang(2) densities numerically
        from scipy import integrate, stats
        spec = ExpSumSpec((1.0, 3.0), (2, 2))
        u = 2.5
        conv, _ = integrate.quad(
            lambda s: stats.gamma.pdf(s, 2) * stats.gamma.pdf(u - s, 2, scale=3.0), 0, u,
            epsabs=1e-14)
        assert mixed_density(spec, u) == pytest.approx(conv, rel=1e-10)


class TestPartialFractions:
    def test_two_points_exact(self):
        assert partial_fraction_check([1.0, 2.0], 0.0) == 0.0

    def test_three_points(self):
        assert partial_fraction_check([1.0, 2.0, 3.0], 0.0) <= 1e-12

    def test_arity(self):
        with pytest.raises(InvalidInput):
            partial_fraction_check([5.0], 0.0)

    def test_coincidence(self):
        with pytest.raises(DegenerateRates):
            partial_fraction_check([1.0, 2.0], 2.0)
        with pytest.raises(DegenerateRates):
            partial_fraction_check([1.0, 1.0], 0.0)

    def test_random_well_separated(self, rng):
        for _ in range(100):
            k = int(rng.integers(2, 7))
            z = np.sort(rng.uniform(0, 10, k))
            if np.min(np.diff(z)) < 0.2:
                z = z[0] + 0.5 * np.arange(k)
            z0 = -1.0 - rng.random()
            assert partial_fraction_check(z, z0) <= 1e-10


class TestSampler:
    def test_exponential_mean(self, rng):
        draws = sample_exp_sum([1.0], rng, size=100_000)
        assert abs(draws.mean() - 1.0) < 0.02

    def test_sum_mean(self, rng):
        draws = sample_exp_sum([1.0, 2.0], rng, size=100_000)
        assert abs(draws.mean() - 3.0) < 0.05

    def test_scalar_draw(self, rng):
        assert sample_exp_sum([1.0], rng) > 0

    def test_against_closed_form(self, rng):
        draws = sample_exp_sum([1.0, 2.0], rng, size=100_000)
        _, p = ks_test(draws, lambda t: 1.0 - hypoexp_tail([1.0, 2.0], t))
        assert p > 1e-3

    def test_random_specs(self, rng):
        for i in range(10):
            k = int(rng.integers(1, 5))
            means = 0.2 + np.arange(k) * 0.5 + rng.random(k) * 0.3
            draws = sample_exp_sum(means, rng, size=100_000)
            _, p = ks_test(draws, lambda t: 1.0 - hypoexp_tail(means, t))
            assert p > 1e-3, (i, means)

    def test_multiplicities(self, rng):
        spec = ExpSumSpec((1.0, 0.25), (2, 3))
        draws = sample_exp_sum(spec, rng, size=100_000)
        assert abs(draws.mean() - 2.75) < 0.03


def test_compensated_sum_recovers_cancelled_terms():
    terms = np.array([1e16, 1.0, -1e16, 1.0])
    assert compensated_sum(terms) == 2.0
    assert np.sum(terms) != 2.0
