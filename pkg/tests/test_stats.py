import math

import numpy as np
import pytest

from markov_billiard.errors import InvalidInput
from markov_billiard.stats import (EmpiricalDistribution, chi_square_test, ks_2samp, ks_test,
                                   rayleigh_cdf, std_normal_cdf, tabulated_cdf, uniform_cdf)


class TestReferenceCdfs:
    def test_values(self):
        assert rayleigh_cdf(0.0) == 0.0
        assert std_normal_cdf(0.0) == 0.5
        assert rayleigh_cdf(math.sqrt(2 * math.log(2))) == pytest.approx(0.5, rel=1e-15)
        assert uniform_cdf(0.25) == 0.25

    @pytest.mark.parametrize("cdf,lo,hi", [(rayleigh_cdf, -1, 40), (std_normal_cdf, -40, 40),
                                           (uniform_cdf, -1, 2)])
    def test_monotone_with_limits(self, cdf, lo, hi):
        grid = np.linspace(lo, hi, 10_001)
        values = cdf(grid)
        assert np.all(np.diff(values) >= 0)
        assert values[0] == pytest.approx(0.0, abs=1e-15)
        assert values[-1] == pytest.approx(1.0, abs=1e-15)


class TestKs:
    def test_point_mass(self):
        d, _ = ks_test(np.full(100, 0.5), uniform_cdf)
        assert d == pytest.approx(0.5)

    def test_permutation_invariant(self, rng):
        x = rng.random(500)
        assert ks_test(x, uniform_cdf) == ks_test(rng.permutation(x), uniform_cdf)

    def test_distance_in_unit_interval(self, rng):
        d, p = ks_test(rng.normal(3, 1, 100), uniform_cdf)
        assert 0 <= d <= 1 and 0 <= p <= 1

    def test_matches_scipy(self, rng):
        from scipy import stats
        x = rng.standard_normal(2000)
        d, _ = ks_test(x, std_normal_cdf)
        assert d == pytest.approx(stats.kstest(x, "norm").statistic, rel=1e-12)

    def test_calibration(self, rng):
        passes = sum(ks_test(rng.random(10_000), uniform_cdf)[1] > 1e-3 for _ in range(100))
        assert passes >= 99

    def test_too_few(self):
        with pytest.raises(InvalidInput):
            ks_test([0.1, 0.2], uniform_cdf)

    def test_two_sample_equal_sets(self, rng):
        x = rng.random(100)
        d, p = ks_2samp(x, x.copy())
        assert d == 0.0 and p == 1.0

    def test_two_sample_matches_scipy(self, rng):
        from scipy import stats
        a, b = rng.random(300), rng.random(400) ** 1.1
        assert ks_2samp(a, b)[0] == pytest.approx(stats.ks_2samp(a, b).statistic, rel=1e-12)


class TestChiSquare:
    def test_proportional(self):
        stat, p = chi_square_test([10, 20, 70], [0.1, 0.2, 0.7])
        assert stat == 0.0 and p == 1.0

    def test_hand_value(self):
        stat, _ = chi_square_test([55, 45], [0.5, 0.5])
        assert stat == pytest.approx(1.0)

    def test_single_cell(self):
        with pytest.raises(InvalidInput):
            chi_square_test([10], [1.0])

    def test_merges_small_cells(self):
        # expected counts 1, 1, 98: the two small cells merge with the big one
        with pytest.raises(InvalidInput):
            chi_square_test([1, 1, 98], [0.01, 0.01, 0.98])
        stat, p = chi_square_test([3, 4, 40, 53], [0.03, 0.04, 0.4, 0.53])
        assert stat == pytest.approx(0.0, abs=1e-12)

    def test_reorder_invariant(self):
        counts = np.array([30, 25, 45])
        probs = np.array([0.3, 0.3, 0.4])
        order = [2, 0, 1]
        assert chi_square_test(counts, probs)[0] == pytest.approx(
            chi_square_test(counts[order], probs[order])[0])

    def test_bad_probs(self):
        with pytest.raises(InvalidInput):
            chi_square_test([5, 5], [0.5, 0.6])


class TestEmpiricalDistribution:
    def test_histogram_total_weight(self):
        d = EmpiricalDistribution.from_histogram([0, 1, 2], [1.0, 2.0], underflow=0.5)
        assert d.total_weight == 3.5

    def test_uniform_histogram_is_exact(self):
        d = EmpiricalDistribution.from_histogram(np.linspace(0, 1, 11), np.ones(10))
        assert d.ks_distance(uniform_cdf) == pytest.approx(0.0, abs=1e-15)

    def test_weighted_samples(self):
        d = EmpiricalDistribution.from_samples([0.25, 0.75], [3.0, 1.0])
        assert d.ks_distance(uniform_cdf) == pytest.approx(0.5)

    def test_merge_and_rows(self):
        a = EmpiricalDistribution.from_histogram([0, 1, 2], [1.0, 2.0])
        b = EmpiricalDistribution.from_histogram([0, 1, 2], [0.5, 0.5], overflow=1.0)
        m = a.merge(b)
        assert m.rows() == [(0.0, 1.0, 1.5), (1.0, 2.0, 2.5)]
        assert m.total_weight == 5.0

    def test_samples_to_histogram(self):
        d = EmpiricalDistribution.from_samples([-1.0, 0.5, 0.5, 3.0])
        counts, under, over = d.histogram([0.0, 1.0, 2.0])
        np.testing.assert_array_equal(counts, [2.0, 0.0])
        assert (under, over) == (1.0, 1.0)

    def test_invalid(self):
        with pytest.raises(InvalidInput):
            EmpiricalDistribution.from_histogram([0, 0, 1], [1.0, 1.0])
        with pytest.raises(InvalidInput):
            EmpiricalDistribution.from_samples([1.0], [-1.0])
        with pytest.raises(InvalidInput):
            EmpiricalDistribution.from_histogram([0, 1], [0.0])


class TestTabulatedCdf:
    def test_exact_at_panel_edges(self):
        cdf = tabulated_cdf(lambda r: r * np.exp(-r * r / 2), 12.0, 512)
        r = np.linspace(0, 12, 513)
        np.testing.assert_allclose(cdf(r), rayleigh_cdf(r), atol=1e-14)

    def test_interpolation_error_shrinks_with_panels(self):
        r = np.linspace(0, 6, 1001)
        errs = [np.max(np.abs(tabulated_cdf(lambda s: s * np.exp(-s * s / 2), 12.0, m)(r)
                              - rayleigh_cdf(r))) for m in (512, 2048)]
        assert errs[0] < 1e-4
        assert errs[1] < errs[0] / 10

    def test_saturates_beyond_upper(self):
        cdf = tabulated_cdf(lambda r: np.ones_like(r), 2.0, 16)
        assert cdf(5.0) == pytest.approx(2.0)
        assert cdf(-1.0) == 0.0
