"""Goodness-of-fit tests and reference distributions.

Time-weighted marginals of a trajectory are autocorrelated, so their
p-values are descriptive only; acceptance thresholds for them are placed
on the KS distance ``D`` directly.
"""

import numpy as np
from scipy import special
from scipy import stats as _sps

from .errors import InvalidInput

__all__ = [
    "EmpiricalDistribution",
    "ks_test",
    "ks_2samp",
    "chi_square_test",
    "rayleigh_cdf",
    "std_normal_cdf",
    "uniform_cdf",
    "tabulated_cdf",
]


def rayleigh_cdf(r):
    """CDF of the unit Rayleigh law, ``1 - exp(-r**2 / 2)``."""
    r = np.asarray(r, dtype=float)
    out = -np.expm1(-0.5 * np.square(np.maximum(r, 0.0)))
    return float(out) if out.ndim == 0 else out


def std_normal_cdf(x):
    x = np.asarray(x, dtype=float)
    out = 0.5 * special.erfc(-x / np.sqrt(2.0))
    return float(out) if out.ndim == 0 else out


def uniform_cdf(x):
    x = np.asarray(x, dtype=float)
    out = np.clip(x, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def _weighted_ks_distance(values, weights, cdf):
    order = np.argsort(values, kind="stable")
    values = values[order]
    w = weights[order]
    cum = np.cumsum(w)
    cum /= cum[-1]
    prev = np.concatenate([[0.0], cum[:-1]])
    ref = np.asarray(cdf(values), dtype=float)
    return float(max(np.max(cum - ref), np.max(ref - prev), 0.0))


class EmpiricalDistribution:
    """Weighted histogram or weighted sample store.

    Build with :meth:`from_histogram` or :meth:`from_samples`. Histograms
    carry explicit underflow/overflow mass so that the total weight always
    equals the accumulated time.
    """

    def __init__(self, *, edges=None, weights=None, values=None,
                 underflow=0.0, overflow=0.0):
        if (edges is None) == (values is None):
            raise InvalidInput("give either histogram edges or sample values")
        if edges is not None:
            edges = np.asarray(edges, dtype=float)
            weights = np.asarray(weights, dtype=float)
            if edges.ndim != 1 or len(edges) < 2 or np.any(np.diff(edges) <= 0):
                raise InvalidInput("edges must be strictly increasing")
            if weights.shape != (len(edges) - 1,):
                raise InvalidInput("need one weight per bin")
        else:
            values = np.asarray(values, dtype=float).ravel()
            weights = (np.ones_like(values) if weights is None
                       else np.asarray(weights, dtype=float).ravel())
            if weights.shape != values.shape:
                raise InvalidInput("need one weight per sample")
        if np.any(weights < 0) or underflow < 0 or overflow < 0:
            raise InvalidInput("weights must be nonnegative")
        self.edges = edges
        self.values = values
        self.weights = weights
        self.underflow = float(underflow)
        self.overflow = float(overflow)
        if self.total_weight <= 0:
            raise InvalidInput("total weight must be positive")

    @classmethod
    def from_histogram(cls, edges, weights, underflow=0.0, overflow=0.0):
        return cls(edges=edges, weights=weights, underflow=underflow, overflow=overflow)

    @classmethod
    def from_samples(cls, values, weights=None):
        return cls(values=values, weights=weights)

    @property
    def is_histogram(self):
        return self.edges is not None

    @property
    def total_weight(self):
        return float(np.sum(self.weights) + self.underflow + self.overflow)

    def ks_distance(self, cdf):
        """Sup-distance to a reference CDF.

        Exact for sample stores. For histograms the distance is evaluated
        at the bin edges, where the empirical CDF is exact.
        """
        if not self.is_histogram:
            return _weighted_ks_distance(self.values, self.weights, cdf)
        total = self.total_weight
        cum = (self.underflow + np.concatenate([[0.0], np.cumsum(self.weights)])) / total
        ref = np.asarray(cdf(self.edges), dtype=float)
        return float(np.max(np.abs(cum - ref)))

    def histogram(self, edges):
        """Rebin onto ``edges``; samples are binned, histograms must match."""
        edges = np.asarray(edges, dtype=float)
        if self.is_histogram:
            if not np.array_equal(edges, self.edges):
                raise InvalidInput("rebinning a histogram onto new edges is not supported")
            return self.weights.copy(), self.underflow, self.overflow
        counts, _ = np.histogram(self.values, bins=edges, weights=self.weights)
        under = float(self.weights[self.values < edges[0]].sum())
        over = float(self.weights[self.values > edges[-1]].sum())
        return counts, under, over

    def merge(self, other):
        """Sum of two distributions of the same kind (and same edges)."""
        if self.is_histogram and other.is_histogram:
            if not np.array_equal(self.edges, other.edges):
                raise InvalidInput("histogram edges differ")
            return EmpiricalDistribution.from_histogram(
                self.edges, self.weights + other.weights,
                self.underflow + other.underflow, self.overflow + other.overflow)
        if not self.is_histogram and not other.is_histogram:
            return EmpiricalDistribution.from_samples(
                np.concatenate([self.values, other.values]),
                np.concatenate([self.weights, other.weights]))
        raise InvalidInput("cannot merge a histogram with a sample store")

    def rows(self, edges=None):
        """``(bin_lo, bin_hi, weight)`` rows for CSV export."""
        if self.is_histogram:
            weights, edges = self.weights, self.edges
        else:
            if edges is None:
                raise InvalidInput("sample stores need explicit edges for export")
            weights, _, _ = self.histogram(edges)
        return [(float(lo), float(hi), float(w))
                for lo, hi, w in zip(edges[:-1], edges[1:], weights)]


def ks_test(samples, cdf):
    """One-sample KS test against a reference CDF.

    Returns ``(D, p)`` with ``p`` from the asymptotic Kolmogorov law.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if len(x) < 8:
        raise InvalidInput("KS test needs at least 8 samples")
    d = _weighted_ks_distance(x, np.ones_like(x), cdf)
    return d, float(special.kolmogorov(d * np.sqrt(len(x))))


def ks_2samp(a, b):
    """Two-sample KS distance with asymptotic p-value."""
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    if len(a) < 8 or len(b) < 8:
        raise InvalidInput("KS test needs at least 8 samples per group")
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / len(a)
    fb = np.searchsorted(b, grid, side="right") / len(b)
    d = float(np.max(np.abs(fa - fb)))
    en = np.sqrt(len(a) * len(b) / (len(a) + len(b)))
    return d, float(special.kolmogorov(d * en))


def _merge_cells(counts, expected, min_expected):
    merged_c, merged_e = [], []
    acc_c = acc_e = 0.0
    for c, e in zip(counts, expected):
        acc_c += c
        acc_e += e
        if acc_e >= min_expected:
            merged_c.append(acc_c)
            merged_e.append(acc_e)
            acc_c = acc_e = 0.0
    if acc_e > 0 or acc_c > 0:
        if merged_e:
            merged_c[-1] += acc_c
            merged_e[-1] += acc_e
        else:
            merged_c.append(acc_c)
            merged_e.append(acc_e)
    return np.array(merged_c), np.array(merged_e)


def chi_square_test(counts, probs, min_expected=5.0):
    """Pearson chi-square test of counts against cell probabilities.

    Adjacent cells are merged until each expected count reaches
    ``min_expected``. Returns ``(statistic, p)``.
    """
    counts = np.asarray(counts, dtype=float)
    probs = np.asarray(probs, dtype=float)
    if counts.shape != probs.shape or counts.ndim != 1:
        raise InvalidInput("counts and probs must be matching 1-d sequences")
    if np.any(counts < 0) or np.any(counts != np.round(counts)):
        raise InvalidInput("counts must be nonnegative integers")
    if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
        raise InvalidInput("probs must be a probability vector")
    expected = probs * counts.sum()
    obs, exp = _merge_cells(counts, expected, min_expected)
    if len(obs) < 2:
        raise InvalidInput("chi-square test needs at least two cells")
    stat = float(np.sum((obs - exp) ** 2 / exp))
    return stat, float(_sps.chi2.sf(stat, len(obs) - 1))


def tabulated_cdf(density, upper, points=2048, order=16):
    """CDF of ``density`` on ``[0, upper]`` by composite Gauss-Legendre quadrature.

    ``density`` must accept arrays. The integral is accumulated over
    ``points`` panels and linearly interpolated in between; values beyond
    ``upper`` are the total mass.
    """
    grid = np.linspace(0.0, float(upper), int(points) + 1)
    nodes, wts = np.polynomial.legendre.leggauss(int(order))
    half = 0.5 * np.diff(grid)
    mid = 0.5 * (grid[:-1] + grid[1:])
    x = mid[:, None] + half[:, None] * nodes[None, :]
    pieces = half * (np.asarray(density(x.ravel())).reshape(x.shape) @ wts)
    table = np.concatenate([[0.0], np.cumsum(pieces)])

    def cdf(r):
        return np.interp(r, grid, table, left=0.0, right=table[-1])

    return cdf
