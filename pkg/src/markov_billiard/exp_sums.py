"""Sums of independent exponential random variables.

Closed-form densities and tails for ``sum_j alpha_j E_j`` with the ``E_j``
i.i.d. mean-one exponentials, plus a sampler. The distinct-mean density is
the classical alternating partial-fraction formula; the repeated-mean
density uses the multinomial generalisation of it.

Terms are built from log-magnitudes and added with a compensated sum,
because the alternating signs are the dominant source of round-off.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import DegenerateRates, InvalidInput

__all__ = [
    "ExpSumSpec",
    "MIN_RELATIVE_GAP",
    "hypoexp_density",
    "hypoexp_tail",
    "hypoexp_log_coefficients",
    "mixed_density",
    "partial_fraction_check",
    "sample_exp_sum",
    "normalization_integral",
    "compensated_sum",
]

MIN_RELATIVE_GAP = 1e-6
_CLAMP_RELATIVE = 1e-12
_TAIL_TOLERANCE = 1e-9


@dataclass(frozen=True)
class ExpSumSpec:
    """Means of the exponential summands and how often each occurs."""

    means: tuple
    multiplicities: tuple = None

    def __post_init__(self):
        means = tuple(float(a) for a in np.atleast_1d(self.means))
        if not means:
            raise InvalidInput("at least one mean is required")
        if not all(math.isfinite(a) and a > 0 for a in means):
            raise InvalidInput(f"means must be finite and positive, got {means}")
        mult = self.multiplicities
        if mult is None:
            mult = (1,) * len(means)
        mult = tuple(int(k) for k in np.atleast_1d(mult))
        if len(mult) != len(means):
            raise InvalidInput("one multiplicity per mean is required")
        if any(k < 1 for k in mult):
            raise InvalidInput("multiplicities must be positive integers")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "multiplicities", mult)

    @property
    def total_terms(self):
        return sum(self.multiplicities)

    def require_distinct(self):
        """Raise :class:`DegenerateRates` if two means are closer than the gap."""
        a = np.asarray(self.means)
        if len(a) < 2:
            return
        big = np.maximum(a[:, None], a[None, :])
        gap = np.abs(a[:, None] - a[None, :]) / big
        np.fill_diagonal(gap, np.inf)
        if gap.min() < MIN_RELATIVE_GAP:
            i, j = np.unravel_index(np.argmin(gap), gap.shape)
            raise DegenerateRates(
                f"means {a[i]!r} and {a[j]!r} have relative gap {gap[i, j]:.3g}"
                f" < {MIN_RELATIVE_GAP}"
            )


def _as_spec(spec):
    if isinstance(spec, ExpSumSpec):
        return spec
    return ExpSumSpec(tuple(np.atleast_1d(spec)))


def _require_simple(spec):
    if any(k != 1 for k in spec.multiplicities):
        raise InvalidInput("this closed form needs every multiplicity equal to 1")
    spec.require_distinct()


def compensated_sum(terms):
    """Neumaier-compensated sum over the last axis."""
    terms = np.asarray(terms, dtype=float)
    total = np.zeros(terms.shape[:-1])
    comp = np.zeros(terms.shape[:-1])
    for j in range(terms.shape[-1]):
        x = terms[..., j]
        t = total + x
        comp += np.where(np.abs(total) >= np.abs(x), (total - t) + x, (x - t) + total)
        total = t
    return total + comp


def hypoexp_log_coefficients(means):
    """Log-magnitudes and signs of the density coefficients.

    The density of ``sum_j means[j] * E_j`` is
    ``sum_j sign[j] * exp(log_coef[j] - u / means[j])``.
    """
    rates = 1.0 / np.asarray(means, dtype=float)
    k = len(rates)
    log_coef = np.full(k, np.sum(np.log(rates)))
    sign = np.ones(k)
    for j in range(k):
        diff = np.delete(rates, j) - rates[j]
        log_coef[j] -= np.sum(np.log(np.abs(diff)))
        sign[j] = np.prod(np.sign(diff))
    return log_coef, sign


def _scalar_or_array(u, values):
    return float(values) if np.ndim(u) == 0 else values


def _check_points(u, name):
    u = np.asarray(u, dtype=float)
    if np.any(~np.isfinite(u)) or np.any(u < 0):
        raise InvalidInput(f"{name} must be finite and nonnegative")
    return u


def _clamp_density(values, scale):
    bad = values < -_CLAMP_RELATIVE * np.maximum(scale, np.finfo(float).tiny)
    if np.any(bad):
        raise DegenerateRates("density cancelled to a significantly negative value")
    return np.maximum(values, 0.0)


def hypoexp_density(spec, u):
    """Density of a sum of exponentials with distinct means.

    Parameters
    ----------
    spec : ExpSumSpec or sequence of float
        Distinct positive means, all multiplicities one.
    u : float or array_like
        Nonnegative evaluation points.
    """
    spec = _as_spec(spec)
    _require_simple(spec)
    pts = _check_points(u, "u")
    means = np.asarray(spec.means)
    log_coef, sign = hypoexp_log_coefficients(means)
    terms = sign * np.exp(log_coef - np.atleast_1d(pts)[:, None] / means)
    values = _clamp_density(compensated_sum(terms), np.abs(terms).sum(axis=-1))
    return _scalar_or_array(u, values.reshape(pts.shape))


def hypoexp_tail(spec, t):
    """``P(sum_j alpha_j E_j >= t)`` for distinct means."""
    spec = _as_spec(spec)
    _require_simple(spec)
    pts = _check_points(t, "t")
    means = np.asarray(spec.means)
    log_coef, sign = hypoexp_log_coefficients(means)
    terms = sign * np.exp(log_coef + np.log(means) - np.atleast_1d(pts)[:, None] / means)
    values = compensated_sum(terms)
    if np.any(values < -_TAIL_TOLERANCE) or np.any(values > 1 + _TAIL_TOLERANCE):
        raise DegenerateRates("tail probability left [0, 1] beyond round-off")
    values = np.clip(values, 0.0, 1.0)
    return _scalar_or_array(t, values.reshape(pts.shape))


def _compositions(total, parts):
    """All tuples of ``parts`` nonnegative integers summing to ``total``."""
    if parts == 0:
        if total == 0:
            yield ()
        return
    for cut in itertools.combinations(range(total + parts - 1), parts - 1):
        bounds = (-1,) + cut + (total + parts - 1,)
        yield tuple(bounds[i + 1] - bounds[i] - 1 for i in range(parts))


def _mixed_coefficients(means, mult):
    """Coefficients ``A[i][j-1]`` of ``u**(j-1) * exp(-u / means[i])``."""
    rates = 1.0 / np.asarray(means)
    r = len(means)
    coefs = []
    for i in range(r):
        others = [l for l in range(r) if l != i]
        row = []
        for j in range(1, mult[i] + 1):
            inner = []
            for m in _compositions(mult[i] - j, len(others)):
                prod = 1.0
                for l, ml in zip(others, m):
                    kl = mult[l]
                    prod *= math.comb(kl + ml - 1, ml) * rates[l] ** kl
                    prod /= (rates[l] - rates[i]) ** (kl + ml)
                inner.append(prod)
            base = rates[i] ** mult[i] * (-1) ** (mult[i] - j) / math.factorial(j - 1)
            row.append(base * math.fsum(inner))
        coefs.append(row)
    return coefs


def mixed_density(spec, u):
    """Density of a sum of exponentials where mean ``alpha_i`` occurs ``k_i`` times."""
    spec = _as_spec(spec)
    spec.require_distinct()
    pts = _check_points(u, "u")
    means = np.asarray(spec.means)
    coefs = _mixed_coefficients(spec.means, spec.multiplicities)
    flat = np.atleast_1d(pts)
    with np.errstate(divide="ignore"):
        logu = np.log(flat)
    columns = []
    for i, row in enumerate(coefs):
        for j, a in enumerate(row):
            if a == 0.0:
                continue
            if j == 0:
                power = np.zeros_like(flat)
            else:
                power = np.where(flat > 0, j * logu, -np.inf)
            columns.append(
                math.copysign(1.0, a) * np.exp(math.log(abs(a)) + power - flat / means[i])
            )
    terms = np.stack(columns, axis=-1)
    values = _clamp_density(compensated_sum(terms), np.abs(terms).sum(axis=-1))
    return _scalar_or_array(u, values.reshape(pts.shape))


def partial_fraction_check(z, z0):
    """Residual of the partial-fraction expansion of ``1 / prod_j (z_j - z0)``.

    Returns ``|lhs - rhs|``; a large value flags poor conditioning of the
    point set.
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if len(z) < 2:
        raise InvalidInput("need at least two points")
    if np.any(z == z0):
        raise DegenerateRates("z0 coincides with one of the points")
    if len(np.unique(z)) != len(z):
        raise DegenerateRates("points must be pairwise distinct")
    lhs = 1.0 / np.prod(z - z0)
    rhs_terms = []
    for i in range(len(z)):
        rhs_terms.append(1.0 / ((z[i] - z0) * np.prod(np.delete(z, i) - z[i])))
    return abs(lhs - math.fsum(rhs_terms))


def sample_exp_sum(spec, rng, size=None):
    """Draw ``sum_j alpha_j E_j`` respecting multiplicities."""
    spec = _as_spec(spec)
    total = 0.0 if size is None else np.zeros(size)
    for a, k in zip(spec.means, spec.multiplicities):
        total = total + a * rng.standard_gamma(k, size)
    return total


def _truncation_point(spec, bound=1e-12):
    """``T`` with ``P(S > T) < bound`` by a Chernoff estimate.

    With ``s = 1 / (2 max alpha)`` every factor ``1 / (1 - s alpha_j)`` is at
    most 2, so ``P(S > T) <= 2**K exp(-T / (2 max alpha))``.
    """
    top = max(spec.means)
    return 2.0 * top * (spec.total_terms * math.log(2.0) - math.log(bound))


def normalization_integral(spec, tail_bound=1e-12):
    """Adaptive quadrature of the density over ``[0, T]``.

    ``T`` is chosen so the neglected tail mass is below ``tail_bound``.
    Returns ``(integral, quadrature_error_estimate)``.
    """
    spec = _as_spec(spec)
    upper = _truncation_point(spec, tail_bound)
    if all(k == 1 for k in spec.multiplicities):
        def f(u):
            return hypoexp_density(spec, u)
    else:
        def f(u):
            return mixed_density(spec, u)
    breaks = sorted({a for a in spec.means if a < upper})
    value, err = integrate.quad(
        f, 0.0, upper, epsabs=1e-13, epsrel=1e-12, limit=500, points=breaks or None
    )
    return value, err
