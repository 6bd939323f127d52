"""Reflection laws: level probabilities, exit speeds and samplers.

A particle entering a boundary layer with memory ``ell < 0`` changes the
sign of its memory at a random level ``Z`` and leaves with speed
``sqrt(2 * sum_{j >= Z} lambda_j E_j)``. With ``x = ell**2 / 2`` and
``Z_m = sum_{j=m}^{N-1} mu_j E_j`` the level law is

    P(Z = m) = P(Z_{m-1} >= x) - P(Z_m >= x) = mu_{m-1} * f_{Z_{m-1}}(x),

for ``m >= 1``, with ``P(Z = 0)`` the complement. Level ``N`` is the site
where the particle enters, so ``P(Z = N) = exp(-x / mu_{N-1})``.

Incoming ``ell > 0`` (the upper endpoint) is handled by mirroring.
"""

import math
from collections import namedtuple
from dataclasses import dataclass

import numpy as np
from scipy import stats as _sps

from .errors import InvalidInput, NoConvergence, TruncationFailure
from .exp_sums import ExpSumSpec, hypoexp_density, hypoexp_log_coefficients, hypoexp_tail

__all__ = [
    "BoundaryLayer",
    "NoisyLawParams",
    "NoiselessLaw",
    "TruncatedInfiniteLaw",
    "NoisyLaw",
    "derive_rates",
    "geometric_betas",
    "level_probabilities",
    "level_probabilities_discrete",
    "level_probabilities_truncated",
    "truncation_index",
    "exit_speed_density",
    "exit_speed_cdf",
    "sample_reflection",
    "sample_reflection_noisy",
    "noisy_sign_change_prob",
    "sign_change_prob_closed_form",
    "SignChangeRates",
]

_PROB_TOLERANCE = 1e-9
_SERIES_CAP = 100_000
_TRUNCATION_CAP = 10_000


@dataclass(frozen=True)
class BoundaryLayer:
    """Normalized layer weights ``beta_0 >= ... >= beta_N > 0`` and their ratios.

    ``lambdas[i] = beta_i / sum_{j<=i} beta_j`` and
    ``mus[i] = beta_{i+1} / sum_{j<=i} beta_j``. Build with :func:`derive_rates`.
    """

    betas: tuple
    lambdas: tuple
    mus: tuple

    @property
    def N(self):
        return len(self.betas) - 1


def derive_rates(betas):
    """Normalize ``betas`` and compute the lambda and mu ratios.

    Examples
    --------
    >>> layer = derive_rates([0.5, 0.3, 0.2])
    >>> layer.lambdas
    (1.0, 0.375, 0.2)
    """
    raw = [float(b) for b in np.atleast_1d(np.asarray(betas, dtype=float))]
    if not raw:
        raise InvalidInput("a layer needs at least one weight")
    if not all(math.isfinite(b) and b > 0 for b in raw):
        raise InvalidInput(f"layer weights must be finite and positive, got {raw}")
    for i in range(len(raw) - 1):
        if raw[i + 1] > raw[i]:
            raise InvalidInput(
                f"layer weights must be nonincreasing; beta[{i + 1}]={raw[i + 1]}"
                f" > beta[{i}]={raw[i]}"
            )
    total = math.fsum(raw)
    beta = [b / total for b in raw]
    partial = [math.fsum(beta[: i + 1]) for i in range(len(beta))]
    lambdas = [1.0] + [beta[i] / partial[i] for i in range(1, len(beta))]
    mus = [beta[i + 1] / partial[i] for i in range(len(beta) - 1)]
    return BoundaryLayer(tuple(beta), tuple(lambdas), tuple(mus))


def geometric_betas(ratio, count):
    """First ``count`` weights ``(1 - r) r**j`` of the geometric infinite layer."""
    if not 0 < ratio < 1:
        raise InvalidInput("geometric ratio must lie in (0, 1)")
    j = np.arange(count)
    return (1.0 - ratio) * ratio ** j


def _check_ell_negative(ell):
    ell = float(ell)
    if not math.isfinite(ell) or ell >= 0:
        raise InvalidInput(f"incoming memory must be negative and finite, got {ell}")
    return ell


def _finish_probabilities(upper):
    """Prepend the complement level and validate the vector."""
    p0 = 1.0 - math.fsum(upper)
    p = np.concatenate([[p0], upper])
    if np.any(p < -_PROB_TOLERANCE):
        raise InvalidInput(f"level probabilities left [0, 1]: {p}")
    p = np.maximum(p, 0.0)
    if abs(p.sum() - 1.0) > _PROB_TOLERANCE:
        raise InvalidInput(f"level probabilities do not sum to one: {p.sum()}")
    return p


def level_probabilities_discrete(ell, mus_n):
    """Level law from the ratios ``mu_i(n)`` of a finite chain.

    Parameters
    ----------
    ell : float
        Incoming memory, negative.
    mus_n : sequence of float
        Pairwise distinct positive ratios ``mu_0, ..., mu_{N-1}``.

    Returns
    -------
    numpy.ndarray
        ``p[k] = P(Z = k)`` for ``k = 0..N``.
    """
    ell = _check_ell_negative(ell)
    mus = np.atleast_1d(np.asarray(mus_n, dtype=float))
    if len(mus) == 0:
        return np.array([1.0])
    if np.any(~np.isfinite(mus)) or np.any(mus <= 0):
        raise InvalidInput("mu ratios must be finite and positive")
    x = 0.5 * ell * ell
    ExpSumSpec(tuple(mus)).require_distinct()
    upper = [mus[k - 1] * hypoexp_density(mus[k - 1:], x) for k in range(1, len(mus) + 1)]
    return _finish_probabilities(upper)


def level_probabilities(ell, layer):
    """Level law ``P(Z = k)``, ``k = 0..N``, for incoming memory ``ell < 0``."""
    return level_probabilities_discrete(ell, layer.mus)


def truncation_index(mus, threshold, cap=_TRUNCATION_CAP):
    """Smallest ``J`` with ``sum_{j > J} mus[j] < threshold``.

    Entries past the end of ``mus`` count as zero.
    """
    mus = np.asarray(mus, dtype=float)
    if np.any(~np.isfinite(mus)) or np.any(mus < 0):
        raise InvalidInput("sequence entries must be finite and nonnegative")
    tails = np.concatenate([np.cumsum(mus[::-1])[::-1][1:], [0.0]])
    hits = np.flatnonzero(tails < threshold)
    if len(hits) == 0 or hits[0] >= cap:
        raise TruncationFailure(f"tail sum did not drop below {threshold:g} within {cap} terms")
    return int(hits[0])


def level_probabilities_truncated(ell, mus, eps, cap=_TRUNCATION_CAP):
    """Level law of an infinite layer, truncated where the mu tail is below ``eps * ell**2 / 2``.

    The returned vector has ``J + 2`` entries, ``J`` being the truncation index.
    """
    ell = _check_ell_negative(ell)
    if not eps > 0:
        raise InvalidInput("eps must be positive")
    J = truncation_index(mus, eps * 0.5 * ell * ell, cap)
    return level_probabilities_discrete(ell, np.asarray(mus, dtype=float)[: J + 1])


def _check_level(k, lambdas):
    lambdas = np.atleast_1d(np.asarray(lambdas, dtype=float))
    if not 0 <= int(k) < len(lambdas):
        raise InvalidInput(f"level {k} outside 0..{len(lambdas) - 1}")
    return lambdas[int(k):]


def exit_speed_density(k, lambdas, r):
    """Density of ``sqrt(2 * sum_{j >= k} lambda_j E_j)`` at ``r > 0``."""
    tail = _check_level(k, lambdas)
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0):
        raise InvalidInput("speed must be nonnegative")
    values = r_arr * np.asarray(hypoexp_density(tail, 0.5 * r_arr * r_arr))
    return float(values) if values.ndim == 0 else values


def exit_speed_cdf(k, lambdas, r):
    """CDF matching :func:`exit_speed_density`, from the closed-form tail."""
    tail = _check_level(k, lambdas)
    r_arr = np.maximum(np.asarray(r, dtype=float), 0.0)
    values = 1.0 - np.asarray(hypoexp_tail(tail, 0.5 * r_arr * r_arr))
    return float(values) if values.ndim == 0 else values


def _truncate_relative(seq, eps):
    seq = np.asarray(seq, dtype=float)
    if len(seq) == 0:
        return seq
    J = truncation_index(seq, eps * seq.sum())
    return seq[: J + 1]


class NoiselessLaw:
    """Reflection law of a finite noiseless layer."""

    kind = "noiseless"

    def __init__(self, layer):
        if not isinstance(layer, BoundaryLayer):
            layer = derive_rates(layer)
        self.layer = layer
        self.lambdas = np.asarray(layer.lambdas)
        self.mus = np.asarray(layer.mus)

    def __repr__(self):
        return f"NoiselessLaw(betas={self.layer.betas})"

    @property
    def N(self):
        return len(self.mus)

    def level_probabilities(self, ell):
        return level_probabilities_discrete(-abs(ell), self.mus)

    def _sample_speed(self, ell, rng, size):
        p = self.level_probabilities(ell)
        n = 1 if size is None else int(np.prod(size))
        cum = np.cumsum(p)
        levels = np.minimum(np.searchsorted(cum, rng.random(n) * cum[-1], side="right"), self.N)
        exps = rng.standard_exponential((n, self.N + 1))
        keep = np.arange(self.N + 1)[None, :] >= levels[:, None]
        speed = np.sqrt(2.0 * np.sum(np.where(keep, exps * self.lambdas, 0.0), axis=1))
        return speed if size is None else speed.reshape(size)

    def pack(self):
        """Flat float64 encoding consumed by the billiard kernels.

        Layout ``[0, N, mus(N), lambdas(N+1), logC(N*N), signC(N*N)]`` where
        row ``k-1`` of ``logC``/``signC`` holds the density coefficients of
        ``sum_{j >= k-1} mu_j E_j`` (unused slots zero).
        """
        N = self.N
        logc = np.zeros((N, N))
        sgn = np.zeros((N, N))
        for k in range(1, N + 1):
            lc, s = hypoexp_log_coefficients(self.mus[k - 1:])
            logc[k - 1, k - 1:] = lc
            sgn[k - 1, k - 1:] = s
        return np.concatenate([[0.0, float(N)], self.mus, self.lambdas,
                               logc.ravel(), sgn.ravel()])


class TruncatedInfiniteLaw(NoiselessLaw):
    """Reflection law of an infinite layer from summable lambda and mu sequences.

    Each sequence is cut where its remaining tail falls below ``eps`` times
    its total; ``lambdas`` is kept at least one entry longer than ``mus`` so
    every level has a speed term.
    """

    kind = "truncated"

    def __init__(self, lambdas, mus, eps=1e-8):
        if not eps > 0:
            raise InvalidInput("eps must be positive")
        lambdas = np.asarray(lambdas, dtype=float)
        mus = np.asarray(mus, dtype=float)
        if np.any(lambdas <= 0) or np.any(mus <= 0):
            raise InvalidInput("lambda and mu entries must be positive")
        mus = _truncate_relative(mus, eps)
        lam = _truncate_relative(lambdas, eps)
        if len(lam) < len(mus) + 1:
            if len(lambdas) < len(mus) + 1:
                raise InvalidInput("lambda sequence must be longer than the mu sequence")
            lam = lambdas[: len(mus) + 1]
        if len(mus):
            ExpSumSpec(tuple(mus)).require_distinct()
        self.layer = None
        self.eps = float(eps)
        self.lambdas = lam
        self.mus = mus

    def __repr__(self):
        return f"TruncatedInfiniteLaw(levels={self.N + 1}, eps={self.eps:g})"

    @classmethod
    def from_betas(cls, betas, eps=1e-8):
        """Build from a (long) nonincreasing weight sequence."""
        layer = derive_rates(betas)
        return cls(layer.lambdas, layer.mus, eps)

    @classmethod
    def geometric(cls, ratio, eps=1e-8):
        """Infinite layer with weights proportional to ``ratio**j``."""
        count = int(math.ceil(math.log(eps * 1e-3) / math.log(ratio))) + 2
        return cls.from_betas(geometric_betas(ratio, count), eps)

    def _sample_speed(self, ell, rng, size):
        levels = len(self.mus) + 1
        extra = self.lambdas[levels:]
        speed = NoiselessLaw._sample_speed(self, ell, rng, size)
        if len(extra) == 0:
            return speed
        n = 1 if size is None else int(np.prod(size))
        add = 2.0 * (rng.standard_exponential((n, len(extra))) @ extra)
        out = np.sqrt(np.square(speed.ravel()) + add)
        return out if size is None else out.reshape(size)

    def pack(self):
        if len(self.lambdas) != len(self.mus) + 1:
            raise InvalidInput("kernel encoding needs exactly one more lambda than mu")
        return NoiselessLaw.pack(self)


@dataclass(frozen=True)
class NoisyLawParams:
    """Constants of the noisy single-site layer.

    ``gamma2`` is ``inf`` when ``theta1 == 0``; it only enters through
    ``gamma1 * gamma2 / (gamma1 + gamma2) = gamma1 * gamma3``.
    """

    gamma0: float
    gamma1: float
    gamma2: float
    gamma3: float
    beta1_rate: float
    beta2_rate: float
    theta1: float

    def __post_init__(self):
        if not 0 < self.gamma3 <= 1:
            raise InvalidInput("gamma3 must lie in (0, 1]")
        if (self.gamma3 == 1) != (self.theta1 == 0):
            raise InvalidInput("gamma3 equals one exactly when theta1 is zero")
        if not (self.gamma0 > 0 and self.gamma1 > 0):
            raise InvalidInput("gamma0 and gamma1 must be positive")
        if math.isfinite(self.gamma2) != (self.theta1 > 0):
            raise InvalidInput("gamma2 is finite exactly when theta1 is positive")
        if not self.beta1_rate > 0 or self.beta2_rate < 0:
            raise InvalidInput("sign-change rates must be positive")

    @classmethod
    def from_layer(cls, beta1, theta1):
        """Constants for layer weights ``(1 - beta1, beta1)`` and noise level ``theta1``."""
        beta1 = float(beta1)
        theta1 = float(theta1)
        beta0 = 1.0 - beta1
        if not 0 < beta1 <= beta0:
            raise InvalidInput("beta1 must lie in (0, 1/2]")
        if not (math.isfinite(theta1) and theta1 >= 0):
            raise InvalidInput("theta1 must be finite and nonnegative")
        return cls(
            gamma0=2.0 * beta0 / (beta0 + theta1),
            gamma1=2.0 * beta1,
            gamma2=2.0 * beta1 / theta1 if theta1 > 0 else math.inf,
            gamma3=1.0 / (1.0 + theta1),
            beta1_rate=(beta0 + theta1) / beta1,
            beta2_rate=theta1 / beta0,
            theta1=theta1,
        )

    @property
    def stay_scale(self):
        """Mean of one squared-speed increment at site 1, ``gamma1 * gamma3``."""
        return self.gamma1 * self.gamma3


SignChangeRates = namedtuple("SignChangeRates", ["beta1_rate", "beta2_rate"])
SignChangeRates.__doc__ = """Bare leave rates of sites 1 and 0, for evaluating the series alone."""


def sign_change_prob_closed_form(ell, beta1_rate, beta2_rate):
    """Resummed series: ``b2/(b1+b2) + b1/(b1+b2) * exp(-(b1+b2) x)``, ``x = ell**2/2``.

    The site-1/site-0 alternation is a two-state Markov chain in the
    variable ``x``; this is its probability of sitting at site 1 at ``x``.
    """
    ell = _check_ell_negative(ell)
    x = 0.5 * ell * ell
    b1, b2 = float(beta1_rate), float(beta2_rate)
    total = b1 + b2
    return b2 / total + b1 / total * math.exp(-total * x)


def _tail_bound(k, b1, x):
    """Bound on ``P(Y_k < x)``, which dominates the series tail from term ``k``."""
    geometric = (-math.expm1(-b1 * x)) ** k
    return min(geometric, float(_sps.poisson.sf(k - 1, b1 * x)))


def _series_terms(b1, b2, x, tol):
    """Terms ``P(exactly 2k switches by x)`` of the sign-change series.

    Equal rates give Poisson weights directly. Otherwise the alternation is
    uniformized at rate ``max(b1, b2)``: every term is then a sum of
    nonnegative products, avoiding the cancellation in the expanded
    partial-fraction form.
    """
    K = 1
    while _tail_bound(K, b1, x) >= tol:
        K += 1
        if K > _SERIES_CAP:
            raise NoConvergence(f"series tail above {tol:g} after {_SERIES_CAP} terms")
    if b1 == b2:
        return _sps.poisson.pmf(2 * np.arange(K), b1 * x)
    rate = max(b1, b2)
    mean = rate * x
    top = int(_sps.poisson.isf(tol * 1e-3, mean)) + 2
    weights = _sps.poisson.pmf(np.arange(top + 1), mean)
    # q[j]: probability of j real switches after m uniformized events
    switch = np.where(np.arange(2 * K + 1) % 2 == 0, b1, b2) / rate
    q = np.zeros(2 * K + 1)
    q[0] = 1.0
    acc = weights[0] * q[0::2][:K].copy()
    for m in range(1, top + 1):
        moved = q * switch
        q = q - moved
        q[1:] += moved[:-1]
        acc += weights[m] * q[0::2][:K]
    return acc


def noisy_sign_change_prob(ell, params, tol=1e-13):
    """Probability that the memory changes sign at site 1 of a noisy layer.

    Sums the per-visit terms until the tail bound drops below ``tol``. The
    first term is ``exp(-beta1_rate * ell**2 / 2)``.

    Parameters
    ----------
    params : NoisyLawParams or SignChangeRates
        Only ``beta1_rate`` and ``beta2_rate`` are used.
    """
    ell = _check_ell_negative(ell)
    if not tol > 0:
        raise InvalidInput("tol must be positive")
    if not params.beta1_rate > 0 or not params.beta2_rate >= 0:
        raise InvalidInput("rates must be positive")
    x = 0.5 * ell * ell
    terms = _series_terms(params.beta1_rate, params.beta2_rate, x, tol)
    return min(max(math.fsum(terms), 0.0), 1.0)


class NoisyLaw:
    """Reflection law of a noisy single-site layer."""

    kind = "noisy"

    def __init__(self, params):
        self.params = params

    def __repr__(self):
        return f"NoisyLaw(theta1={self.params.theta1:g})"

    def level_probabilities(self, ell):
        p1 = sign_change_prob_closed_form(-abs(ell), self.params.beta1_rate,
                                          self.params.beta2_rate)
        return np.array([1.0 - p1, p1])

    def _sample_speed(self, ell, rng, size):
        return sample_reflection_noisy(-abs(ell), self.params, rng, size)

    def pack(self):
        """Layout ``[1, gamma0, gamma1*gamma3, gamma3, beta1_rate, beta2_rate]``."""
        p = self.params
        return np.array([1.0, p.gamma0, p.stay_scale, p.gamma3, p.beta1_rate, p.beta2_rate])


def sample_reflection_noisy(ell, params, rng, size=None):
    """Outgoing speed after a noisy layer, for incoming memory ``ell < 0``.

    The squared speed is ``S`` if the sign change happens at site 1 and
    ``gamma0 E + S`` if it happens at site 0, where
    ``S = gamma1 gamma3 (E_1 + ... + E_J) + gamma0 (E'_1 + ... + E'_{J-1})``
    and ``J`` is geometric with success probability ``gamma3``.
    """
    ell = _check_ell_negative(ell)
    n = 1 if size is None else int(np.prod(size))
    p1 = sign_change_prob_closed_form(ell, params.beta1_rate, params.beta2_rate)
    at_site0 = rng.random(n) >= p1
    J = rng.geometric(params.gamma3, n)
    s = params.stay_scale * rng.standard_gamma(J)
    back = J - 1
    s += params.gamma0 * np.where(back > 0, rng.standard_gamma(np.maximum(back, 1)), 0.0)
    s += np.where(at_site0, params.gamma0 * rng.standard_exponential(n), 0.0)
    speed = np.sqrt(s)
    if size is None:
        return float(speed[0])
    return speed.reshape(size)


def sample_reflection(ell, law, rng, size=None):
    """Draw outgoing velocities for incoming velocity ``ell``.

    The result has the opposite sign of ``ell``; ``ell > 0`` uses the
    mirror image of the law.
    """
    ell = float(ell)
    if ell == 0 or not math.isfinite(ell):
        raise InvalidInput("incoming velocity must be nonzero and finite")
    speed = law._sample_speed(ell, rng, size)
    if size is None:
        speed = float(np.ravel(speed)[0])
    return -speed if ell > 0 else speed
