"""Acceptance suite: every criterion as a runnable, seeded experiment.

Each criterion returns a list of :class:`Check` rows; a criterion passes
when all of its rows pass. Runtime limits are checks too, so a slow
machine shows up as a failed ``runtime_s`` row rather than a silent skip.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .billiard import BilliardState, simulate_billiard, trajectory_violations
from .chain import (ChainState, Horizon, boundary_excursions, build_chain,
                    check_master_balance, path_violations, simulate_chain)
from .exp_sums import ExpSumSpec, _truncation_point
from .reflection import (NoiselessLaw, NoisyLaw, NoisyLawParams, SignChangeRates,
                         TruncatedInfiniteLaw, derive_rates, exit_speed_density,
                         level_probabilities, noisy_sign_change_prob, sample_reflection)
from .rng import stream
from .stats import (chi_square_test, ks_2samp, ks_test, rayleigh_cdf, std_normal_cdf,
                    tabulated_cdf, uniform_cdf)

__all__ = ["Check", "CriterionResult", "CRITERIA", "run_criterion", "run_all", "report_rows"]

ALPHA = 1e-3
BALANCE_GRID = (-3.0, -2.0, -1.0, -0.5, -0.1, 0.1, 0.5, 1.0, 2.0, 3.0)


@dataclass
class Check:
    metric: str
    value: float
    threshold: float
    passed: bool

    def row(self):
        return (self.metric, f"{self.value:.10g}", f"{self.threshold:.10g}",
                "true" if self.passed else "false")


def _le(metric, value, threshold):
    return Check(metric, float(value), float(threshold), bool(value <= threshold))


def _gt(metric, value, threshold):
    return Check(metric, float(value), float(threshold), bool(value > threshold))


@dataclass
class CriterionResult:
    number: int
    title: str
    checks: list = field(default_factory=list)
    runtime: float = 0.0

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def summary(self):
        status = "PASS" if self.passed else "FAIL"
        worst = [c for c in self.checks if not c.passed]
        detail = ""
        if worst:
            c = worst[0]
            detail = f" ({c.metric}={c.value:.6g}, threshold {c.threshold:.6g})"
        return f"criterion {self.number:2d} {status} {self.title} [{self.runtime:.2f}s]{detail}"


def _rng(seed, number, tag=""):
    return stream(seed, 0, f"criterion-{number}:{tag}")


class _Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start


def random_layer(rng, N):
    """Nonincreasing layer weights, well separated from zero."""
    return derive_rates(np.sort(rng.uniform(0.05, 1.0, N + 1))[::-1])


def race_levels(mus, x, trials, rng):
    """Sign-change level from direct simulation of the exponential race.

    The particle spends ``mu_{j-1} E_j`` of its budget ``x`` at site ``j``
    on the way down; the level is the site where the budget runs out.
    """
    mus = np.asarray(mus, dtype=float)
    if len(mus) == 0:
        return np.zeros(trials, dtype=int)
    spent = np.cumsum((rng.standard_exponential((trials, len(mus))) * mus)[:, ::-1], axis=1)
    return (spent >= x).sum(axis=1)


def race_sign_change_site1(b1, b2, x, trials, rng):
    """Indicator that an alternating two-site race exhausts ``x`` at site 1."""
    budget = np.full(trials, float(x))
    at_one = np.ones(trials, dtype=bool)
    active = np.ones(trials, dtype=bool)
    while active.any():
        idx = np.flatnonzero(active)
        rates = np.where(at_one[idx], b1, b2)
        with np.errstate(divide="ignore"):
            stay = rng.standard_exponential(len(idx)) / rates
        done = stay >= budget[idx]
        active[idx[done]] = False
        moving = idx[~done]
        budget[moving] -= stay[~done]
        at_one[moving] = ~at_one[moving]
    return at_one


def _crit_rayleigh(seed):
    law = NoiselessLaw([1.0])
    rng = _rng(seed, 1)
    with _Timer() as timer:
        draws = sample_reflection(-1.0, law, rng, size=100_000)
        d, _ = ks_test(draws, rayleigh_cdf)
    return [_le("D_sqrt_n", d * math.sqrt(len(draws)), 1.95),
            _le("runtime_s", timer.elapsed, 1.0)]


def _crit_binomial(seed):
    layer = derive_rates([0.25] * 4)
    q = math.exp(-0.5)
    binom = np.array([math.comb(3, k) * q ** k * (1 - q) ** (3 - k) for k in range(4)])
    p = level_probabilities(-1.0, layer)
    checks = [_le("max_abs_diff_binomial", np.max(np.abs(p - binom)), 1e-10)]
    with _Timer() as timer:
        spec = build_chain(10_000, layer, "hard")
        batch = boundary_excursions(spec, -1.0, 100_000, _rng(seed, 2))
        counts = np.bincount(batch.levels, minlength=4)
        _, pval = chi_square_test(counts, binom)
    checks.append(_gt("chi2_p", pval, ALPHA))
    checks.append(_le("runtime_s", timer.elapsed, 30.0))
    return checks


def _crit_level_oracle(seed):
    rng = _rng(seed, 3, "layers")
    worst_z = 0.0
    worst_sum = 0.0
    trials = 100_000
    for i in range(20):
        N = int(rng.integers(1, 7))
        layer = random_layer(rng, N)
        ell = float(rng.uniform(-3.0, -0.2))
        p = level_probabilities(ell, layer)
        worst_sum = max(worst_sum, abs(p.sum() - 1.0))
        levels = race_levels(layer.mus, 0.5 * ell * ell, trials, _rng(seed, 3, f"race-{i}"))
        freq = np.bincount(levels, minlength=N + 1) / trials
        se = np.sqrt(np.maximum(p * (1 - p), 1.0 / trials) / trials)
        worst_z = max(worst_z, float(np.max(np.abs(freq - p) / se)))
    return [_le("max_standard_errors", worst_z, 4.0), _le("max_abs_sum_minus_one", worst_sum, 1e-9)]


def _crit_exit_density(seed):
    rng = _rng(seed, 4, "layer")
    layer = random_layer(rng, 4)
    lam = np.asarray(layer.lambdas)
    worst_int = 0.0
    worst_p = 1.0
    for k in range(len(lam)):
        upper = math.sqrt(2.0 * _truncation_point(ExpSumSpec(tuple(lam[k:])), 1e-14))

        def f(r, k=k):
            return exit_speed_density(k, lam, r)

        total, _ = integrate.quad(f, 0.0, upper, epsabs=1e-13, epsrel=1e-12, limit=400)
        worst_int = max(worst_int, abs(total - 1.0))
        draws = np.sqrt(2.0 * (_rng(seed, 4, f"speed-{k}").standard_exponential(
            (100_000, len(lam) - k)) @ lam[k:]))
        _, p = ks_test(draws, tabulated_cdf(f, upper, 1024))
        worst_p = min(worst_p, p)
    return [_le("max_abs_integral_minus_one", worst_int, 1e-8), _gt("min_ks_p", worst_p, ALPHA)]


def _crit_chain_exact(seed):
    layer = derive_rates([0.5, 0.3, 0.2])
    spec = build_chain(100, layer, "hard")
    batch = boundary_excursions(spec, -1.0, 100_000, _rng(seed, 5, "chain"))
    draws = sample_reflection(-1.0, NoiselessLaw(layer), _rng(seed, 5, "law"), size=100_000)
    _, p = ks_2samp(batch.exit_velocities, draws)
    return [_gt("ks2_p", p, ALPHA)]


def balance_specs():
    """Specs covered by the balance criterion, with labels."""
    layers = {0: "hard", 1: [0.7, 0.3], 3: [0.4, 0.3, 0.2, 0.1]}
    specs = []
    for N, layer in layers.items():
        for n in (16, 100, 10_000):
            specs.append((f"noiseless N={N} n={n}", build_chain(n, layer, layer)))
    for theta in (0.0, 0.3, 2.0):
        for n in (16, 10_000):
            specs.append((f"noisy theta={theta} n={n}",
                          build_chain(n, [0.7, 0.3], [0.6, 0.4], "noisy", theta)))
    return specs


def _crit_balance(seed):
    worst = max(check_master_balance(spec, BALANCE_GRID) / spec.n for _, spec in balance_specs())
    return [_le("max_residual_over_n", worst, 1e-10)]


def _crit_chain_stationarity(seed):
    spec = build_chain(16, [0.7, 0.3], [0.7, 0.3])
    rng = _rng(seed, 7, "init")
    init = ChainState(int(rng.integers(0, 17)), float(rng.standard_normal()))
    with _Timer() as timer:
        run = simulate_chain(spec, init, 10_000_000, _rng(seed, 7, "run"), bins=5600,
                             memory_range=(-7.0, 7.0))
        occ_dev = float(np.max(np.abs(run.occupancy_fraction * 17 - 1.0)))
        d = run.memory.ks_distance(std_normal_cdf)
    return [_le("max_rel_occupancy_dev", occ_dev, 0.02), _le("memory_D", d, 0.02),
            _le("runtime_s", timer.elapsed, 120.0)]


def _crit_billiard_stationarity(seed):
    law = NoiselessLaw([0.7, 0.3])
    with _Timer() as timer:
        run = simulate_billiard(BilliardState(0.5, -1.0), (law, law), 1_000_000,
                                _rng(seed, 8), bins=1000)
        dx = run.x_marginal.ks_distance(uniform_cdf)
        dl = run.l_marginal.ks_distance(std_normal_cdf)
    return [_le("X_D", dx, 0.01), _le("L_D", dl, 0.02), _le("runtime_s", timer.elapsed, 60.0)]


def _crit_noisy_p1(seed):
    checks = []
    worst = 0.0
    for b in (0.5, 1.0, 2.0):
        closed = 0.5 * (1.0 + math.exp(-b))
        worst = max(worst, abs(noisy_sign_change_prob(-1.0, SignChangeRates(b, b)) - closed))
    checks.append(_le("equal_rate_abs_diff", worst, 1e-10))
    worst_z = 0.0
    cases = [(NoisyLawParams.from_layer(0.3, 0.5), -1.0), (SignChangeRates(1.0, 3.0), -1.0),
             (SignChangeRates(0.7, 0.2), -2.0)]
    for i, (params, ell) in enumerate(cases):
        p = noisy_sign_change_prob(ell, params)
        hits = race_sign_change_site1(params.beta1_rate, params.beta2_rate, 0.5 * ell * ell,
                                      100_000, _rng(seed, 9, f"race-{i}"))
        se = math.sqrt(p * (1 - p) / len(hits))
        worst_z = max(worst_z, abs(hits.mean() - p) / se)
    checks.append(_le("unequal_mc_standard_errors", worst_z, 4.0))
    base = noisy_sign_change_prob(-1.0, SignChangeRates(1.0, 1.0))
    gap = max(abs(noisy_sign_change_prob(-1.0, SignChangeRates(1.0, 1.0 + d)) - base)
              for d in (1e-6, 1e-7, 1e-8))
    checks.append(_le("branch_continuity", gap, 1e-6))
    return checks


def _crit_noisy_limit(seed):
    noisy = NoisyLaw(NoisyLawParams.from_layer(0.3, 0.0))
    plain = NoiselessLaw([0.7, 0.3])
    a = sample_reflection(-1.0, noisy, _rng(seed, 10, "noisy"), size=100_000)
    b = sample_reflection(-1.0, plain, _rng(seed, 10, "plain"), size=100_000)
    _, p = ks_2samp(a, b)
    return [_gt("ks2_p", p, ALPHA)]


def _crit_structure(seed):
    bad = 0
    laws = {
        "rayleigh": (NoiselessLaw([1.0]),) * 2,
        "N=1": (NoiselessLaw([0.7, 0.3]),) * 2,
        "mixed": (NoiselessLaw([0.4, 0.3, 0.2, 0.1]), NoisyLaw(NoisyLawParams.from_layer(0.3, 0.5))),
        "infinite": (TruncatedInfiniteLaw.geometric(0.5), NoiselessLaw([0.6, 0.4])),
    }
    for name, pair in laws.items():
        for horizon in (100_000, Horizon(clock=2_000.0)):
            run = simulate_billiard(BilliardState(0.3, 0.8), pair, horizon,
                                    _rng(seed, 11, f"billiard-{name}"))
            bad += trajectory_violations(run.trajectory)
    specs = [build_chain(16, [0.7, 0.3], [0.7, 0.3]),
             build_chain(100, [0.4, 0.3, 0.2, 0.1], "hard"),
             build_chain(16, [0.7, 0.3], [0.6, 0.4], "noisy", 0.5)]
    for i, spec in enumerate(specs):
        run = simulate_chain(spec, ChainState(spec.n // 2, -0.7), 1_000_000,
                             _rng(seed, 11, f"chain-{i}"), trace_cap=1_000_000)
        bad += path_violations(spec, run.trace)
        if spec.mode == "noiseless":
            bad += run.against_flow_jumps
    return [_le("violations", bad, 0)]


CRITERIA = {
    1: ("Rayleigh reflection law", _crit_rayleigh),
    2: ("binomial level law and chain excursions", _crit_binomial),
    3: ("level probabilities vs race oracle", _crit_level_oracle),
    4: ("exit-speed densities", _crit_exit_density),
    5: ("chain excursion exit law equals limit law", _crit_chain_exact),
    6: ("master balance", _crit_balance),
    7: ("chain stationarity", _crit_chain_stationarity),
    8: ("billiard stationarity", _crit_billiard_stationarity),
    9: ("noisy sign-change probability", _crit_noisy_p1),
    10: ("noiseless limit of the noisy law", _crit_noisy_limit),
    11: ("structural invariants", _crit_structure),
}


def run_criterion(number, seed=0):
    title, fn = CRITERIA[number]
    start = time.perf_counter()
    checks = fn(seed)
    return CriterionResult(number, title, checks, time.perf_counter() - start)


def run_all(seed=0, numbers=None):
    numbers = sorted(CRITERIA) if numbers is None else list(numbers)
    return [run_criterion(k, seed) for k in numbers]


def report_rows(results):
    """``(metric, value, threshold, pass)`` rows, metrics prefixed by criterion."""
    rows = []
    for res in results:
        for c in res.checks:
            metric, value, threshold, ok = c.row()
            rows.append((f"c{res.number}.{metric}", value, threshold, ok))
    return rows
