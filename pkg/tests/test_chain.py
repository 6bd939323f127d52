import dataclasses
import math

import numpy as np
import pytest

from markov_billiard.chain import (ChainState, Horizon, boundary_excursion, boundary_excursions,
                                   build_chain, check_master_balance, next_jump,
                                   next_jump_thinning, path_violations, simulate_chain,
                                   transition_rate)
from markov_billiard.errors import InvalidInput
from markov_billiard.reflection import (NoiselessLaw, NoisyLaw, NoisyLawParams, derive_rates,
                                        exit_speed_cdf, level_probabilities, sample_reflection)
from markov_billiard.stats import chi_square_test, ks_2samp, ks_test, rayleigh_cdf

GRID = (-3.0, -2.0, -1.0, -0.5, -0.1, 0.1, 0.5, 1.0, 2.0, 3.0)


class TestBuild:
    def test_noiseless_layer(self):
        spec = build_chain(10, [0.8, 0.2], "hard")
        assert (spec.v[0], spec.v[1]) == (8.0, 2.0)
        assert (spec.c[0], spec.c[1]) == (8.0, 10.0)
        assert spec.N0 == 1 and spec.N1 == 0

    def test_hard_boundary(self):
        spec = build_chain(10, "hard", "hard")
        assert spec.N0 == 0 and spec.c[0] == spec.v[0] == 10.0
        assert spec.v[10] == -10.0
        np.testing.assert_array_equal(spec.v[1:10], 0.0)

    def test_noisy(self):
        spec = build_chain(10, [0.6, 0.4], [0.6, 0.4], "noisy", 0.3)
        assert (spec.v[0], spec.v[1]) == (6.0, 4.0)
        assert spec.b[1] == pytest.approx(3.0)
        assert spec.c[0] == pytest.approx(9.0)
        assert spec.c[1] == 10.0

    def test_upper_layer_mirrors_lower(self):
        spec = build_chain(20, [0.5, 0.3, 0.2], [0.5, 0.3, 0.2])
        np.testing.assert_array_equal(spec.v, -spec.v[::-1])
        np.testing.assert_array_equal(spec.c, spec.c[::-1])

    def test_arrays_are_read_only(self):
        spec = build_chain(10, "hard", "hard")
        with pytest.raises(ValueError):
            spec.c[0] = 1.0

    @pytest.mark.parametrize("args", [
        (6, [0.5, 0.3, 0.2], "hard"),
        (10.0, "hard", "hard"),
        (20, [0.4, 0.3, 0.3], "hard", "noisy", 0.1),
        (20, [0.6, 0.4], [0.6, 0.4], "noisy"),
        (20, [0.6, 0.4], [0.6, 0.4], "noiseless", 0.1),
        (20, [0.6, 0.4], [0.6, 0.4], "noisy", -0.1),
        (20, "hard", "hard", "sticky"),
    ])
    def test_rejects(self, args):
        with pytest.raises(InvalidInput):
            build_chain(*args)

    def test_rates_follow_memory_sign(self):
        spec = build_chain(10, [0.6, 0.4], [0.6, 0.4], "noisy", 0.3)
        assert transition_rate(spec, 0, 1, 2.0) == pytest.approx(2 * spec.c[0])
        assert transition_rate(spec, 0, 1, -2.0) == pytest.approx(2 * spec.b[1])
        assert transition_rate(spec, 1, 0, -2.0) == pytest.approx(2 * spec.c[0])
        assert transition_rate(spec, 1, 0, 2.0) == pytest.approx(2 * spec.b[1])
        assert transition_rate(spec, 3, 5, 1.0) == 0.0


class TestBalance:
    @pytest.mark.parametrize("n", [16, 100, 1000])
    @pytest.mark.parametrize("layers", [("hard", "hard"), ([0.7, 0.3], [0.6, 0.4]),
                                        ([0.4, 0.3, 0.2, 0.1], "hard")])
    def test_noiseless(self, n, layers):
        spec = build_chain(n, *layers)
        assert check_master_balance(spec, GRID) <= 1e-10 * n

    @pytest.mark.parametrize("theta", [0.0, 0.3, (0.5, 2.0)])
    def test_noisy(self, theta):
        spec = build_chain(50, [0.7, 0.3], [0.6, 0.4], "noisy", theta)
        assert check_master_balance(spec, GRID) <= 1e-10 * 50

    @pytest.mark.parametrize("edge", [0, 1, 7, 15])
    def test_perturbation_detected(self, edge):
        spec = build_chain(16, [0.7, 0.3], [0.7, 0.3])
        c = spec.c.copy()
        c[edge] += 1.0
        bad = dataclasses.replace(spec, c=c)
        assert check_master_balance(bad, GRID) >= min(abs(g) for g in GRID)


class TestNextJump:
    def test_interior_exponential(self, rng):
        spec = build_chain(20, "hard", "hard")
        waits = []
        for _ in range(5000):
            wait, dest, flag = next_jump(ChainState(10, -1.0), spec, rng)
            assert dest == 9 and not flag
            waits.append(wait)
        _, p = ks_test(waits, lambda t: 1 - np.exp(-20 * np.asarray(t)))
        assert p > 1e-3

    def test_hard_boundary_rayleigh(self, rng):
        n = 50
        spec = build_chain(n, "hard", "hard")
        waits = np.array([next_jump(ChainState(0, 0.0), spec, rng).wait for _ in range(5000)])
        _, p = ks_test(n * waits, rayleigh_cdf)
        assert p > 1e-3

    def test_against_flow_destination(self, rng):
        spec = build_chain(10, [0.6, 0.4], [0.6, 0.4], "noisy", 0.3)
        trials = 20_000
        down = sum(next_jump(ChainState(1, 0.7), spec, rng).destination == 0
                   for _ in range(trials))
        p = spec.b[1] / (spec.c[1] + spec.b[1])
        assert abs(down / trials - p) < 4 * math.sqrt(p * (1 - p) / trials)

    def test_sign_change_first(self, rng):
        # site 1 of a layer with negative memory drifting up: memory may hit zero
        spec = build_chain(10, [0.6, 0.4], "hard")
        flags = [next_jump(ChainState(1, -0.01), spec, rng) for _ in range(200)]
        firsts = [j for j in flags if j.sign_change_first]
        assert firsts
        for j in firsts:
            assert j.destination == 1
            assert j.wait == pytest.approx(0.01 / spec.v[1])

    @pytest.mark.parametrize("state", [ChainState(1, -0.3), ChainState(0, 0.4),
                                       ChainState(1, 0.2), ChainState(2, -0.5),
                                       ChainState(0, -0.2)])
    def test_matches_thinning(self, state, rng):
        spec = build_chain(10, [0.6, 0.4], [0.6, 0.4], "noisy", 0.3)
        a = [next_jump(state, spec, rng) for _ in range(4000)]
        b = [next_jump_thinning(state, spec, rng) for _ in range(4000)]
        _, p = ks_2samp([j.wait for j in a], [j.wait for j in b])
        assert p > 1e-3
        dest_a = np.mean([j.destination for j in a])
        dest_b = np.mean([j.destination for j in b])
        assert abs(dest_a - dest_b) < 0.06


class TestSimulate:
    def test_zero_horizon(self, rng):
        spec = build_chain(16, [0.7, 0.3], [0.7, 0.3])
        init = ChainState(4, -0.3)
        for horizon in (Horizon(events=0), Horizon(clock=0.0)):
            run = simulate_chain(spec, init, horizon, rng)
            assert run.jumps == 0 and run.memory is None and run.elapsed == 0
            assert run.final == [init]

    def test_occupancy_sums_to_elapsed(self, rng):
        spec = build_chain(16, [0.7, 0.3], [0.7, 0.3])
        run = simulate_chain(spec, ChainState(8, 0.5), 100_000, rng)
        assert run.occupancy.sum() == pytest.approx(run.elapsed, rel=1e-9)
        assert run.memory.total_weight == pytest.approx(run.elapsed, rel=1e-9)

    def test_clock_horizon(self, rng):
        spec = build_chain(16, [0.7, 0.3], [0.7, 0.3])
        run = simulate_chain(spec, ChainState(8, 0.5, 2.0), Horizon(clock=3.0), rng)
        assert run.final[0].clock == pytest.approx(5.0)
        assert run.elapsed == pytest.approx(3.0)

    @pytest.mark.parametrize("layers,mode,theta", [
        (([0.7, 0.3], [0.7, 0.3]), "noiseless", None),
        (([0.4, 0.3, 0.2, 0.1], "hard"), "noiseless", None),
        (([0.7, 0.3], [0.6, 0.4]), "noisy", 0.5),
    ])
    def test_path_structure(self, layers, mode, theta, rng):
        spec = build_chain(20, *layers, mode, theta)
        run = simulate_chain(spec, ChainState(10, -0.7), 50_000, rng, trace_cap=50_000)
        assert len(run.trace) == 50_000
        assert path_violations(spec, run.trace) == 0
        if mode == "noiseless":
            assert run.against_flow_jumps == 0

    def test_violations_detected(self, rng):
        spec = build_chain(16, [0.7, 0.3], [0.7, 0.3])
        run = simulate_chain(spec, ChainState(8, -0.7), 1000, rng, trace_cap=1000)
        trace = run.trace.copy()
        trace[5, 4] += 0.1
        assert path_violations(spec, trace) >= 1

    def test_stationary_marginals(self, rng):
        from markov_billiard.stats import std_normal_cdf
        spec = build_chain(16, [0.7, 0.3], [0.7, 0.3])
        run = simulate_chain(spec, ChainState(3, 0.2), 1_000_000, rng, bins=2000,
                             memory_range=(-7, 7))
        assert np.max(np.abs(run.occupancy_fraction * 17 - 1)) < 0.06
        assert run.memory.ks_distance(std_normal_cdf) < 0.03

    def test_merge(self, rng):
        spec = build_chain(16, "hard", "hard")
        a = simulate_chain(spec, ChainState(8, 0.5), 1000, rng)
        b = simulate_chain(spec, ChainState(8, 0.5), 1000, rng)
        m = a.merge(b)
        assert m.jumps == 2000 and len(m.final) == 2
        assert m.elapsed == pytest.approx(a.elapsed + b.elapsed)

    def test_invalid_state(self, rng):
        spec = build_chain(16, "hard", "hard")
        with pytest.raises(InvalidInput):
            simulate_chain(spec, ChainState(17, 0.5), 10, rng)
        with pytest.raises(InvalidInput):
            Horizon()


class TestExcursions:
    def test_levels_follow_level_law(self, rng):
        layer = derive_rates([0.4, 0.3, 0.2, 0.1])
        spec = build_chain(1000, layer, "hard")
        batch = boundary_excursions(spec, -1.1, 50_000, rng)
        p = level_probabilities(-1.1, layer)
        _, pval = chi_square_test(np.bincount(batch.levels, minlength=4), p)
        assert pval > 1e-3

    def test_conditional_exit_speed(self, rng):
        layer = derive_rates([0.5, 0.3, 0.2])
        spec = build_chain(1000, layer, "hard")
        batch = boundary_excursions(spec, -1.0, 50_000, rng)
        for k in range(3):
            speeds = batch.exit_velocities[batch.levels == k]
            _, p = ks_test(speeds, lambda r: exit_speed_cdf(k, layer.lambdas, r))
            assert p > 1e-3, k

    def test_hard_boundary_forgets_entry(self, rng):
        spec = build_chain(1000, "hard", "hard")
        for ell in (-0.1, -3.0):
            batch = boundary_excursions(spec, ell, 20_000, rng)
            _, p = ks_test(batch.exit_velocities, rayleigh_cdf)
            assert p > 1e-3
            assert np.all(batch.levels == 0)

    def test_noisy_layer_matches_law(self, rng):
        spec = build_chain(1000, [0.7, 0.3], [0.7, 0.3], "noisy", 0.5)
        batch = boundary_excursions(spec, -1.0, 50_000, rng)
        law = NoisyLaw(NoisyLawParams.from_layer(0.3, 0.5))
        ref = sample_reflection(-1.0, law, rng, size=50_000)
        _, p = ks_2samp(batch.exit_velocities, ref)
        assert p > 1e-3
        assert batch.against_flow_jumps.sum() > 0

    def test_noisy_levels(self, rng):
        spec = build_chain(1000, [0.7, 0.3], [0.7, 0.3], "noisy", 0.5)
        batch = boundary_excursions(spec, -1.0, 50_000, rng)
        p = NoisyLaw(NoisyLawParams.from_layer(0.3, 0.5)).level_probabilities(-1.0)
        _, pval = chi_square_test(np.bincount(batch.levels, minlength=2), p)
        assert pval > 1e-3

    def test_noisy_returns_are_geometric(self, rng):
        # with tiny entry memory the sign changes at site 1 before any jump, so
        # every jump against the flow is a return to site 0 after the sign change
        spec = build_chain(1000, [0.7, 0.3], [0.7, 0.3], "noisy", 0.5)
        batch = boundary_excursions(spec, -1e-3, 50_000, rng)
        assert np.all(batch.levels == 1)
        stay = spec.c[1] / (spec.c[1] + spec.b[1])
        k = np.arange(12)
        probs = (1 - stay) ** k * stay
        probs[-1] = (1 - stay) ** k[-1]
        counts = np.bincount(np.minimum(batch.against_flow_jumps, k[-1]), minlength=len(k))
        _, p = chi_square_test(counts, probs)
        assert p > 1e-3

    def test_exit_law_equals_noiseless_law(self, rng):
        layer = derive_rates([0.5, 0.3, 0.2])
        spec = build_chain(100, layer, "hard")
        batch = boundary_excursions(spec, -1.0, 50_000, rng)
        ref = sample_reflection(-1.0, NoiselessLaw(layer), rng, size=50_000)
        _, p = ks_2samp(batch.exit_velocities, ref)
        assert p > 1e-3

    def test_single(self, rng):
        spec = build_chain(100, [0.5, 0.5], "hard")
        res = boundary_excursion(spec, -1.0, rng)
        assert res.sign_change_level in (0, 1)
        assert res.exit_velocity > 0 and res.excursion_duration > 0
        assert res.against_flow_jumps == 0

    def test_per_excursion_entry(self, rng):
        spec = build_chain(100, [0.5, 0.5], "hard")
        batch = boundary_excursions(spec, [-1.0, -0.5, -2.0], 3, rng)
        assert len(batch) == 3

    def test_rejects_positive_entry(self, rng):
        spec = build_chain(100, [0.5, 0.5], "hard")
        with pytest.raises(InvalidInput):
            boundary_excursions(spec, 0.5, 10, rng)
