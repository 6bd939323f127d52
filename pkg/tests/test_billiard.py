import numpy as np
import pytest

from markov_billiard.billiard import (BilliardState, Trajectory, next_reflection,
                                      simulate_billiard, stationary_initial_state,
                                      time_weighted_marginals, trajectory_violations)
from markov_billiard.chain import Horizon
from markov_billiard.errors import InvalidInput
from markov_billiard.reflection import (NoiselessLaw, NoisyLaw, NoisyLawParams,
                                        TruncatedInfiniteLaw, sample_reflection)
from markov_billiard.stats import ks_2samp, std_normal_cdf, uniform_cdf

RAYLEIGH = (NoiselessLaw([1.0]), NoiselessLaw([1.0]))


def make_traj(x0, ell0, u, R, t_end=None):
    u = np.asarray(u, dtype=float)
    R = np.asarray(R, dtype=float)
    init = BilliardState(x0, ell0)
    end = u[-1] if t_end is None else t_end
    return Trajectory(init, u, R, end, init)


class TestNextReflection:
    def test_downward(self, rng):
        s = next_reflection(BilliardState(0.5, -1.0), RAYLEIGH, rng)
        assert (s.x, s.t) == (0.0, 0.5) and s.ell > 0

    def test_upward(self, rng):
        s = next_reflection(BilliardState(0.5, 2.0, 1.0), RAYLEIGH, rng)
        assert (s.x, s.t) == (1.0, 1.25) and s.ell < 0

    def test_uses_endpoint_law(self, rng):
        slow = NoiselessLaw([0.5, 0.5])
        s = next_reflection(BilliardState(0.2, -0.1), (slow, NoiselessLaw([1.0])), rng)
        assert s.x == 0.0

    @pytest.mark.parametrize("state", [BilliardState(1.5, 1.0), BilliardState(0.5, 0.0),
                                       BilliardState(0.5, np.inf)])
    def test_invalid(self, state, rng):
        with pytest.raises(InvalidInput):
            next_reflection(state, RAYLEIGH, rng)


class TestMarginals:
    def test_full_sweep_is_uniform(self):
        traj = make_traj(0.0, 1.0, [1.0], [-1.0])
        x, l = time_weighted_marginals(traj, 10)
        assert x.ks_distance(uniform_cdf) == pytest.approx(0.0, abs=1e-15)
        np.testing.assert_allclose(x.weights, 0.1)

    def test_half_sweep(self):
        traj = make_traj(0.5, -1.0, [0.5], [1.0])
        x, _ = time_weighted_marginals(traj, 10)
        np.testing.assert_allclose(x.weights, [0.1] * 5 + [0.0] * 5, atol=1e-15)

    def test_duration_weights(self):
        # speed 1 over [0, 1], then speed 2 back over [1, 1.5]
        traj = make_traj(0.0, 1.0, [1.0, 1.5], [-2.0, 1.0])
        _, l = time_weighted_marginals(traj, 4)
        values, weights = l.values, l.weights / l.weights.sum()
        np.testing.assert_allclose(weights[values == 1.0].sum(), 2 / 3)
        np.testing.assert_allclose(weights[values == -2.0].sum(), 1 / 3)

    def test_partial_last_flight(self):
        traj = make_traj(0.0, 1.0, [1.0], [-1.0], t_end=1.25)
        x, _ = time_weighted_marginals(traj, 4)
        np.testing.assert_allclose(x.weights, [0.25, 0.25, 0.25, 0.5])

    def test_no_elapsed_time(self):
        traj = Trajectory(BilliardState(0.5, 1.0), np.empty(0), np.empty(0), 0.0,
                          BilliardState(0.5, 1.0))
        with pytest.raises(InvalidInput):
            time_weighted_marginals(traj)


class TestSimulate:
    def test_one_reflection(self, rng):
        run = simulate_billiard(BilliardState(0.5, -1.0), RAYLEIGH, 1, rng)
        assert len(run.trajectory) == 1
        assert run.trajectory.u[0] == 0.5 and run.trajectory.R[0] > 0
        assert trajectory_violations(run.trajectory) == 0

    def test_clock_horizon(self, rng):
        run = simulate_billiard(BilliardState(0.5, -1.0), RAYLEIGH, Horizon(clock=50.0), rng)
        traj = run.trajectory
        assert traj.t_end == pytest.approx(50.0)
        assert np.all(traj.u <= 50.0)
        assert run.x_marginal.total_weight == pytest.approx(50.0)
        assert traj.position(50.0) == pytest.approx(traj.final.x)

    def test_position(self, rng):
        run = simulate_billiard(BilliardState(0.5, -1.0), RAYLEIGH, 20, rng)
        traj = run.trajectory
        np.testing.assert_allclose(traj.position(traj.u), np.where(traj.R > 0, 0.0, 1.0),
                                   atol=1e-12)
        assert traj.position(0.25) == pytest.approx(0.25)

    def test_stationary_marginals(self, rng):
        run = simulate_billiard(BilliardState(0.5, -1.0), RAYLEIGH, 1_000_000, rng, bins=1000)
        assert run.x_marginal.ks_distance(uniform_cdf) < 0.01
        assert run.l_marginal.ks_distance(std_normal_cdf) < 0.02

    def test_stationary_start(self, rng):
        init = stationary_initial_state(rng)
        assert 0 < init.x < 1
        run = simulate_billiard(init, (NoiselessLaw([0.7, 0.3]),) * 2, 100_000, rng, bins=500)
        assert run.x_marginal.ks_distance(uniform_cdf) < 0.02
        assert run.l_marginal.ks_distance(std_normal_cdf) < 0.02

    @pytest.mark.parametrize("laws", [
        RAYLEIGH,
        (NoiselessLaw([0.4, 0.3, 0.2, 0.1]), NoisyLaw(NoisyLawParams.from_layer(0.3, 0.5))),
        (TruncatedInfiniteLaw.geometric(0.5), NoiselessLaw([0.6, 0.4])),
    ])
    def test_structure(self, laws, rng):
        run = simulate_billiard(BilliardState(0.3, 0.8), laws, 100_000, rng)
        assert trajectory_violations(run.trajectory) == 0

    def test_violation_detected(self):
        traj = make_traj(0.5, -1.0, [0.5, 1.5], [1.0, 1.0])
        assert trajectory_violations(traj) >= 1

    def test_reflections_follow_the_laws(self, rng):
        # outgoing speeds at 0 given the incoming speed, against direct draws
        law = NoiselessLaw([0.5, 0.3, 0.2])
        run = simulate_billiard(BilliardState(0.5, -1.0), (law, law), 200_001, rng)
        R = np.concatenate([[-1.0], run.trajectory.R])
        incoming, outgoing = R[:-1], R[1:]
        at0 = incoming < 0
        # bucket on incoming speed near 1
        sel = at0 & (np.abs(incoming + 1.0) < 0.02)
        ref = sample_reflection(-1.0, law, rng, size=50_000)
        _, p = ks_2samp(outgoing[sel], ref)
        assert p > 1e-3

    def test_invalid_init(self, rng):
        with pytest.raises(InvalidInput):
            simulate_billiard(BilliardState(0.0, 1.0), RAYLEIGH, 10, rng)
