"""Billiards on [0, 1] with Markovian reflection laws.

Closed-form reflection laws, an exact event-driven simulator for the
discrete chain with memory that approximates them, the limit billiard,
and a statistical harness checking the uniform-times-normal stationary
law.
"""

from ._kernels import BACKEND
from .billiard import (BilliardState, Trajectory, next_reflection, simulate_billiard,
                       time_weighted_marginals, trajectory_violations)
from .chain import (ChainSpec, ChainState, ExcursionResult, Horizon, boundary_excursion,
                    boundary_excursions, build_chain, check_master_balance, next_jump,
                    simulate_chain)
from .config import ExperimentConfig, parse_config
from .errors import (BilliardError, DegenerateRates, InvalidInput, NoConvergence,
                     ParseError, StuckState, TruncationFailure, ValidationError)
from .exp_sums import (ExpSumSpec, hypoexp_density, hypoexp_tail, mixed_density,
                       partial_fraction_check, sample_exp_sum)
from .reflection import (BoundaryLayer, NoiselessLaw, NoisyLaw, NoisyLawParams,
                         TruncatedInfiniteLaw, derive_rates, exit_speed_density,
                         level_probabilities, level_probabilities_discrete,
                         level_probabilities_truncated, noisy_sign_change_prob,
                         sample_reflection, sample_reflection_noisy)
from .rng import stream
from .stats import EmpiricalDistribution, chi_square_test, ks_2samp, ks_test

__version__ = "0.1.0"
