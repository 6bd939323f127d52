"""Billiard on ``[0, 1]`` with random reflections at the endpoints.

The particle flies at constant velocity; on hitting an endpoint it gets a
new velocity of the opposite sign drawn from that endpoint's reflection
law given the incoming velocity. Velocities are right-continuous: the
value recorded at a reflection time is the outgoing one.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .chain import Horizon
from .errors import InvalidInput
from .reflection import sample_reflection
from .rng import DrawBuffer
from .stats import EmpiricalDistribution

__all__ = [
    "BilliardState",
    "Trajectory",
    "BilliardRun",
    "next_reflection",
    "simulate_billiard",
    "time_weighted_marginals",
    "trajectory_violations",
    "stationary_initial_state",
]

_STATUS_EVENTS = 0
_STATUS_NEED_DRAWS = 3


@dataclass(frozen=True)
class BilliardState:
    x: float
    ell: float
    t: float = 0.0

    def validate(self, interior=True):
        if not (math.isfinite(self.x) and 0.0 <= self.x <= 1.0):
            raise InvalidInput(f"position {self.x} outside [0, 1]")
        if interior and self.x in (0.0, 1.0):
            raise InvalidInput("initial position must lie strictly inside (0, 1)")
        if self.ell == 0 or not math.isfinite(self.ell):
            raise InvalidInput("velocity must be nonzero and finite")
        if not math.isfinite(self.t):
            raise InvalidInput("clock must be finite")


@dataclass
class Trajectory:
    """Reflection times ``u`` and outgoing velocities ``R`` after ``initial``.

    The path is observed on ``[initial.t, t_end]``; ``t_end`` equals the last
    reflection time for event-count horizons.
    """

    initial: BilliardState
    u: np.ndarray
    R: np.ndarray
    t_end: float
    final: BilliardState

    def __len__(self):
        return len(self.u)

    def position(self, t):
        """Position at times ``t`` within the observation window."""
        t = np.asarray(t, dtype=float)
        starts = np.concatenate([[self.initial.t], self.u])
        xs = np.concatenate([[self.initial.x], np.where(self.R > 0, 0.0, 1.0)])
        vs = np.concatenate([[self.initial.ell], self.R])
        k = np.searchsorted(starts, t, side="right") - 1
        return np.clip(xs[k] + vs[k] * (t - starts[k]), 0.0, 1.0)

    def rows(self):
        return list(zip(self.u.tolist(), self.R.tolist()))


@dataclass
class BilliardRun:
    trajectory: Trajectory
    x_marginal: EmpiricalDistribution
    l_marginal: EmpiricalDistribution


def next_reflection(state, laws, rng):
    """Fly to the next endpoint and draw the outgoing velocity there."""
    state.validate(interior=False)
    if state.ell < 0:
        dt = state.x / -state.ell
        law, target = laws[0], 0.0
    else:
        dt = (1.0 - state.x) / state.ell
        law, target = laws[1], 1.0
    return BilliardState(target, sample_reflection(state.ell, law, rng), state.t + dt)


def stationary_initial_state(rng):
    """Draw ``(x, ell)`` from the uniform times standard normal law."""
    while True:
        x = rng.random()
        ell = rng.standard_normal()
        if 0.0 < x < 1.0 and ell != 0.0:
            return BilliardState(float(x), float(ell))


def simulate_billiard(init, laws, horizon, rng, *, bins=64, backend=None,
                      chunk=1 << 16, block=1 << 16):
    """Simulate from ``init`` until ``horizon``.

    Parameters
    ----------
    init : BilliardState
        Position strictly inside ``(0, 1)``, nonzero velocity.
    laws : pair of reflection laws
        Laws at the endpoints 0 and 1.
    horizon : Horizon or int
        An int is a reflection count.
    bins : int
        Bins of the position marginal histogram.
    """
    if not isinstance(horizon, Horizon):
        horizon = Horizon(events=int(horizon))
    init.validate()
    kern = _kernels.get_backend(backend)
    law0 = np.ascontiguousarray(laws[0].pack(), dtype=float)
    law1 = np.ascontiguousarray(laws[1].pack(), dtype=float)
    total = math.inf if horizon.events is None else int(horizon.events)
    t_end = math.inf if horizon.clock is None else init.t + float(horizon.clock)
    st = np.array([init.x, init.ell, init.t])
    ipos = np.zeros(4, dtype=np.int64)
    size = int(min(chunk, total)) if total > 0 else 1
    out_u = np.empty(size)
    out_R = np.empty(size)
    us, Rs = [], []
    done = 0
    buf = DrawBuffer(rng, block)
    while done < total:
        target = int(min(size, total - done))
        ipos[0], ipos[1] = buf.exp_pos, buf.uni_pos
        status = kern.billiard_advance(st, law0, law1, buf.exps, buf.unis, ipos, target,
                                       t_end, out_u, out_R)
        buf.exp_pos, buf.uni_pos = int(ipos[0]), int(ipos[1])
        written = int(ipos[2])
        if status == _STATUS_NEED_DRAWS:
            buf.refill_exps(int(ipos[3]))
            buf.refill_unis(2)
            if written < target:
                continue
        us.append(out_u[:written].copy())
        Rs.append(out_R[:written].copy())
        done += written
        ipos[2] = 0
        if status not in (_STATUS_EVENTS, _STATUS_NEED_DRAWS):
            break
    u = np.concatenate(us) if us else np.empty(0)
    R = np.concatenate(Rs) if Rs else np.empty(0)
    end = float(st[2]) if math.isfinite(t_end) else (float(u[-1]) if len(u) else init.t)
    final = BilliardState(float(st[0]), float(st[1]), float(st[2]))
    traj = Trajectory(init, u, R, end, final)
    if end > init.t:
        x_marg, l_marg = time_weighted_marginals(traj, bins)
    else:
        x_marg = l_marg = None
    return BilliardRun(traj, x_marg, l_marg)


def _flights(traj):
    """Start position, velocity and duration of every flight in the window."""
    starts = np.concatenate([[traj.initial.t], traj.u])
    x0 = np.concatenate([[traj.initial.x], np.where(traj.R > 0, 0.0, 1.0)])
    vel = np.concatenate([[traj.initial.ell], traj.R])
    ends = np.concatenate([traj.u, [traj.t_end]])
    dur = np.maximum(ends - starts, 0.0)
    return x0, vel, dur


def time_weighted_marginals(traj, bins=64):
    """Exact time-weighted marginals of position and velocity.

    Each flight spreads its duration uniformly over the interval it sweeps,
    so the position histogram has no discretization error at the bin edges.
    The velocity marginal is the set of flight velocities weighted by
    flight duration.
    """
    if traj.t_end <= traj.initial.t:
        raise InvalidInput("trajectory has no elapsed time")
    bins = int(bins)
    if bins < 1:
        raise InvalidInput("need at least one bin")
    x0, vel, dur = _flights(traj)
    # every flight but the last ends exactly at the endpoint it hits
    x1 = np.where(vel > 0, 1.0, 0.0)
    x1[-1] = min(max(x0[-1] + vel[-1] * dur[-1], 0.0), 1.0)
    lo = np.minimum(x0, x1)
    hi = np.maximum(x0, x1)
    edges = np.linspace(0.0, 1.0, bins + 1)
    full = (lo == 0.0) & (hi == 1.0)
    weights = np.full(bins, dur[full].sum() / bins)
    for a, b, d in zip(lo[~full], hi[~full], dur[~full]):
        if d <= 0:
            continue
        if b > a:
            cover = np.clip(edges, a, b)
            weights += d * np.diff(cover) / (b - a)
        else:
            k = min(int(a * bins), bins - 1)
            weights[k] += d
    keep = dur > 0
    x_marg = EmpiricalDistribution.from_histogram(edges, weights)
    l_marg = EmpiricalDistribution.from_samples(vel[keep], dur[keep])
    return x_marg, l_marg


def trajectory_violations(traj, rtol=1e-9):
    """Count broken structural invariants of a trajectory.

    Checks sign alternation of successive velocities (including the
    initial one), strictly increasing reflection times, flight durations
    ``1 / |R_j|`` between reflections and positions inside ``[0, 1]``.
    """
    vel = np.concatenate([[traj.initial.ell], traj.R])
    count = int(np.sum(vel[1:] * vel[:-1] >= 0))
    u = traj.u
    count += int(np.sum(np.diff(u) <= 0))
    if len(u):
        count += int(u[0] <= traj.initial.t)
    if len(u) > 1:
        gaps = np.diff(u)
        expect = 1.0 / np.abs(traj.R[:-1])
        count += int(np.sum(np.abs(gaps - expect) > rtol * expect))
    if not 0.0 <= traj.final.x <= 1.0:
        count += 1
    return count
