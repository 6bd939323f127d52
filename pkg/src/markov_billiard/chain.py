"""Discrete chain with memory on the sites ``0..n``.

The particle sits at site ``j`` while its memory drifts linearly at rate
``v[j]``; jumps to the neighbours happen at rates proportional to the
absolute memory,

    a_{i,i+1}(ell) = c[i] ell       (ell >= 0),   b[i+1] |ell|  (ell < 0)
    a_{i+1,i}(ell) = c[i] |ell|     (ell <= 0),   b[i+1] ell    (ell > 0)

so ``c`` carries the flow in the direction of the memory and ``b`` (only
nonzero in noisy layers) against it. Layer sites use ``v[i] = beta_i n``
exactly, which makes every rate ratio independent of ``n``.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import InvalidInput, StuckState
from .reflection import BoundaryLayer, derive_rates
from .rng import DrawBuffer
from .stats import EmpiricalDistribution

__all__ = [
    "HARD",
    "ChainSpec",
    "ChainState",
    "Horizon",
    "Jump",
    "ChainSummary",
    "ExcursionResult",
    "ExcursionBatch",
    "build_chain",
    "transition_rate",
    "check_master_balance",
    "next_jump",
    "next_jump_thinning",
    "simulate_chain",
    "path_violations",
    "boundary_excursion",
    "boundary_excursions",
]

HARD = "hard"
_HARD_LAYER = BoundaryLayer((1.0,), (1.0,), ())
_STATUS_NEED_DRAWS = 3
_STATUS_STUCK = 4


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ChainSpec:
    """Rates of the chain; build with :func:`build_chain`.

    ``c[i]`` and ``b[i + 1]`` belong to the edge between sites ``i`` and
    ``i + 1``; ``b[0]`` is unused and zero.
    """

    n: int
    N0: int
    N1: int
    v: np.ndarray
    c: np.ndarray
    b: np.ndarray
    mode: str
    layer_minus: BoundaryLayer
    layer_plus: BoundaryLayer
    theta: tuple = (0.0, 0.0)
    _arrays: dict = field(default=None, repr=False, compare=False)

    def kernel_arrays(self):
        """``(v, up_pos, up_neg, dn_pos, dn_neg)`` as contiguous float arrays."""
        if self._arrays is None:
            n = self.n
            up_pos = np.zeros(n + 1)
            up_neg = np.zeros(n + 1)
            dn_pos = np.zeros(n + 1)
            dn_neg = np.zeros(n + 1)
            up_pos[:n] = self.c
            up_neg[:n] = self.b[1:]
            dn_pos[1:] = self.b[1:]
            dn_neg[1:] = self.c
            arrays = tuple(np.ascontiguousarray(a) for a in
                           (self.v, up_pos, up_neg, dn_pos, dn_neg))
            object.__setattr__(self, "_arrays", arrays)
        return self._arrays


@dataclass
class ChainState:
    site: int
    memory: float
    clock: float = 0.0

    def validate(self, spec):
        if not 0 <= self.site <= spec.n:
            raise InvalidInput(f"site {self.site} outside 0..{spec.n}")
        if not math.isfinite(self.memory):
            raise InvalidInput("memory must be finite")
        if not (math.isfinite(self.clock) and self.clock >= 0):
            raise InvalidInput("clock must be finite and nonnegative")


@dataclass(frozen=True)
class Horizon:
    """Stop after ``events`` jumps or at clock time ``clock``, whichever comes first."""

    events: int = None
    clock: float = None

    def __post_init__(self):
        if self.events is None and self.clock is None:
            raise InvalidInput("a horizon needs an event count or a clock time")
        if self.events is not None and self.events < 0:
            raise InvalidInput("event count must be nonnegative")
        if self.clock is not None and not self.clock >= 0:
            raise InvalidInput("clock horizon must be nonnegative")


class Jump(tuple):
    """``(wait, destination, sign_change_first)``.

    When ``sign_change_first`` is true the memory reaches zero after
    ``wait`` before any jump fires; ``destination`` is then the current site.
    """

    __slots__ = ()

    def __new__(cls, wait, destination, sign_change_first=False):
        return tuple.__new__(cls, (wait, destination, sign_change_first))

    wait = property(lambda self: self[0])
    destination = property(lambda self: self[1])
    sign_change_first = property(lambda self: self[2])


def _as_layer(layer):
    if layer is None or (isinstance(layer, str) and layer == HARD):
        return _HARD_LAYER
    if isinstance(layer, BoundaryLayer):
        return layer
    return derive_rates(layer)


def build_chain(n, layer_minus, layer_plus, mode="noiseless", theta1=None):
    """Construct a balanced rate system.

    Parameters
    ----------
    n : int
        Sites are ``0..n``; requires ``n >= 4 * max(N0, N1) + 4``.
    layer_minus, layer_plus : BoundaryLayer, sequence of float or ``"hard"``
        Layers at the lower and upper end.
    mode : {"noiseless", "noisy"}
    theta1 : float or pair of float, optional
        Noise levels ``b / n`` of the lower and upper single-site layers;
        required in noisy mode.
    """
    if isinstance(n, bool) or not isinstance(n, (int, np.integer)):
        raise InvalidInput("n must be an integer")
    n = int(n)
    lower = _as_layer(layer_minus)
    upper = _as_layer(layer_plus)
    N0, N1 = lower.N, upper.N
    if n < 4 * max(N0, N1) + 4:
        raise InvalidInput(f"n={n} too small for layers of sizes {N0}, {N1}")
    if mode not in ("noiseless", "noisy"):
        raise InvalidInput(f"unknown mode {mode!r}")
    v = np.zeros(n + 1)
    c = np.full(n, float(n))
    b = np.zeros(n + 1)
    for i, beta in enumerate(lower.betas):
        v[i] = beta * n
    for j, beta in enumerate(upper.betas):
        v[n - j] = -beta * n
    for k in range(N0):
        c[k] = math.fsum(v[: k + 1])
    for k in range(N1):
        c[n - 1 - k] = -math.fsum(v[n - k:])
    theta = (0.0, 0.0)
    if mode == "noisy":
        if N0 != 1 or N1 != 1:
            raise InvalidInput("noisy mode needs single-site layers at both ends")
        if theta1 is None:
            raise InvalidInput("noisy mode needs theta1")
        theta = tuple(float(t) for t in np.broadcast_to(np.asarray(theta1, dtype=float), (2,)))
        if not all(math.isfinite(t) and t >= 0 for t in theta):
            raise InvalidInput("theta1 must be finite and nonnegative")
        b[1] = theta[0] * n
        b[n] = theta[1] * n
        c[0] = v[0] + b[1]
        c[n - 1] = -v[n] + b[n]
    elif theta1 is not None:
        raise InvalidInput("theta1 only applies in noisy mode")
    return ChainSpec(n, N0, N1, _frozen(v), _frozen(c), _frozen(b), mode, lower, upper, theta)


def transition_rate(spec, i, j, ell):
    """Rate ``a_{ij}(ell)`` for nearest neighbours, zero otherwise."""
    if j == i + 1 and 0 <= i < spec.n:
        return spec.c[i] * ell if ell >= 0 else spec.b[i + 1] * -ell
    if j == i - 1 and 1 <= i <= spec.n:
        return spec.c[j] * -ell if ell <= 0 else spec.b[i] * ell
    return 0.0


def check_master_balance(spec, ell_grid):
    """Largest ``|v_j ell + inflow_j(ell) - outflow_j(ell)|`` over sites and grid."""
    worst = 0.0
    for ell in np.atleast_1d(np.asarray(ell_grid, dtype=float)):
        for j in range(spec.n + 1):
            inflow = sum(transition_rate(spec, i, j, ell) for i in (j - 1, j + 1))
            outflow = sum(transition_rate(spec, j, i, ell) for i in (j - 1, j + 1))
            worst = max(worst, abs(spec.v[j] * ell + inflow - outflow))
    return worst


def _direction(state, spec):
    if state.memory != 0.0:
        return math.copysign(1.0, state.memory)
    vj = spec.v[state.site]
    if vj == 0.0:
        raise StuckState(f"zero memory at site {state.site}, which has no drift")
    return math.copysign(1.0, vj)


def _active_rates(state, spec):
    s = _direction(state, spec)
    _, up_pos, up_neg, dn_pos, dn_neg = spec.kernel_arrays()
    j = state.site
    if s > 0:
        return s, up_pos[j], dn_pos[j]
    return s, up_neg[j], dn_neg[j]


def next_jump(state, spec, rng):
    """Sample the next event by inverting the integrated jump rates.

    With ``m = |ell|`` and ``w = v s`` the memory drift in the direction
    ``s`` of the memory, a destination with rate ``alpha |ell(t)|`` fires
    when ``alpha (m t + w t**2 / 2)`` reaches an independent ``E``; the
    smallest root is taken in a cancellation-free form. Destinations compete
    and the earliest wins; if none fires before the memory reaches zero, a
    sign change is reported instead.
    """
    s, a_up, a_dn = _active_rates(state, spec)
    m = abs(state.memory)
    w = spec.v[state.site] * s
    best, dest = math.inf, state.site
    for rate, target in ((a_up, state.site + 1), (a_dn, state.site - 1)):
        if rate > 0:
            h = rng.standard_exponential() / rate
            t = _kernels._pykernels._hit_time(m, w, h)
            if t < best:
                best, dest = t, target
    t_sign = m / -w if w < 0 else math.inf
    if t_sign < best:
        return Jump(t_sign, state.site, True)
    if best == math.inf:
        raise StuckState(f"no jump possible from site {state.site}")
    return Jump(best, dest, False)


def next_jump_thinning(state, spec, rng, window=None):
    """Same law as :func:`next_jump`, sampled by thinning; slow, for cross-checks."""
    s, a_up, a_dn = _active_rates(state, spec)
    m = abs(state.memory)
    w = spec.v[state.site] * s
    total = a_up + a_dn
    t_sign = m / -w if w < 0 else math.inf
    if total == 0:
        if t_sign == math.inf:
            raise StuckState(f"no jump possible from site {state.site}")
        return Jump(t_sign, state.site, True)
    if window is None:
        window = 1.0 / (total * max(m, 1e-3)) if w <= 0 else \
            1.0 / (total * max(m, 1e-3)) + math.sqrt(2.0 / (total * w))
    t = 0.0
    while True:
        end = min(t + window, t_sign)
        bound = total * max(m + w * t, m + w * end)
        if bound <= 0:
            return Jump(t_sign, state.site, True)
        t_prop = t + rng.standard_exponential() / bound
        if t_prop >= end:
            if end == t_sign:
                return Jump(t_sign, state.site, True)
            t = end
            continue
        t = t_prop
        level = total * (m + w * t)
        u = rng.random() * bound
        if u < level:
            dest = state.site + 1 if u < a_up * (m + w * t) else state.site - 1
            return Jump(t, dest, False)


@dataclass
class ChainSummary:
    """Time-weighted occupancy and memory marginal of one or more runs."""

    occupancy: np.ndarray
    memory: EmpiricalDistribution
    final: list
    jumps: int
    sign_changes: int
    against_flow_jumps: int
    elapsed: float
    trace: np.ndarray = None

    @property
    def occupancy_fraction(self):
        return self.occupancy / self.occupancy.sum()

    def merge(self, other):
        if self.memory is None:
            memory = other.memory
        elif other.memory is None:
            memory = self.memory
        else:
            memory = self.memory.merge(other.memory)
        return ChainSummary(self.occupancy + other.occupancy, memory,
                            self.final + other.final, self.jumps + other.jumps,
                            self.sign_changes + other.sign_changes,
                            self.against_flow_jumps + other.against_flow_jumps,
                            self.elapsed + other.elapsed, None)


def _drive(call, buf, ipos):
    """Run a kernel call, refilling the exponential buffer on demand."""
    while True:
        ipos[0] = buf.exp_pos
        status = call(buf.exps)
        buf.exp_pos = int(ipos[0])
        if status == _STATUS_NEED_DRAWS:
            buf.refill_exps(4)
            continue
        if status == _STATUS_STUCK:
            raise StuckState("all jump rates vanished with no pending sign change")
        return status


def simulate_chain(spec, init, horizon, rng, *, bins=64, memory_range=(-5.0, 5.0),
                   trace_cap=0, backend=None, block=1 << 16):
    """Event-driven simulation from ``init`` until ``horizon``.

    Parameters
    ----------
    horizon : Horizon or int
        An int is an event count.
    bins, memory_range
        Histogram of the time-weighted memory marginal; mass outside the
        range is kept as underflow/overflow.
    trace_cap : int
        Number of leading path segments ``(site, t0, t1, ell0, ell1)`` to keep.

    Returns
    -------
    ChainSummary
        The memory marginal is ``None`` when no time elapsed.
    """
    if not isinstance(horizon, Horizon):
        horizon = Horizon(events=int(horizon))
    init.validate(spec)
    kern = _kernels.get_backend(backend)
    v, up_pos, up_neg, dn_pos, dn_neg = spec.kernel_arrays()
    lo, hi = (float(a) for a in memory_range)
    if not (bins >= 1 and hi > lo):
        raise InvalidInput("need at least one bin and a nonempty memory range")
    width = (hi - lo) / bins
    edges = lo + width * np.arange(bins + 1)
    hist = np.zeros(bins + 2)
    occupancy = np.zeros(spec.n + 1)
    trace = np.zeros((int(trace_cap), 5))
    st = np.array([float(init.site), float(init.memory), float(init.clock)])
    ipos = np.zeros(1, dtype=np.int64)
    counters = np.array([0, 0, -1, 0, 0], dtype=np.int64)
    max_events = np.iinfo(np.int64).max if horizon.events is None else int(horizon.events)
    t_end = math.inf if horizon.clock is None else init.clock + float(horizon.clock)
    buf = DrawBuffer(rng, block)

    def call(exps):
        return kern.chain_advance(st, v, up_pos, up_neg, dn_pos, dn_neg, exps, ipos,
                                  counters, max_events, t_end, -1, spec.n + 1, occupancy,
                                  hist, lo, width, trace)

    _drive(call, buf, ipos)
    elapsed = st[2] - init.clock
    memory = None
    if elapsed > 0:
        memory = EmpiricalDistribution.from_histogram(edges, hist[1:-1], hist[0], hist[-1])
    final = ChainState(int(st[0]), float(st[1]), float(st[2]))
    return ChainSummary(occupancy, memory, [final], int(counters[0]), int(counters[1]),
                        int(counters[3]), float(elapsed), trace[: counters[4]])


def path_violations(spec, trace, rtol=1e-9):
    """Count structural violations along traced path segments.

    Checks that the memory is continuous, that each segment has slope
    ``v[site]``, that the clock is contiguous and that jumps go to
    neighbours. In noiseless mode also checks that jumps follow the sign
    of the memory.
    """
    trace = np.asarray(trace)
    if len(trace) == 0:
        return 0
    site = trace[:, 0].astype(int)
    t0, t1, l0, l1 = trace[:, 1], trace[:, 2], trace[:, 3], trace[:, 4]
    scale = 1.0 + np.abs(l0) + np.abs(l1)
    bad = np.abs(l1 - l0 - spec.v[site] * (t1 - t0)) > rtol * scale
    bad |= t1 < t0
    count = int(bad.sum())
    count += int(np.sum(l0[1:] != l1[:-1]))
    count += int(np.sum(t0[1:] != t1[:-1]))
    step = np.diff(site)
    count += int(np.sum(np.abs(step) > 1))
    if spec.mode == "noiseless":
        count += int(np.sum((step > 0) & (l1[:-1] < 0)))
        count += int(np.sum((step < 0) & (l1[:-1] > 0)))
    return count


@dataclass(frozen=True)
class ExcursionResult:
    """One excursion through the lower layer.

    ``against_flow_jumps`` counts jumps opposite to the memory's sign
    (always zero in noiseless layers).
    """

    sign_change_level: int
    exit_velocity: float
    excursion_duration: float
    against_flow_jumps: int = 0


@dataclass
class ExcursionBatch:
    levels: np.ndarray
    exit_velocities: np.ndarray
    durations: np.ndarray
    against_flow_jumps: np.ndarray

    def __len__(self):
        return len(self.levels)

    def __getitem__(self, i):
        return ExcursionResult(int(self.levels[i]), float(self.exit_velocities[i]),
                               float(self.durations[i]), int(self.against_flow_jumps[i]))


def boundary_excursions(spec, entry_memory, count, rng, *, backend=None, block=1 << 16):
    """Run ``count`` independent excursions into the lower layer.

    Each starts at site ``N0`` with memory ``entry_memory`` (scalar or one
    value per excursion) and ends on reaching site ``N0 + 1``.
    """
    entry = np.ascontiguousarray(np.broadcast_to(
        np.asarray(entry_memory, dtype=float), (int(count),)))
    if np.any(~(entry < 0)) or np.any(~np.isfinite(entry)):
        raise InvalidInput("entry memory must be negative and finite")
    kern = _kernels.get_backend(backend)
    v, up_pos, up_neg, dn_pos, dn_neg = spec.kernel_arrays()
    ipos = np.zeros(3, dtype=np.int64)
    st = np.zeros(3)
    counters = np.zeros(5, dtype=np.int64)
    occupancy = np.zeros(spec.n + 1)
    levels = np.zeros(len(entry), dtype=np.int64)
    speeds = np.zeros(len(entry))
    durations = np.zeros(len(entry))
    against = np.zeros(len(entry), dtype=np.int64)
    buf = DrawBuffer(rng, block)

    def call(exps):
        return kern.excursion_batch(entry, spec.N0, spec.N0 + 1, v, up_pos, up_neg, dn_pos,
                                    dn_neg, exps, ipos, st, counters, occupancy, levels,
                                    speeds, durations, against)

    _drive(call, buf, ipos)
    return ExcursionBatch(levels, speeds, durations, against)


def boundary_excursion(spec, entry_memory, rng, *, backend=None):
    """A single excursion; see :func:`boundary_excursions`."""
    return boundary_excursions(spec, entry_memory, 1, rng, backend=backend, block=256)[0]
