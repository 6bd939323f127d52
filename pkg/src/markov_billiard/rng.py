"""Reproducible random streams.

Streams are Philox (counter-based) generators keyed by ``(seed, replica,
tag)``, so independent replicas and purposes never share state and any
stream can be regenerated without running the others.

The compiled and pure-Python kernels do not draw random numbers
themselves; they consume pre-drawn blocks held by :class:`DrawBuffer`.
Unused draws are carried over on refill, so the sequence consumed by a
simulation is independent of where block boundaries fall.
"""

import zlib

import numpy as np

from .errors import InvalidInput

__all__ = ["stream", "check_seed", "DrawBuffer"]

_U64 = 2**64


def check_seed(seed):
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise InvalidInput(f"seed must be an integer, got {seed!r}")
    seed = int(seed)
    if not 0 <= seed < _U64:
        raise InvalidInput(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def stream(seed, replica=0, tag=""):
    """Return the generator for ``(seed, replica, tag)``."""
    seed = check_seed(seed)
    if replica < 0:
        raise InvalidInput("replica index must be nonnegative")
    key = (int(replica), zlib.crc32(tag.encode("utf-8")))
    seq = np.random.SeedSequence(entropy=seed, spawn_key=key)
    return np.random.Generator(np.random.Philox(seq))


class DrawBuffer:
    """Blocks of standard exponentials and uniforms for the kernels.

    Parameters
    ----------
    rng : numpy.random.Generator
        Source of all draws.
    block : int
        Number of fresh variates appended on each refill.
    """

    def __init__(self, rng, block=1 << 16):
        # separate child streams keep each sequence independent of refill timing
        self._exp_rng, self._uni_rng = rng.spawn(2)
        self.block = int(block)
        self.exps = np.empty(0)
        self.exp_pos = 0
        self.unis = np.empty(0)
        self.uni_pos = 0

    def refill_exps(self, minimum=0):
        keep = self.exps[self.exp_pos:]
        size = max(self.block, minimum)
        self.exps = np.concatenate([keep, self._exp_rng.standard_exponential(size)])
        self.exp_pos = 0

    def refill_unis(self, minimum=0):
        keep = self.unis[self.uni_pos:]
        size = max(self.block, minimum)
        self.unis = np.concatenate([keep, self._uni_rng.random(size)])
        self.uni_pos = 0

    def exponential(self):
        if self.exp_pos >= len(self.exps):
            self.refill_exps()
        value = self.exps[self.exp_pos]
        self.exp_pos += 1
        return float(value)

    def uniform(self):
        if self.uni_pos >= len(self.unis):
            self.refill_unis()
        value = self.unis[self.uni_pos]
        self.uni_pos += 1
        return float(value)
