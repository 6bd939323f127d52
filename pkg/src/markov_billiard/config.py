"""Flat ``key = value`` experiment configuration.

One assignment per line, ``#`` starts a comment, list values are
comma-separated. Unknown or repeated keys are rejected with the line
number.
"""

import math
from dataclasses import dataclass, fields

from .errors import InvalidInput, ParseError, ValidationError
from .reflection import (NoiselessLaw, NoisyLaw, NoisyLawParams, TruncatedInfiniteLaw,
                         derive_rates)
from .rng import check_seed

__all__ = ["ExperimentConfig", "parse_config", "load_config"]


def _floats(text):
    return tuple(float(part) for part in text.split(","))


def _ints(text):
    return tuple(int(part) for part in text.split(","))


_KEYS = {
    "N": int,
    "beta": _floats,
    "beta_minus": _floats,
    "beta_plus": _floats,
    "beta_ratio": float,
    "eps": float,
    "law": str,
    "law_minus": str,
    "law_plus": str,
    "theta1": float,
    "n": int,
    "mode": str,
    "ell0": float,
    "x0": float,
    "site0": int,
    "events": int,
    "clock": float,
    "seed": int,
    "replicas": int,
    "bins": int,
    "samples": int,
    "level": int,
    "r_max": float,
    "points": int,
    "memory_range": _floats,
    "alpha": float,
    "criteria": _ints,
}

_LAWS = ("noiseless", "truncated", "noisy", "hard")


@dataclass
class ExperimentConfig:
    """Typed configuration; ``None`` means the key was not given."""

    N: int = None
    beta: tuple = None
    beta_minus: tuple = None
    beta_plus: tuple = None
    beta_ratio: float = None
    eps: float = 1e-8
    law: str = "noiseless"
    law_minus: str = None
    law_plus: str = None
    theta1: float = None
    n: int = None
    mode: str = "noiseless"
    ell0: float = None
    x0: float = None
    site0: int = None
    events: int = None
    clock: float = None
    seed: int = 0
    replicas: int = 1
    bins: int = 64
    samples: int = None
    level: int = None
    r_max: float = None
    points: int = 200
    memory_range: tuple = (-5.0, 5.0)
    alpha: float = 1e-3
    criteria: tuple = None

    def validate(self):
        try:
            check_seed(self.seed)
        except InvalidInput as exc:
            raise ValidationError(str(exc)) from None
        for name in ("replicas", "bins", "points"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be at least 1")
        for name in ("samples", "events", "n"):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise ValidationError(f"{name} must be nonnegative")
        if self.N is not None and self.N < 0:
            raise ValidationError("N must be nonnegative")
        for name in ("law", "law_minus", "law_plus"):
            value = getattr(self, name)
            if value is not None and value not in _LAWS:
                raise ValidationError(f"{name} must be one of {', '.join(_LAWS)}")
        if self.mode not in ("noiseless", "noisy"):
            raise ValidationError("mode must be noiseless or noisy")
        if len(self.memory_range) != 2 or not self.memory_range[0] < self.memory_range[1]:
            raise ValidationError("memory_range needs two increasing values")
        if self.theta1 is not None and not (math.isfinite(self.theta1) and self.theta1 >= 0):
            raise ValidationError("theta1 must be finite and nonnegative")
        if not 0 < self.alpha < 1:
            raise ValidationError("alpha must lie in (0, 1)")
        for name in ("beta", "beta_minus", "beta_plus"):
            if getattr(self, name) is not None:
                self._layer_from(getattr(self, name), name)
        return self

    def require(self, *names):
        missing = [name for name in names if getattr(self, name) is None]
        if missing:
            raise ValidationError(f"missing required key(s): {', '.join(missing)}")

    def _layer_from(self, betas, name):
        try:
            return derive_rates(betas)
        except InvalidInput as exc:
            raise ValidationError(f"{name}: {exc}") from None

    def layer(self, side=None):
        """Layer for ``side`` (``"minus"``/``"plus"``), falling back to ``beta`` then ``N``."""
        specific = getattr(self, f"beta_{side}") if side else None
        if specific is not None:
            return self._layer_from(specific, f"beta_{side}")
        if self.beta is not None:
            return self._layer_from(self.beta, "beta")
        if self.N is not None:
            return derive_rates([1.0] * (self.N + 1))
        raise ValidationError("missing required key(s): beta or N")

    def reflection_law(self, side=None):
        """Reflection law for ``side`` as configured."""
        kind = (getattr(self, f"law_{side}") if side else None) or self.law
        try:
            if kind == "hard":
                return NoiselessLaw([1.0])
            if kind == "noiseless":
                return NoiselessLaw(self.layer(side))
            if kind == "truncated":
                self.require("beta_ratio")
                return TruncatedInfiniteLaw.geometric(self.beta_ratio, self.eps)
            self.require("theta1")
            layer = self.layer(side)
            if layer.N != 1:
                raise ValidationError("the noisy law needs exactly two layer weights")
            return NoisyLaw(NoisyLawParams.from_layer(layer.betas[1], self.theta1))
        except InvalidInput as exc:
            raise ValidationError(str(exc)) from None


_FIELD_NAMES = {f.name for f in fields(ExperimentConfig)}


def parse_config(text):
    """Parse configuration text into a validated :class:`ExperimentConfig`."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _KEYS:
            raise ParseError(f"unknown key {key!r}", lineno)
        if key in values:
            raise ParseError(f"key {key!r} given twice", lineno)
        if not value:
            raise ParseError(f"empty value for {key!r}", lineno)
        try:
            values[key] = _KEYS[key](value)
        except ValueError:
            raise ParseError(f"bad value {value!r} for {key!r}", lineno) from None
    assert set(values) <= _FIELD_NAMES
    return ExperimentConfig(**values).validate()


def load_config(path):
    with open(path, encoding="utf-8") as handle:
        return parse_config(handle.read())
