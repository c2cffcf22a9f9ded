"""Synthetic data-generating process and logit-scale deformation of propensities."""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, DomainError

EPS = 1e-12

PROPENSITY_COEFS = np.array([-0.1, 0.05, 0.2, -0.05])
OUTCOME_COEFS = np.array([1.2, 3.6, 1.2, 1.2])
TREATMENT_EFFECT = 5.0

DEFAULT_SCALES = (0.25, 0.5, 0.75, 1.0, 1.5, 1.75, 2.0)


def expit(z):
    """Logistic sigmoid, evaluated without overflow for large |z|."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out if out.ndim else float(out)


def logit(p):
    p = np.asarray(p, dtype=float)
    out = np.log(p) - np.log1p(-p)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class Provenance:
    """Where a score vector came from.

    ``kind`` is one of ``true``, ``deformed``, ``estimated`` or
    ``post_calibrated``; ``scale``/``family``/``inner`` qualify it.
    """

    kind: str
    scale: Optional[float] = None
    family: Optional[str] = None
    inner: Optional["Provenance"] = None

    def __str__(self):
        if self.kind == "deformed":
            return f"deformed({self.scale!r})"
        if self.kind == "estimated":
            return f"estimated({self.family})"
        if self.kind == "post_calibrated":
            return f"post_calibrated({self.inner})"
        return self.kind


TRUE = Provenance("true")


@dataclass(frozen=True, eq=False)
class PropensityScores:
    """Score vector clamped into [EPS, 1 - EPS] on construction."""

    values: np.ndarray
    provenance: Provenance = TRUE

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if not np.all(np.isfinite(v)):
            raise DomainError("propensity scores must be finite")
        v = np.clip(v, EPS, 1.0 - EPS)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.values)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


def as_scores(scores) -> PropensityScores:
    if isinstance(scores, PropensityScores):
        return scores
    return PropensityScores(np.asarray(scores, dtype=float))


@dataclass(frozen=True)
class DgpConfig:
    n: int
    gamma: float = 1.0
    seed: int = 0
    covariate_sd: float = 3.0
    noise_sd: float = 0.5

    def validate(self):
        if int(self.n) != self.n or self.n < 2:
            raise ConfigError(f"n must be an integer >= 2, got {self.n!r}")
        if not (np.isfinite(self.gamma) and self.gamma > 0):
            raise ConfigError(f"gamma must be > 0, got {self.gamma!r}")
        if not (np.isfinite(self.covariate_sd) and self.covariate_sd > 0):
            raise ConfigError(f"covariate_sd must be > 0, got {self.covariate_sd!r}")
        if not (np.isfinite(self.noise_sd) and self.noise_sd >= 0):
            raise ConfigError(f"noise_sd must be >= 0, got {self.noise_sd!r}")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")


@dataclass(frozen=True, eq=False)
class SyntheticDataset:
    covariates: np.ndarray
    treatment: np.ndarray
    outcome: np.ndarray
    y0: np.ndarray
    y1: np.ndarray
    true_propensity: np.ndarray
    config: Optional[DgpConfig] = field(default=None, compare=False)

    @property
    def n(self):
        return len(self.treatment)

    @property
    def true_ate(self) -> float:
        return float(np.mean(self.y1 - self.y0))

    def scores(self) -> PropensityScores:
        return PropensityScores(self.true_propensity, TRUE)


def generate(config: DgpConfig) -> SyntheticDataset:
    """Draw one dataset.

    Draw order from a PCG64 stream seeded by ``config.seed``: covariates
    (row-major n x 4), propensity noise, outcome noise, assignment uniforms.
    """
    config.validate()
    n = int(config.n)
    rng = np.random.Generator(np.random.PCG64(int(config.seed)))
    X = rng.normal(0.0, config.covariate_sd, size=(n, 4))
    eps = rng.normal(0.0, config.noise_sd, size=n)
    eps_out = rng.normal(0.0, config.noise_sd, size=n)
    u = rng.random(n)

    lin = X @ PROPENSITY_COEFS + eps
    pi = expit(config.gamma * lin)
    a = (u < pi).astype(np.int64)

    base = X @ OUTCOME_COEFS + eps_out
    # quantize to 2**-40 so base and base + 5 are both exact and y1 - y0 == 5 bit-for-bit
    base = np.round(base * 2.0**40) / 2.0**40
    if np.max(np.abs(base), initial=0.0) >= 2.0**12:
        raise ConfigError("outcome magnitude too large for exact potential outcomes")
    y0 = base
    y1 = base + TREATMENT_EFFECT
    y = np.where(a == 1, y1, y0)
    # keep pi strictly inside (0, 1) even for extreme gamma
    pi = np.clip(pi, EPS, 1.0 - EPS)
    for arr in (X, a, y, y0, y1, pi):
        arr.setflags(write=False)
    return SyntheticDataset(X, a, y, y0, y1, pi, config)


def deform(scores, scale: float) -> PropensityScores:
    """Rescale scores on the logit scale: ``expit(scale * logit(s))``."""
    if not (np.isfinite(scale) and scale > 0):
        raise DomainError(f"deformation scale must be > 0, got {scale!r}")
    s = as_scores(scores)
    # scale 1 is the identity; skip the lossy logit/expit round trip
    out = s.values.copy() if scale == 1.0 else expit(scale * logit(s.values))
    return PropensityScores(out, Provenance("deformed", scale=float(scale)))


def _float_bits(x: float) -> int:
    return struct.unpack("<Q", struct.pack("<d", float(x)))[0]


def replicate_seed(base_seed: int, condition, replicate: int) -> int:
    """Derive an independent 64-bit seed for one (condition, replicate) cell.

    Floats are keyed by their IEEE-754 bit pattern and strings by their
    UTF-8 bytes, so the mapping does not depend on the platform.
    """
    if isinstance(condition, str):
        key = int.from_bytes(condition.encode("utf-8"), "little")
    else:
        key = _float_bits(condition)
    ss = np.random.SeedSequence([int(base_seed), key, int(replicate)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])
