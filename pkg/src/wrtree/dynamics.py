"""Independent spin flips on occupied sites; holes never change.

Random numbers come from Philox4x64-10 (numpy's ``Philox``) keyed by the pair
``(seed, stream)``.  The flip decision for vertex i uses the i-th double of
that stream, so results depend only on (seed, stream, vertex index) and not on
how the work is split.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .static_model import ParameterError
from .tree import SpinConfiguration


@dataclass(frozen=True)
class TimeKernel:
    t: float
    ht: float
    ct: float
    kernel: np.ndarray

    @property
    def flip_probability(self) -> float:
        return float(self.kernel[2, 0])


def make_kernel(t: float) -> TimeKernel:
    if not t > 0:
        raise ParameterError(f"time must be positive, got {t!r}; use IDENTITY_KERNEL for t = 0")
    e = math.exp(-2.0 * t)
    stay, flip = 0.5 * (1.0 + e), 0.5 * (1.0 - e)
    kernel = np.array([[stay, 0.0, flip], [0.0, 1.0, 0.0], [flip, 0.0, stay]])
    kernel.setflags(write=False)
    # h^t = artanh(e^-2t) = 1/2 log((1+e)/(1-e)); occupied entries are c_t exp(h^t x y)
    ht = math.atanh(e) if e < 1 else math.inf
    ct = 0.5 * math.sqrt(-math.expm1(-4.0 * t))
    return TimeKernel(t=float(t), ht=ht, ct=ct, kernel=kernel)


IDENTITY_KERNEL = np.eye(3)
IDENTITY_KERNEL.setflags(write=False)


def ht_of(t: float) -> float:
    return make_kernel(t).ht


def time_of_ht(ht: float) -> float:
    """Inverse of t -> h^t."""
    if not ht > 0:
        raise ParameterError(f"h^t must be positive, got {ht!r}")
    return -0.5 * math.log(math.tanh(ht))


def philox(seed: int, stream: int = 0) -> np.random.Generator:
    if not 0 <= int(seed) < 2**64:
        raise ParameterError(f"seed must lie in [0, 2^64), got {seed!r}")
    return np.random.Generator(np.random.Philox(key=np.array([seed, stream], dtype=np.uint64)))


def evolve(cfg: SpinConfiguration, k: TimeKernel, seed: int, stream: int = 0) -> SpinConfiguration:
    u = philox(seed, stream).random(cfg.truncation.n_vertices)
    spin = np.where(u < k.flip_probability, -cfg.spin, cfg.spin)
    return SpinConfiguration(cfg.truncation, spin)
