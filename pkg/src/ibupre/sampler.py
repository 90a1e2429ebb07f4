"""Discrete Gaussian sampling over Z.

Gaussian parameters follow the rho_s(x) = exp(-pi x^2 / s^2) convention, so the
standard deviation of D_{Z,s} is about s / sqrt(2 pi).

Nothing here is constant-time. The kernels are meant for research and testing,
not for handling real secrets.
"""

import math
import os
from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._kernels import InternalSamplerFailure  # noqa: F401  (re-export)

SMOOTHING_EPS = 2.0**-36


def smoothing_r(n, eps=SMOOTHING_EPS):
    """The fixed smoothing-scale constant r = sqrt(ln(2n/eps) / pi)."""
    return math.sqrt(math.log(2 * n / eps) / math.pi)


def std_of(s):
    return s / math.sqrt(2 * math.pi)


@dataclass(frozen=True)
class GaussParam:
    s: float
    c: float = 0.0

    def __post_init__(self):
        if not self.s > 0:
            raise ValueError(f"Gaussian parameter must be positive, got {self.s}")


class Rng:
    """Deterministic randomness stream seeded by 32 bytes.

    Wraps a Philox generator. Sampling kernels draw one 64-bit key per call
    and derive the rest of their randomness from counters, which keeps the
    numba and numpy backends in lockstep.
    """

    def __init__(self, seed=None):
        if seed is None:
            seed = os.urandom(32)
        elif isinstance(seed, int):
            seed = seed.to_bytes(32, "little")
        if len(seed) != 32:
            raise ValueError("seed must be 32 bytes")
        self.seed = bytes(seed)
        self._ss = np.random.SeedSequence(int.from_bytes(self.seed, "little"))
        self._gen = np.random.Generator(np.random.Philox(self._ss))

    @classmethod
    def from_hex(cls, text):
        raw = bytes.fromhex(text)
        return cls(raw.rjust(32, b"\0")[-32:])

    @property
    def position(self):
        return int(self._gen.bit_generator.state["state"]["counter"][0])

    def spawn(self):
        """Independent child stream."""
        child = Rng.__new__(Rng)
        child.seed = self.seed
        child._ss = self._ss.spawn(1)[0]
        child._gen = np.random.Generator(np.random.Philox(child._ss))
        return child

    def key(self):
        return int(self._gen.integers(0, 1 << 64, dtype=np.uint64))

    def uniform_mod(self, q, shape):
        return self._gen.integers(0, q, size=shape, dtype=np.int64)

    def bits(self, shape):
        return self._gen.integers(0, 2, size=shape, dtype=np.int64)

    def normal(self, shape):
        return self._gen.standard_normal(shape)


def sample_z(p, rng):
    """A single draw from D_{Z,c,s}."""
    return int(_kernels.sample_z_batch(np.array([p.c]), p.s, rng.key())[0])


def sample_z_matrix(rows, cols, p, rng):
    if rows < 1 or cols < 1:
        raise ValueError("matrix dimensions must be positive")
    flat = _kernels.sample_z_batch(np.full(rows * cols, p.c), p.s, rng.key())
    return flat.reshape(rows, cols)


def sample_z_vec(centers, s, rng):
    """Independent draws D_{Z,c_i,s} for an array of centers (any shape)."""
    centers = np.asarray(centers, dtype=np.float64)
    return _kernels.sample_z_batch(centers, s, rng.key()).reshape(centers.shape)
