"""Counter-based random streams.

Every random number in a run is a pure function of its coordinates, so two
runs that share a seed share every draw regardless of algorithm, rule or
evaluation order.  The generator is numpy's Philox4x64-10 bit generator:

    key     = (seed, stream)
    counter = (a, b, c, 0)
    word    = first 64-bit output of Philox(key, counter)
    uniform = (word >> 11) * 2**-53          # in [0, 1)

Streams: 0 = sensor readings with (a, b, c) = (t, observer, target);
1 = adversary broadcasts with (a, b, c) = (t, agent, k) for the k-th
variate of that broadcast.
"""

from __future__ import annotations

import math

import numpy as np

SENSOR_STREAM = 0
ADVERSARY_STREAM = 1

_MASK64 = (1 << 64) - 1


def _words(seed: int, stream: int, a: int, b: int, c: int, n: int) -> np.ndarray:
    bg = np.random.Philox(
        counter=np.array([a, b, c, 0], dtype=np.uint64),
        key=np.array([seed & _MASK64, stream], dtype=np.uint64),
    )
    return bg.random_raw(n)


def uniform(seed: int, stream: int, a: int, b: int, c: int = 0) -> float:
    word = int(_words(seed, stream, a, b, c, 1)[0])
    return (word >> 11) * 2.0 ** -53


def uniforms(seed: int, stream: int, a: int, b: int, n: int) -> np.ndarray:
    """n uniforms; the k-th one is ``uniform(seed, stream, a, b, k)``."""
    out = np.empty(n)
    for k in range(n):
        out[k] = uniform(seed, stream, a, b, k)
    return out


def exponential(u: float) -> float:
    """Unit-rate exponential variate from a uniform in [0, 1)."""
    return -math.log1p(-u)


class ReadingStream:
    """Sensor uniforms keyed by (seed, observer, target, step)."""

    def __init__(self, seed: int):
        self.seed = seed

    def uniform(self, observer: int, target: int, t: int) -> float:
        return uniform(self.seed, SENSOR_STREAM, t, observer, target)
