"""Truncated-Gaussian position sensor and the per-hypothesis likelihoods.

An observer at q_i reads every other subject j.  If j's true cell lies in
the observer's window the reading is a window cell drawn from a Gaussian
centred on j and renormalized over the window; otherwise the reading is
EMPTY.  Hypothesis bit theta(j) selects which of j's two cycles gives its
hypothesized position.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .grid import GridPos, in_sensing_window, window_cells

EMPTY = None
Reading = Optional[GridPos]


@functools.lru_cache(maxsize=65536)
def sensor_distribution(q_i: GridPos, q_j: GridPos, sigma: float, radius: int,
                        grid: tuple[int, int] | None = None) -> tuple[tuple[GridPos, ...], np.ndarray]:
    """Window cells (row-major) and their reading probabilities for a target at q_j."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    cells = window_cells(q_i, radius, grid)
    d2 = np.array([(x - q_j[0]) ** 2 + (y - q_j[1]) ** 2 for x, y in cells], dtype=float)
    # Shift by the smallest distance so a tiny sigma cannot underflow every weight.
    w = np.exp(-(d2 - d2.min()) / (2.0 * sigma * sigma))
    probs = w / math.fsum(w.tolist())
    probs.setflags(write=False)
    return cells, probs


def sensor_prob(s: GridPos, q_i: GridPos, q_j: GridPos, sigma: float, radius: int,
                grid: tuple[int, int] | None = None) -> float:
    """P(reading = s | observer at q_i, target at q_j)."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    cells, probs = sensor_distribution(tuple(q_i), tuple(q_j), float(sigma), radius, grid)
    try:
        return float(probs[cells.index(tuple(s))])
    except ValueError:
        raise ValueError(f"reading {s} is outside the window of {q_i}") from None


def sample_cell(cells: Sequence[GridPos], probs: np.ndarray, u: float) -> GridPos:
    """Inverse-CDF draw: the first cell whose cumulative probability exceeds u."""
    cdf = np.cumsum(probs)
    k = int(np.searchsorted(cdf, u, side="right"))
    return cells[min(k, len(cells) - 1)]


def sample_reading(q_i: GridPos, q_true: GridPos, sigma: float, radius: int,
                   grid: tuple[int, int] | None, u: float) -> Reading:
    """One reading of a target whose true cell is q_true, consuming the uniform u."""
    if not in_sensing_window(q_i, q_true, radius):
        return EMPTY
    cells, probs = sensor_distribution(tuple(q_i), tuple(q_true), float(sigma), radius, grid)
    return sample_cell(cells, probs, u)


def pair_likelihood(s: Reading, q_i: GridPos, q_hyp: GridPos, sigma: float, radius: int,
                    grid: tuple[int, int] | None = None) -> float:
    """Likelihood of one reading given the hypothesized target cell.

    Non-empty reading: the sensor probability with the Gaussian centred on
    q_hyp.  Empty reading: 0 if q_hyp is inside the window, else 1.
    """
    if s is EMPTY:
        return 0.0 if in_sensing_window(q_i, q_hyp, radius) else 1.0
    return sensor_prob(s, q_i, q_hyp, sigma, radius, grid)


def reading_distribution(q_i: GridPos, q_j: GridPos, sigma: float, radius: int,
                         grid: tuple[int, int] | None = None) -> np.ndarray:
    """Generative distribution over window cells followed by EMPTY (last slot)."""
    cells = window_cells(q_i, radius, grid)
    out = np.zeros(len(cells) + 1)
    if in_sensing_window(q_i, q_j, radius):
        out[:-1] = sensor_distribution(tuple(q_i), tuple(q_j), float(sigma), radius, grid)[1]
    else:
        out[-1] = 1.0
    return out


@dataclass(frozen=True)
class TargetPositionModel:
    """Deterministic subject positions: ``cycles[k][bit]`` repeats from t = 0."""

    cycles: tuple[tuple[tuple[GridPos, ...], tuple[GridPos, ...]], ...]

    @property
    def n_subjects(self) -> int:
        return len(self.cycles)

    def position(self, k: int, bit: int, t: int) -> GridPos:
        cyc = self.cycles[k][bit]
        return cyc[t % len(cyc)]


@dataclass(frozen=True)
class SensorModel:
    """Everything an observer needs to score readings against hypotheses."""

    targets: TargetPositionModel
    sigma: float
    sensing_radius: tuple[int, ...]  # per observing agent
    grid: tuple[int, int]

    def sample(self, i: int, q_i: GridPos, k: int, true_bit: int, t: int, u: float) -> Reading:
        q_true = self.targets.position(k, true_bit, t)
        return sample_reading(q_i, q_true, self.sigma, self.sensing_radius[i], self.grid, u)

    def pair_likelihoods(self, i: int, q_i: GridPos, k: int, s: Reading, t: int) -> tuple[float, float]:
        """(l(s | bit 0), l(s | bit 1)) for subject k."""
        r = self.sensing_radius[i]
        return tuple(pair_likelihood(s, q_i, self.targets.position(k, b, t), self.sigma, r, self.grid)
                     for b in (0, 1))

    def joint_likelihood(self, i: int, q_i: GridPos, readings: Mapping[int, Reading],
                         label: Sequence[int], t: int) -> float:
        """Product over subjects k != i, in ascending k, of the per-reading likelihoods."""
        out = 1.0
        for k in sorted(readings):
            if k == i:
                continue
            out *= self.pair_likelihoods(i, q_i, k, readings[k], t)[label[k]]
        return out

    def likelihood_vector(self, i: int, q_i: GridPos, readings: Mapping[int, Reading],
                          bits: np.ndarray, t: int) -> np.ndarray:
        """``joint_likelihood`` for every row of the (m, n_subjects) bit matrix.

        Multiplies in the same order as the scalar version so results are
        bit-identical.
        """
        out = np.ones(bits.shape[0])
        for k in sorted(readings):
            if k == i:
                continue
            l0, l1 = self.pair_likelihoods(i, q_i, k, readings[k], t)
            out = out * np.where(bits[:, k] == 1, l1, l0)
        return out
