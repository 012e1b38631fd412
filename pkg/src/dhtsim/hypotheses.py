"""Hypothesis sets, belief vectors, KL divergence and source-agent sets."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

# Strict-positivity floor for "D > 0" in the source-state test.
EPS_KL = 1e-12
NORM_TOL = 1e-9


class InfiniteDivergenceError(ValueError):
    """Raised when p(x) > 0 while q(x) = 0, so D(p || q) is infinite."""


class ZeroMassError(ArithmeticError):
    """A belief vector with no positive entry was asked to normalize."""


@dataclass(frozen=True)
class HypothesisSet:
    """A finite hypothesis set.

    In the case study every hypothesis is a tuple of per-subject bits
    (1 = good / first-cycle, 0 = bad), so ``labels`` doubles as the bit
    matrix used by the likelihood code.
    """

    count: int
    labels: tuple[tuple[int, ...], ...] | None = None
    product: bool = False
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.count < 2:
            raise ValueError(f"hypothesis set needs at least 2 entries, got {self.count}")
        if self.labels is not None:
            if len(self.labels) != self.count:
                raise ValueError("labels must have exactly `count` entries")
            if len(set(self.labels)) != self.count:
                raise ValueError("hypothesis labels must be distinct")
            object.__setattr__(self, "_index", {lab: k for k, lab in enumerate(self.labels)})

    @classmethod
    def bit_product(cls, n_subjects: int) -> "HypothesisSet":
        """All 2**n bit tuples, ordered as binary numbers with subject 0 most significant."""
        labels = tuple(itertools.product((0, 1), repeat=n_subjects))
        return cls(len(labels), labels, product=True)

    @classmethod
    def explicit(cls, labels: Sequence[Sequence[int]]) -> "HypothesisSet":
        labs = tuple(tuple(int(b) for b in lab) for lab in labels)
        width = {len(lab) for lab in labs}
        if len(width) != 1:
            raise ValueError("all hypothesis labels must have the same length")
        full = len(labs) == 2 ** width.pop() and all(b in (0, 1) for lab in labs for b in lab)
        return cls(len(labs), labs, product=full)

    def index(self, label: Sequence[int]) -> int:
        if self._index is None:
            raise ValueError("hypothesis set has no labels")
        try:
            return self._index[tuple(int(b) for b in label)]
        except KeyError:
            raise KeyError(f"unknown hypothesis label {tuple(label)}") from None

    @property
    def bits(self) -> np.ndarray:
        """(count, n_subjects) uint8 matrix of label bits."""
        if self.labels is None:
            raise ValueError("hypothesis set has no labels")
        return np.array(self.labels, dtype=np.uint8)


def kl_divergence(p: Sequence[float], q: Sequence[float]) -> float:
    """Natural-log KL divergence D(p || q) of two discrete distributions.

    Terms with p(x) = 0 contribute 0.  Raises InfiniteDivergenceError when p
    puts mass where q does not.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"dimension mismatch: {p.shape} vs {q.shape}")
    support = p > 0
    if np.any(q[support] <= 0):
        raise InfiniteDivergenceError("p is not absolutely continuous w.r.t. q")
    ps, qs = p[support], q[support]
    d = math.fsum((ps * np.log(ps / qs)).tolist())
    # Rounding can leave a tiny negative residue for p == q.
    return max(d, 0.0)


def normalize(raw: Sequence[float]) -> np.ndarray:
    """Scale a non-negative vector to sum to one.

    The total uses ``math.fsum`` so that every caller (vectorized engine and
    scalar replay) divides by the same correctly rounded sum.
    """
    raw = np.asarray(raw, dtype=float)
    if np.any(raw < 0) or np.any(~np.isfinite(raw)):
        raise ValueError("belief entries must be finite and non-negative")
    total = math.fsum(raw.tolist())
    if not total > 0:
        raise ZeroMassError("cannot normalize an all-zero belief vector")
    return raw / total


def is_belief(b: Sequence[float], tol: float = NORM_TOL) -> bool:
    b = np.asarray(b, dtype=float)
    return bool(np.all(b >= 0) and np.all(b <= 1) and abs(math.fsum(b.tolist()) - 1.0) <= tol)


class SourceSetIndex:
    """Source agent sets S(theta, theta') for every ordered hypothesis pair.

    Two storage layouts share this interface:

    * dense: an explicit frozenset per ordered pair (any hypothesis set);
    * factored: for a full bit-product set, S(theta, theta') is the union of
      the per-bit sets S_k over the bits where theta and theta' differ, so
      only one set per subject is stored.

    ``min_overlap(theta, members)`` is the quantity both case-one tests need:
    the smallest |S(theta, theta') & members| over all theta' != theta.
    """

    def __init__(self, n_agents: int, hypotheses: HypothesisSet, *,
                 pairs: Mapping[tuple[int, int], frozenset] | None = None,
                 bit_sources: Sequence[frozenset] | None = None):
        if (pairs is None) == (bit_sources is None):
            raise ValueError("give exactly one of pairs / bit_sources")
        self.n_agents = n_agents
        self.hypotheses = hypotheses
        self._pairs = dict(pairs) if pairs is not None else None
        self.bit_sources = tuple(frozenset(s) for s in bit_sources) if bit_sources is not None else None
        if self.bit_sources is not None:
            if not hypotheses.product:
                raise ValueError("factored source sets need a full bit-product hypothesis set")
            # (n_agents, n_subjects) 0/1 membership matrix
            mat = np.zeros((n_agents, len(self.bit_sources)), dtype=np.int32)
            for k, s in enumerate(self.bit_sources):
                for a in s:
                    mat[a, k] = 1
            self._bit_matrix = mat
        else:
            m = hypotheses.count
            self._pair_matrix = np.zeros((m, m, n_agents), dtype=np.int32)
            for (a, b), s in self._pairs.items():
                for agent in s:
                    self._pair_matrix[a, b, agent] = 1

    @property
    def factored(self) -> bool:
        return self.bit_sources is not None

    def pair(self, theta: int, theta_p: int) -> frozenset:
        if theta == theta_p:
            raise ValueError("source sets are defined for distinct hypotheses only")
        if self._pairs is not None:
            return self._pairs[(theta, theta_p)]
        la = self.hypotheses.labels[theta]
        lb = self.hypotheses.labels[theta_p]
        out: set[int] = set()
        for k, (x, y) in enumerate(zip(la, lb)):
            if x != y:
                out |= self.bit_sources[k]
        return frozenset(out)

    def min_overlap(self, theta: int, members: Iterable[int]) -> int:
        members = set(members)
        if self.factored:
            return min(len(s & members) for s in self.bit_sources)
        return min(len(self._pairs[(theta, tp)] & members)
                   for tp in range(self.hypotheses.count) if tp != theta)

    def min_overlap_rows(self, masks: np.ndarray) -> np.ndarray:
        """Row-wise ``min_overlap``: row theta of ``masks`` is a member mask over agents."""
        masks = np.asarray(masks)
        if self.factored:
            return (masks.astype(np.int32) @ self._bit_matrix).min(axis=1)
        m = self.hypotheses.count
        counts = np.einsum("tpa,ta->tp", self._pair_matrix, masks.astype(np.int32))
        counts[np.arange(m), np.arange(m)] = np.iinfo(np.int32).max
        return counts.min(axis=1)

    def as_pairs(self) -> dict[tuple[int, int], frozenset]:
        m = self.hypotheses.count
        return {(a, b): self.pair(a, b) for a in range(m) for b in range(m) if a != b}

    def __eq__(self, other):
        if not isinstance(other, SourceSetIndex):
            return NotImplemented
        if self.factored and other.factored:
            return self.bit_sources == other.bit_sources
        return self.as_pairs() == other.as_pairs()
