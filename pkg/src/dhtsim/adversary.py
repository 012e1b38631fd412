"""Byzantine broadcast policies.

A bad agent's motion follows its bad cycle; what it *shares* is decided
here and is independent of its motion.  Every broadcast is a valid
probability vector: adversaries lie about content, not about format.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng
from .hypotheses import HypothesisSet

KINDS = ("random", "fixed", "coordinated", "custom")


@dataclass(frozen=True)
class AdversaryPolicy:
    kind: str
    false_hypothesis: tuple[int, ...] | None = None  # label, for fixed / coordinated
    group: tuple[int, ...] = ()                      # coordinated members
    script: tuple[tuple[float, ...], ...] = ()       # custom: belief per step

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown adversary kind {self.kind!r}; expected one of {KINDS}")
        if self.kind in ("fixed", "coordinated") and self.false_hypothesis is None:
            raise ValueError(f"{self.kind} adversary needs false_hypothesis")
        if self.kind == "coordinated" and len(self.group) < 2:
            raise ValueError("coordinated adversary needs a group of at least two agents")
        if self.kind == "custom":
            if not self.script:
                raise ValueError("custom adversary needs a non-empty script")
            for row in self.script:
                if any(v < 0 for v in row) or abs(math.fsum(row) - 1.0) > 1e-9:
                    raise ValueError("custom script rows must be probability vectors")


def one_hot(m: int, index: int) -> np.ndarray:
    out = np.zeros(m)
    out[index] = 1.0
    return out


def random_simplex(seed: int, agent: int, t: int, m: int) -> np.ndarray:
    """Dirichlet(1, ..., 1) point: normalized unit exponentials from the adversary stream."""
    e = np.array([rng.exponential(rng.uniform(seed, rng.ADVERSARY_STREAM, t, agent, k))
                  for k in range(m)])
    return e / math.fsum(e.tolist())


def adversarial_broadcast(policy: AdversaryPolicy, agent: int, t: int,
                          hypotheses: HypothesisSet, seed: int,
                          honest_view=None) -> np.ndarray:
    """The belief a bad agent shares at step t.

    ``honest_view`` (the full honest state) is accepted so scripted
    worst-case adversaries can be plugged in; the bundled policies ignore it.
    """
    m = hypotheses.count
    if policy.kind == "random":
        return random_simplex(seed, agent, t, m)
    if policy.kind in ("fixed", "coordinated"):
        return one_hot(m, hypotheses.index(policy.false_hypothesis))
    row = policy.script[min(t, len(policy.script) - 1)]
    if len(row) != m:
        raise ValueError(f"custom script row has {len(row)} entries, expected {m}")
    return np.asarray(row, dtype=float)


def coordination_problems(policies: dict[int, AdversaryPolicy]) -> list[str]:
    """Coordinated groups must list each other and agree on the false hypothesis."""
    problems = []
    for a, pol in policies.items():
        if pol.kind != "coordinated":
            continue
        if a not in pol.group:
            problems.append(f"agent {a}: coordinated group {pol.group} does not include itself")
        for b in pol.group:
            other = policies.get(b)
            if other is None or other.kind != "coordinated":
                problems.append(f"agent {a}: group member {b} is not a coordinated adversary")
            elif tuple(other.group) != tuple(pol.group) or other.false_hypothesis != pol.false_hypothesis:
                problems.append(f"agent {a}: group member {b} disagrees on group or false hypothesis")
    return problems
