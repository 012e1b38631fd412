"""Declarative scenario description and the quantities derived from it."""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .adversary import AdversaryPolicy
from .grid import GridPos, MotionGraph, StatePath
from .hypotheses import HypothesisSet
from .observation import SensorModel, TargetPositionModel

ALGORITHMS = ("sdht", "adht")
RULES = ("min", "avg")
TRACE_MODES = ("full", "summary")
SCHEMA_VERSION = 1

Prior = str | tuple[float, ...]  # "uniform" or an explicit vector


@dataclass(frozen=True)
class AgentSpec:
    id: int
    good_cycle: tuple[GridPos, ...]
    bad_cycle: tuple[GridPos, ...]
    identity: str = "good"
    comm_radius: int = 3
    sensing_radius: int = 3
    adversary: AdversaryPolicy | None = None
    prior_local: Prior = "uniform"
    prior_actual: Prior = "uniform"

    @property
    def is_bad(self) -> bool:
        return self.identity == "bad"

    @property
    def path(self) -> StatePath:
        return StatePath(self.id, self.good_cycle, self.bad_cycle)

    def true_cycle(self) -> tuple[GridPos, ...]:
        return self.path.cycle(self.identity)


@dataclass(frozen=True)
class TargetSpec:
    """A passive subject: observed by agents, never observes or shares.

    It carries one hypothesis bit like an agent does: bit 1 selects
    ``good_cycle``, bit 0 ``bad_cycle``, and ``true_bit`` is the truth.
    """

    name: str
    good_cycle: tuple[GridPos, ...]
    bad_cycle: tuple[GridPos, ...]
    true_bit: int = 1


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    grid: tuple[int, int]
    agents: tuple[AgentSpec, ...]
    f: int
    sigma: float
    algorithm: str = "adht"
    rule: str = "min"
    horizon: int = 50
    seed: int = 0
    tau: float = 0.99
    targets: tuple[TargetSpec, ...] = ()
    hypotheses: str | tuple[tuple[int, ...], ...] = "product"
    true_hypothesis: tuple[int, ...] | None = None
    motion_edges: tuple[tuple[GridPos, GridPos], ...] | None = None
    tie_rule: str = "ascending-id"
    trace: str = "full"
    schema_version: int = SCHEMA_VERSION
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.rule not in RULES:
            raise ValueError(f"rule must be one of {RULES}, got {self.rule!r}")
        if self.trace not in TRACE_MODES:
            raise ValueError(f"trace must be one of {TRACE_MODES}, got {self.trace!r}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.f < 0 or self.horizon < 0:
            raise ValueError("f and horizon must be non-negative")
        if self.tie_rule != "ascending-id":
            raise ValueError("only the ascending-id tie rule is implemented")
        if [a.id for a in self.agents] != list(range(len(self.agents))):
            raise ValueError("agent ids must be 0..N-1 in order")
        if self.true_hypothesis is None:
            object.__setattr__(self, "true_hypothesis", self.identity_hypothesis())

    def with_overrides(self, **changes) -> "ScenarioSpec":
        return replace(self, **changes)

    def _cached(self, key, build):
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]

    # --- sizes -----------------------------------------------------------

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    @property
    def n_subjects(self) -> int:
        return len(self.agents) + len(self.targets)

    @property
    def good_ids(self) -> tuple[int, ...]:
        return tuple(a.id for a in self.agents if not a.is_bad)

    @property
    def bad_ids(self) -> tuple[int, ...]:
        return tuple(a.id for a in self.agents if a.is_bad)

    # --- hypotheses ------------------------------------------------------

    def identity_hypothesis(self) -> tuple[int, ...]:
        """theta* implied by identity flags (1 = good) and target truth bits."""
        return tuple(0 if a.is_bad else 1 for a in self.agents) + tuple(t.true_bit for t in self.targets)

    def hypothesis_set(self) -> HypothesisSet:
        def build():
            if self.hypotheses == "product":
                return HypothesisSet.bit_product(self.n_subjects)
            return HypothesisSet.explicit(self.hypotheses)
        return self._cached("hyps", build)

    @property
    def true_index(self) -> int:
        return self.hypothesis_set().index(self.true_hypothesis)

    # --- geometry --------------------------------------------------------

    def subject_cycles(self) -> tuple[tuple[tuple[GridPos, ...], tuple[GridPos, ...]], ...]:
        """Per subject, (bit-0 cycle, bit-1 cycle)."""
        out = [(a.bad_cycle, a.good_cycle) for a in self.agents]
        out += [(t.bad_cycle, t.good_cycle) for t in self.targets]
        return tuple(out)

    @property
    def joint_period(self) -> int:
        lengths = [len(c) for pair in self.subject_cycles() for c in pair]
        return functools.reduce(math.lcm, lengths, 1)

    @property
    def motion(self) -> MotionGraph:
        return MotionGraph(self.motion_edges)

    def sensor_model(self) -> SensorModel:
        return self._cached("sensor", lambda: SensorModel(
            TargetPositionModel(self.subject_cycles()), float(self.sigma),
            tuple(a.sensing_radius for a in self.agents), tuple(self.grid)))

    def agent_positions(self, t: int, identities: Sequence[str] | None = None) -> np.ndarray:
        """(N, 2) agent cells at t; true identities unless overridden."""
        ids = identities or [a.identity for a in self.agents]
        return np.array([a.path.position_at(t, who) for a, who in zip(self.agents, ids)], dtype=np.int64)

    def true_subject_position(self, k: int, t: int) -> GridPos:
        return self.sensor_model().targets.position(k, self.true_hypothesis[k], t)

    def comm_radii(self) -> np.ndarray:
        return np.array([a.comm_radius for a in self.agents], dtype=np.int64)

    # --- priors ----------------------------------------------------------

    def prior(self, agent: int, kind: str) -> np.ndarray:
        m = self.hypothesis_set().count
        raw = getattr(self.agents[agent], f"prior_{kind}")
        if raw == "uniform":
            return np.full(m, 1.0 / m)
        vec = np.asarray(raw, dtype=float)
        if vec.shape != (m,):
            raise ValueError(f"agent {agent}: prior_{kind} has {vec.size} entries, expected {m}")
        return vec


def neighbor_mask(positions: np.ndarray, comm_radii: np.ndarray) -> np.ndarray:
    """(N, N) bool, row i = N_i: j is included when q_i lies in j's range."""
    d = np.abs(positions[:, None, :] - positions[None, :, :]).max(axis=2)
    mask = d <= comm_radii[None, :]
    np.fill_diagonal(mask, True)
    return mask
