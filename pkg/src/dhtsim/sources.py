"""Source states and source agent sets, computed from declared paths only.

An observer at cell q is a source for (theta, theta') at step t when the
reading distributions it would see under the two hypotheses differ in KL
divergence by more than EPS_KL.  Readings of different subjects are
independent, so the divergence is the sum of per-subject divergences over
the subjects whose bits differ.  An infinite divergence (one hypothesis
puts the subject in the window, the other cannot) counts as a source.

Paths are periodic, so "visits a source state infinitely often" reduces
to "visits one at some step of the joint period".  Observers are scored
along their declared good cycles: that is the path the group plans around.
"""

from __future__ import annotations

import functools
import math
from typing import Sequence

from .grid import GridPos
from .hypotheses import EPS_KL, InfiniteDivergenceError, SourceSetIndex, kl_divergence
from .observation import reading_distribution
from .scenario import ScenarioSpec


@functools.lru_cache(maxsize=262144)
def subject_divergence(q_i: GridPos, q_a: GridPos, q_b: GridPos, sigma: float, radius: int,
                       grid: tuple[int, int]) -> float:
    """D(P(. | subject at q_a) || P(. | subject at q_b)) for an observer at q_i; may be inf."""
    if q_a == q_b:
        return 0.0
    p = reading_distribution(q_i, q_a, sigma, radius, grid)
    q = reading_distribution(q_i, q_b, sigma, radius, grid)
    try:
        return kl_divergence(p, q)
    except InfiniteDivergenceError:
        return math.inf


def is_source_state(spec: ScenarioSpec, observer: int, theta: Sequence[int], theta_p: Sequence[int],
                    q: GridPos, t: int, eps: float = EPS_KL) -> bool:
    """True iff an observer at q, at step t, gains information separating theta from theta'."""
    model = spec.sensor_model()
    r = model.sensing_radius[observer]
    total = 0.0
    for k, (a, b) in enumerate(zip(theta, theta_p)):
        if k == observer or a == b:
            continue
        total += subject_divergence(tuple(q), model.targets.position(k, a, t),
                                    model.targets.position(k, b, t), model.sigma, r, model.grid)
    return total > eps


def _observer_track(spec: ScenarioSpec, i: int) -> list[GridPos]:
    return [spec.agents[i].path.position_at(t, "good") for t in range(spec.joint_period)]


def bit_source_sets(spec: ScenarioSpec, eps: float = EPS_KL) -> tuple[frozenset, ...]:
    """S_k = observers that can tell subject k's two cycles apart at some period step."""
    model = spec.sensor_model()
    out = []
    for k in range(spec.n_subjects):
        members = set()
        for i in range(spec.n_agents):
            if i == k:
                continue
            r = model.sensing_radius[i]
            for t, q in enumerate(_observer_track(spec, i)):
                d = subject_divergence(q, model.targets.position(k, 0, t), model.targets.position(k, 1, t),
                                       model.sigma, r, model.grid)
                if d > eps:
                    members.add(i)
                    break
        out.append(frozenset(members))
    return tuple(out)


def dense_source_sets(spec: ScenarioSpec, eps: float = EPS_KL) -> dict[tuple[int, int], frozenset]:
    """Brute force: test every (pair, observer, period step) directly."""
    hyps = spec.hypothesis_set()
    tracks = [_observer_track(spec, i) for i in range(spec.n_agents)]
    pairs = {}
    for a, la in enumerate(hyps.labels):
        for b, lb in enumerate(hyps.labels):
            if a == b:
                continue
            pairs[(a, b)] = frozenset(
                i for i in range(spec.n_agents)
                if any(is_source_state(spec, i, la, lb, q, t, eps) for t, q in enumerate(tracks[i])))
    return pairs


def compute_source_sets(spec: ScenarioSpec, eps: float = EPS_KL) -> SourceSetIndex:
    """Factored index for full bit-product sets, dense index otherwise."""
    hyps = spec.hypothesis_set()
    if hyps.product:
        return SourceSetIndex(spec.n_agents, hyps, bit_sources=bit_source_sets(spec, eps))
    return SourceSetIndex(spec.n_agents, hyps, pairs=dense_source_sets(spec, eps))
