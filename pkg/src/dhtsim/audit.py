"""Offline replay audit of a recorded trace.

Every belief update is recomputed from what the trace itself recorded
(positions, neighbor sets, readings, broadcasts) with the scalar reference
functions in :mod:`dhtsim.beliefs`, which share no code with the vectorized
engine that produced the trace.  Recorded and recomputed values must agree
to within ``max_ulps`` units in the last place, and the recomputed case-one
events must equal the recorded ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .beliefs import AdhtState, AgentState, StepContext, adht_step, sdht_step
from .simulator import NO_READING, SimulationTrace, decode_reading, source_sets


def ulp_distance(a: float, b: float) -> int:
    """Number of representable doubles between a and b (0 when equal)."""
    if a == b:
        return 0
    if not (np.isfinite(a) and np.isfinite(b)):
        return np.iinfo(np.int64).max

    def ordered(x):
        i = int(np.array(x, dtype=np.float64).view(np.int64))
        return i if i >= 0 else -(i & 0x7FFFFFFFFFFFFFFF)
    return abs(ordered(a) - ordered(b))


@dataclass(frozen=True)
class Mismatch:
    t: int
    agent: int
    what: str  # local | actual | events
    hyp: int
    recorded: float
    recomputed: float

    def __str__(self):
        return (f"t={self.t} agent={self.agent} {self.what}[{self.hyp}]: "
                f"recorded {self.recorded!r}, replay {self.recomputed!r}")


@dataclass
class AuditReport:
    steps: int = 0
    updates: int = 0
    mismatches: list[Mismatch] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.mismatches

    def summary(self) -> str:
        head = f"replayed {self.updates} agent updates over {self.steps} steps: "
        if self.ok:
            return head + "all match"
        return head + f"{len(self.mismatches)} mismatches, first: {self.mismatches[0]}"


def _compare(report, t, i, what, recorded, recomputed, max_ulps, limit):
    for h, (a, b) in enumerate(zip(recorded, recomputed)):
        if ulp_distance(float(a), float(b)) > max_ulps and len(report.mismatches) < limit:
            report.mismatches.append(Mismatch(t, i, what, h, float(a), float(b)))


def _label_likelihoods(model, i, q_i, obs, labels, t) -> np.ndarray:
    """Per-label products, subject by subject in ascending order (as the engine multiplies)."""
    keys = [k for k in sorted(obs) if k != i]
    pairs = [model.pair_likelihoods(i, q_i, k, obs[k], t) for k in keys]
    out = np.empty(len(labels))
    for h, label in enumerate(labels):
        acc = 1.0
        for k, pl in zip(keys, pairs):
            acc *= pl[label[k]]
        out[h] = acc
    return out


def replay_audit(trace: SimulationTrace, max_ulps: int = 1, scalar_likelihoods: bool = True,
                 limit: int = 50) -> AuditReport:
    """Recompute every step of a full trace.

    With ``scalar_likelihoods`` each hypothesis' likelihood is rebuilt as a
    plain per-label product; otherwise the engine's vectorized likelihood is
    reused and only the belief updates are replayed.
    """
    if not trace.full:
        raise ValueError("replay audit needs a full trace; this one was recorded in summary mode")
    spec = trace.spec
    hyps = spec.hypothesis_set()
    m, n = hyps.count, spec.n_agents
    model = spec.sensor_model()
    sources = source_sets(spec)
    width = spec.grid[0]
    report = AuditReport(steps=trace.horizon)

    states = {i: AgentState(trace.local[0, i].copy(), trace.actual[0, i].copy(),
                            AdhtState.empty(m, n) if spec.algorithm == "adht" else None)
              for i in spec.good_ids}
    step = adht_step if spec.algorithm == "adht" else sdht_step

    for t in range(trace.horizon):
        ctx = StepContext(sources, spec.f, spec.rule, t)
        for i in spec.good_ids:
            q_i = tuple(int(c) for c in trace.positions[t + 1, i])
            obs = {int(k): decode_reading(int(code), width)
                   for k, code in enumerate(trace.readings[t + 1, i]) if code != NO_READING}
            if scalar_likelihoods:
                lik = _label_likelihoods(model, i, q_i, obs, hyps.labels, t + 1)
            else:
                lik = model.likelihood_vector(i, q_i, obs, hyps.bits, t + 1)
            nbrs = {int(j): trace.shared[t, j] for j in np.flatnonzero(trace.neighbors[t + 1, i])}
            # replay from the recorded state so one mismatch does not cascade
            prev = states[i]
            prev.local, prev.actual = trace.local[t, i], trace.actual[t, i]
            nxt, events = step(prev, nbrs, lik, ctx)
            states[i] = nxt
            report.updates += 1
            _compare(report, t + 1, i, "local", trace.local[t + 1, i], nxt.local, max_ulps, limit)
            _compare(report, t + 1, i, "actual", trace.actual[t + 1, i], nxt.actual, max_ulps, limit)
            recorded = set(np.flatnonzero(trace.case_one[t + 1, i]).tolist())
            for h in sorted(recorded ^ set(events)):
                if len(report.mismatches) < limit:
                    report.mismatches.append(Mismatch(t + 1, i, "events", h, float(h in recorded),
                                                      float(h in events)))
    return report
