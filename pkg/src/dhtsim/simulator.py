"""The discrete-time loop, runtime invariants, run metrics and scenario validation."""

from __future__ import annotations

import dataclasses
import functools
import math
import statistics
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import rng
from .adversary import adversarial_broadcast, coordination_problems
from .beliefs import BatchState, StepContext, batch_step, threshold
from .grid import cycle_violations
from .hypotheses import NORM_TOL, SourceSetIndex
from .observation import EMPTY
from .scenario import ScenarioSpec, neighbor_mask
from .sources import compute_source_sets

NO_READING = -2
EMPTY_READING = -1


class InvariantViolation(RuntimeError):
    def __init__(self, step: int, agent: int, message: str):
        super().__init__(f"step {step}, agent {agent}: {message}")
        self.step = step
        self.agent = agent


class ScenarioRejected(ValueError):
    """``run`` was handed a spec that the validator flags with ERROR findings."""

    def __init__(self, findings):
        self.findings = findings
        super().__init__("; ".join(str(x) for x in findings))


# --- source sets are a function of geometry only, so cache across seeds ------

def _geometry_key(spec: ScenarioSpec) -> ScenarioSpec:
    return dataclasses.replace(spec, name="", seed=0, algorithm="adht", rule="min", horizon=0,
                               tau=0.99, trace="full")


@functools.lru_cache(maxsize=32)
def _sources_for(key: ScenarioSpec) -> SourceSetIndex:
    return compute_source_sets(key)


def source_sets(spec: ScenarioSpec) -> SourceSetIndex:
    return _sources_for(_geometry_key(spec))


# --- trace ---------------------------------------------------------------

@dataclass
class RunMetrics:
    convergence_time: int | None
    case_one_total: int
    case_one_cumulative: np.ndarray  # (T+1,) summed over good agents
    mean_ab_true: np.ndarray         # (T+1,) good-agent mean of b^a(theta*)
    mean_lb_true: np.ndarray
    final_ab_true: tuple[float, ...]  # per agent (bad agents keep their prior)

    def summary(self) -> dict:
        return {
            "convergence_time": self.convergence_time,
            "case_one_total": self.case_one_total,
            "final_mean_ab_true": float(self.mean_ab_true[-1]),
            "final_mean_lb_true": float(self.mean_lb_true[-1]),
            "final_ab_true": [float(x) for x in self.final_ab_true],
        }


@dataclass
class SimulationTrace:
    """Everything a run produced, indexed by step 0..T.

    Step t+1 entries of ``readings``, ``neighbors`` and ``case_one`` belong
    to the update that produced the step t+1 beliefs.  ``shared[t]`` is what
    each agent broadcast at t.  In summary mode only the theta* column of
    the beliefs is kept and ``local``/``actual``/``shared``/``case_one`` are
    None.
    """

    spec: ScenarioSpec
    positions: np.ndarray        # (T+1, N, 2)
    neighbors: np.ndarray        # (T+1, N, N) bool
    readings: np.ndarray         # (T+1, N, S) cell index y*W+x, -1 empty, -2 none
    local_true: np.ndarray       # (T+1, N)
    actual_true: np.ndarray      # (T+1, N)
    case_one_counts: np.ndarray  # (T+1, N)
    local: np.ndarray | None = None    # (T+1, N, m)
    actual: np.ndarray | None = None   # (T+1, N, m)
    shared: np.ndarray | None = None   # (T, N, m)
    case_one: np.ndarray | None = None  # (T+1, N, m) bool
    metrics: RunMetrics | None = None

    @property
    def horizon(self) -> int:
        return self.positions.shape[0] - 1

    @property
    def full(self) -> bool:
        return self.local is not None


def encode_reading(s, width: int) -> int:
    return EMPTY_READING if s is EMPTY else s[1] * width + s[0]


def decode_reading(code: int, width: int):
    if code == NO_READING:
        raise ValueError("no reading recorded")
    return EMPTY if code == EMPTY_READING else (int(code) % width, int(code) // width)


def compute_metrics(spec: ScenarioSpec, actual_true: np.ndarray, local_true: np.ndarray,
                    counts: np.ndarray) -> RunMetrics:
    good = list(spec.good_ids)
    conv = None
    if good:
        hit = np.flatnonzero((actual_true[:, good] >= spec.tau).all(axis=1))
        conv = int(hit[0]) if hit.size else None
    cum = np.cumsum(counts[:, good].sum(axis=1)) if good else np.zeros(counts.shape[0], dtype=np.int64)
    mean = (lambda a: a[:, good].mean(axis=1)) if good else (lambda a: np.zeros(a.shape[0]))
    return RunMetrics(conv, int(cum[-1]), cum, mean(actual_true), mean(local_true),
                      tuple(float(x) for x in actual_true[-1]))


def _check_step(spec: ScenarioSpec, t: int, state: BatchState, true_idx: int) -> None:
    for i in spec.good_ids:
        for name, vec in (("local", state.local[i]), ("actual", state.actual[i])):
            if np.any(vec < 0) or np.any(vec > 1) or not np.all(np.isfinite(vec)):
                raise InvariantViolation(t, i, f"{name} belief leaves [0, 1]")
            if abs(math.fsum(vec.tolist()) - 1.0) > NORM_TOL:
                raise InvariantViolation(t, i, f"{name} belief is not normalized")
        if not state.actual[i, true_idx] > 0:
            raise InvariantViolation(t, i, "actual belief on the true hypothesis reached 0")


def run(spec: ScenarioSpec, *, validate_first: bool = True) -> SimulationTrace:
    """Simulate ``spec.horizon`` steps and return the trace.

    Each step: snapshot what every agent shares at t, move to t+1, sample
    the good agents' readings, update local beliefs, update actual beliefs
    from the snapshot, normalize and check invariants.
    """
    if validate_first:
        errors = [x for x in validate(spec) if x.level == "ERROR"]
        if errors:
            raise ScenarioRejected(errors)
    hyps = spec.hypothesis_set()
    m, n, n_sub, horizon = hyps.count, spec.n_agents, spec.n_subjects, spec.horizon
    sources = source_sets(spec)
    model = spec.sensor_model()
    bits = hyps.bits
    true_idx = spec.true_index
    true_bits = spec.true_hypothesis
    good, bad = list(spec.good_ids), list(spec.bad_ids)
    width = spec.grid[0]
    radii = spec.comm_radii()
    full = spec.trace == "full"

    local0 = np.stack([spec.prior(i, "local") for i in range(n)])
    actual0 = np.stack([spec.prior(i, "actual") for i in range(n)])
    state = BatchState.initial(local0, actual0, spec.algorithm)

    positions = np.stack([spec.agent_positions(t) for t in range(horizon + 1)])
    neighbors = np.stack([neighbor_mask(p, radii) for p in positions])
    readings = np.full((horizon + 1, n, n_sub), NO_READING, dtype=np.int32)
    counts = np.zeros((horizon + 1, n), dtype=np.int64)
    local_true = np.empty((horizon + 1, n))
    actual_true = np.empty((horizon + 1, n))
    local_true[0], actual_true[0] = local0[:, true_idx], actual0[:, true_idx]
    if full:
        local = np.empty((horizon + 1, n, m))
        actual = np.empty((horizon + 1, n, m))
        shared = np.empty((horizon, n, m))
        case_one = np.zeros((horizon + 1, n, m), bool)
        local[0], actual[0] = local0, actual0
    _check_step(spec, 0, state, true_idx)

    for t in range(horizon):
        bcast = state.actual.copy()
        for b in bad:
            bcast[b] = adversarial_broadcast(spec.agents[b].adversary, b, t, hyps, spec.seed)
        lik = np.ones((n, m))
        for i in good:
            q_i = tuple(int(c) for c in positions[t + 1, i])
            obs = {}
            for k in range(n_sub):
                if k == i:
                    continue
                u = rng.uniform(spec.seed, rng.SENSOR_STREAM, t + 1, i, k)
                s = model.sample(i, q_i, k, true_bits[k], t + 1, u)
                obs[k] = s
                readings[t + 1, i, k] = encode_reading(s, width)
            lik[i] = model.likelihood_vector(i, q_i, obs, bits, t + 1)
        ctx = StepContext(sources, spec.f, spec.rule, t)
        state, c1 = batch_step(state, bcast, neighbors[t + 1], lik, good, ctx, spec.algorithm)
        _check_step(spec, t + 1, state, true_idx)
        counts[t + 1] = c1.sum(axis=1)
        local_true[t + 1], actual_true[t + 1] = state.local[:, true_idx], state.actual[:, true_idx]
        if full:
            local[t + 1], actual[t + 1], shared[t], case_one[t + 1] = state.local, state.actual, bcast, c1

    trace = SimulationTrace(spec, positions, neighbors, readings, local_true, actual_true, counts)
    if full:
        trace.local, trace.actual, trace.shared, trace.case_one = local, actual, shared, case_one
    trace.metrics = compute_metrics(spec, actual_true, local_true, counts)
    return trace


# --- validation ----------------------------------------------------------

@dataclass(frozen=True)
class Finding:
    level: str  # ERROR or WARNING
    code: str
    message: str

    def __str__(self):
        return f"{self.level} [{self.code}] {self.message}"


def _prior_findings(spec: ScenarioSpec) -> list[Finding]:
    out = []
    for a in spec.agents:
        if a.is_bad:
            continue
        for kind in ("local", "actual"):
            try:
                vec = spec.prior(a.id, kind)
            except ValueError as exc:
                out.append(Finding("ERROR", "prior-shape", str(exc)))
                continue
            if np.any(vec <= 0):
                out.append(Finding("ERROR", "prior-positive",
                                   f"agent {a.id}: prior_{kind} has non-positive entries; initial beliefs "
                                   "must be strictly positive on every hypothesis"))
            if abs(math.fsum(vec.tolist()) - 1.0) > NORM_TOL:
                out.append(Finding("ERROR", "prior-normalized", f"agent {a.id}: prior_{kind} does not sum to 1"))
    return out


def _structure_findings(spec: ScenarioSpec) -> list[Finding]:
    out = []
    motion = spec.motion
    for a in spec.agents:
        for which, cyc in (("good_cycle", a.good_cycle), ("bad_cycle", a.bad_cycle)):
            for p in cycle_violations(cyc, motion, spec.grid):
                out.append(Finding("ERROR", "path", f"agent {a.id} {which}: {p}"))
        if a.is_bad and a.adversary is None:
            out.append(Finding("ERROR", "adversary", f"agent {a.id} is bad but has no adversary policy"))
        if not a.is_bad and a.adversary is not None:
            out.append(Finding("ERROR", "adversary", f"agent {a.id} is good but has an adversary policy"))
        if a.comm_radius < 0 or a.sensing_radius < 0:
            out.append(Finding("ERROR", "radius", f"agent {a.id}: radii must be non-negative"))
    for t in spec.targets:
        for which, cyc in (("good_cycle", t.good_cycle), ("bad_cycle", t.bad_cycle)):
            for p in cycle_violations(cyc, motion, spec.grid):
                out.append(Finding("ERROR", "path", f"target {t.name} {which}: {p}"))
    policies = {a.id: a.adversary for a in spec.agents if a.adversary is not None}
    for p in coordination_problems(policies):
        out.append(Finding("ERROR", "adversary", p))
    for a in spec.agents:
        if a.adversary is not None and a.adversary.kind == "custom":
            m = spec.hypothesis_set().count
            if any(len(row) != m for row in a.adversary.script):
                out.append(Finding("ERROR", "adversary", f"agent {a.id}: custom script rows need {m} entries"))
    return out


def _hypothesis_findings(spec: ScenarioSpec) -> list[Finding]:
    out = []
    theta = spec.true_hypothesis
    if len(theta) != spec.n_subjects:
        return [Finding("ERROR", "true-hypothesis",
                        f"true_hypothesis has {len(theta)} bits, expected {spec.n_subjects}")]
    if tuple(theta) != spec.identity_hypothesis():
        out.append(Finding("ERROR", "true-hypothesis",
                           f"true_hypothesis {tuple(theta)} disagrees with identity flags "
                           f"{spec.identity_hypothesis()} (bit 0 must mark exactly the bad agents)"))
    try:
        hyps = spec.hypothesis_set()
        hyps.index(theta)
        if hyps.labels and len(hyps.labels[0]) != spec.n_subjects:
            out.append(Finding("ERROR", "hypotheses", "hypothesis labels do not match the number of subjects"))
    except (KeyError, ValueError) as exc:
        out.append(Finding("ERROR", "hypotheses", f"true hypothesis not in the hypothesis set: {exc}"))
        return out
    for a in spec.agents:
        pol = a.adversary
        if pol is not None and pol.false_hypothesis is not None:
            try:
                hyps.index(pol.false_hypothesis)
            except KeyError:
                out.append(Finding("ERROR", "adversary",
                                   f"agent {a.id}: false_hypothesis {pol.false_hypothesis} is not in the set"))
    return out


def validate(spec: ScenarioSpec) -> list[Finding]:
    """Static checks.  ERROR findings make ``run`` refuse the scenario."""
    findings = _prior_findings(spec) + _structure_findings(spec) + _hypothesis_findings(spec)
    if any(x.level == "ERROR" for x in findings):
        return findings

    period = spec.joint_period
    radii = spec.comm_radii()
    nbrs = [neighbor_mask(spec.agent_positions(t), radii) for t in range(period)]
    bad = np.array([a.is_bad for a in spec.agents])
    for i in spec.good_ids:
        worst = max(range(period), key=lambda t: int((nbrs[t][i] & bad).sum()))
        k = int((nbrs[worst][i] & bad).sum())
        if k > spec.f:
            findings.append(Finding("ERROR", "f-bound",
                                    f"agent {i} has {k} bad neighbors at period step {worst}, more than f={spec.f}"))

    sources = source_sets(spec)
    m = spec.hypothesis_set().count
    thr = threshold(spec.f, spec.rule)
    for i in spec.good_ids:
        alone = all(sources.min_overlap(th, [i]) >= 1 for th in range(m)) if not sources.factored \
            else sources.min_overlap(0, [i]) >= 1
        if spec.algorithm == "sdht":
            reach = any(_meets(sources, nb[i], thr) for nb in nbrs)
        else:
            union = np.logical_or.reduce([nb[i] for nb in nbrs])
            reach = _meets(sources, union, thr)
        if not (alone or reach):
            findings.append(Finding(
                "WARNING", "case-one-proxy",
                f"agent {i}: the {spec.algorithm.upper()} case-one threshold {thr} is never met over one "
                "period and the agent is not a source for every pair; convergence cannot be certified"))
    return findings


def _meets(sources: SourceSetIndex, mask: np.ndarray, thr: int) -> bool:
    m = sources.hypotheses.count
    rows = sources.min_overlap_rows(np.broadcast_to(mask, (1 if sources.factored else m, mask.size)))
    return bool((rows >= thr).all())


# --- paired comparisons --------------------------------------------------

@dataclass(frozen=True)
class ComparisonRow:
    label: str
    seed: int
    convergence_time: int | None
    case_one_total: int


@dataclass
class Comparison:
    labels: tuple[str, ...]
    seeds: tuple[int, ...]
    rows: list[ComparisonRow]

    def times(self, label: str) -> list[float]:
        return [math.inf if r.convergence_time is None else r.convergence_time
                for r in self.rows if r.label == label]

    def median_time(self, label: str) -> float:
        return statistics.median(self.times(label))

    def wins(self) -> dict[str, int]:
        """Per label, the seeds on which it converged strictly first."""
        out = {lab: 0 for lab in self.labels}
        for s in self.seeds:
            vals = {r.label: (math.inf if r.convergence_time is None else r.convergence_time)
                    for r in self.rows if r.seed == s}
            best = min(vals.values())
            winners = [lab for lab, v in vals.items() if v == best]
            if len(winners) == 1 and best < math.inf:
                out[winners[0]] += 1
        return out

    def format(self) -> str:
        def fmt(v):
            return "none" if v is None or v == math.inf else (f"{v:g}" if isinstance(v, float) else str(v))
        lines = ["seed," + ",".join(f"{lab}:conv,{lab}:case1" for lab in self.labels)]
        for s in self.seeds:
            by = {r.label: r for r in self.rows if r.seed == s}
            lines.append(f"{s}," + ",".join(f"{fmt(by[lab].convergence_time)},{by[lab].case_one_total}"
                                            for lab in self.labels))
        wins = self.wins()
        lines.append("median," + ",".join(
            f"{fmt(self.median_time(lab))},{fmt(statistics.median(r.case_one_total for r in self.rows if r.label == lab))}"
            for lab in self.labels))
        lines.append("wins," + ",".join(f"{wins[lab]}," for lab in self.labels))
        return "\n".join(lines)


def compare(specs: Sequence[tuple[str, ScenarioSpec]], seeds: Sequence[int], runner=None) -> Comparison:
    """Run every (label, spec) on every seed; seeds are shared so runs are paired."""
    runner = runner or run
    rows = []
    for label, spec in specs:
        for s in seeds:
            m = runner(spec.with_overrides(seed=s)).metrics
            rows.append(ComparisonRow(label, s, m.convergence_time, m.case_one_total))
    return Comparison(tuple(label for label, _ in specs), tuple(seeds), rows)
