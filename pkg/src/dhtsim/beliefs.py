"""Belief updates: Bayesian local beliefs, SDHT and ADHT actual-belief rules.

Two implementations live here.  The scalar functions (``lb_update``,
``min_fuse``, ``partition_lmh``, ``avg_fuse``, ``abu``, ``sdht_step``,
``adht_step``) follow the definitions one agent and one hypothesis at a
time and are what the replay audit uses.  ``batch_step`` advances every
agent at once with numpy and is what the simulator runs.  Both evaluate
the same floating-point operations in the same order, so they agree bit
for bit; the test suite holds them to that.

Conventions shared by both:

* ties are broken by ascending agent id;
* an agent's own time-t actual belief is part of the shared pool and its
  fresh local belief enters again through the final clamp;
* sums of fused values are accumulated left to right in ascending agent
  id; normalization totals use ``math.fsum``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .hypotheses import SourceSetIndex, ZeroMassError, normalize


class ContractError(ValueError):
    """A fusion routine was called outside its precondition."""


def threshold(f: int, rule: str) -> int:
    """Case-one cardinality: 2f+1 under the minimum rule, 2f+2 under the average rule."""
    if rule == "min":
        return 2 * f + 1
    if rule == "avg":
        return 2 * f + 2
    raise ValueError(f"unknown fusion rule {rule!r}")


# --- local belief ----------------------------------------------------------

def lb_update(b_prev: Sequence[float], likelihoods: Sequence[float], *, agent: int | None = None,
              t: int | None = None) -> np.ndarray:
    """Bayes' rule with the likelihood of the current readings under each hypothesis."""
    raw = np.asarray(likelihoods, dtype=float) * np.asarray(b_prev, dtype=float)
    try:
        return normalize(raw)
    except ZeroMassError:
        where = f" (agent {agent}, step {t})" if agent is not None else ""
        raise ZeroMassError(
            f"local belief update has zero evidence mass{where}: every hypothesis with prior mass "
            "assigns likelihood 0 to the readings") from None


# --- case-one building blocks ------------------------------------------------

def case_condition(theta: int, neighbors, sources: SourceSetIndex, f: int, rule: str) -> bool:
    """Every source set S(theta, theta') meets the neighbor set in at least `threshold` agents."""
    return sources.min_overlap(theta, neighbors) >= threshold(f, rule)


def _ascending(shared: Mapping[int, float]) -> list[int]:
    return sorted(shared, key=lambda j: (shared[j], j))


def min_fuse(shared: Mapping[int, float], own_lb: float, f: int) -> float:
    """Drop the f lowest shared values, return the minimum of the rest and own_lb."""
    if len(shared) <= f:
        raise ContractError(f"min_fuse needs more than f={f} shared values, got {len(shared)}")
    kept = _ascending(shared)[f:]
    return min(min(shared[j] for j in kept), own_lb)


def partition_lmh(theta: int, shared: Mapping[int, float], sources: SourceSetIndex,
                  f: int) -> tuple[frozenset, frozenset, frozenset]:
    """Split the shared agents into (L, M, H).

    L holds the f lowest values.  H is the shortest run, taken from the
    remaining agents in descending value order, that covers at least f+1
    members of every S(theta, theta').  M is what is left.
    """
    if len(shared) <= f:
        raise ContractError(f"partition needs more than f={f} shared values")
    asc = _ascending(shared)
    low = asc[:f]
    rest = sorted(asc[f:], key=lambda j: (-shared[j], j))
    high: list[int] = []
    for j in rest:
        high.append(j)
        if sources.min_overlap(theta, high) >= f + 1:
            break
    else:
        raise ContractError(f"no subset of the shared agents covers f+1={f + 1} source agents for every pair")
    middle = frozenset(shared) - set(low) - set(high)
    if not middle:
        raise ContractError("middle set M is empty; the 2f+2 case condition does not hold")
    return frozenset(low), middle, frozenset(high)


def avg_fuse(middle, shared: Mapping[int, float], own_lb: float) -> float:
    """Mean of the middle set's shared values, clamped above by own_lb."""
    if not middle:
        raise ContractError("avg_fuse needs a non-empty middle set")
    acc = 0.0
    for j in sorted(middle):
        acc += shared[j]
    return min(acc / len(middle), own_lb)


def fuse(theta: int, shared: Mapping[int, float], own_lb: float, sources: SourceSetIndex,
         f: int, rule: str) -> float:
    if rule == "min":
        return min_fuse(shared, own_lb, f)
    _, middle, _ = partition_lmh(theta, shared, sources, f)
    return avg_fuse(middle, shared, own_lb)


# --- per-agent state -------------------------------------------------------

@dataclass
class AdhtState:
    """Per-hypothesis accumulators of one agent.

    Row theta of ``collected`` marks which agents' beliefs are saved for
    theta; ``saved`` holds the latest value received from each of them.
    """

    collected: np.ndarray  # (m, N) bool
    saved: np.ndarray      # (m, N) float
    reset_flag: np.ndarray  # (m,) bool

    @classmethod
    def empty(cls, m: int, n_agents: int) -> "AdhtState":
        return cls(np.zeros((m, n_agents), bool), np.zeros((m, n_agents)), np.zeros(m, bool))

    def copy(self) -> "AdhtState":
        return AdhtState(self.collected.copy(), self.saved.copy(), self.reset_flag.copy())

    def reset(self, theta: int) -> None:
        self.collected[theta] = False
        self.saved[theta] = 0.0
        self.reset_flag[theta] = False

    def shared(self, theta: int) -> dict[int, float]:
        return {int(j): float(self.saved[theta, j]) for j in np.flatnonzero(self.collected[theta])}


@dataclass
class AgentState:
    local: np.ndarray
    actual: np.ndarray
    adht: AdhtState | None = None

    def copy(self) -> "AgentState":
        return AgentState(self.local.copy(), self.actual.copy(), None if self.adht is None else self.adht.copy())


@dataclass(frozen=True)
class StepContext:
    sources: SourceSetIndex
    f: int
    rule: str
    t: int  # the step being taken goes from t to t + 1


def abu(acc: AdhtState, theta: int, neighbors_ab: Mapping[int, Sequence[float]],
        sources: SourceSetIndex, f: int, rule: str, t: int) -> bool:
    """Accumulate the current neighbors' beliefs on theta; True when case one may run.

    Mutates ``acc``.  A True return arms the reset flag so the next call
    starts a fresh accumulation.
    """
    if t == 0 or acc.reset_flag[theta]:
        acc.reset(theta)
    for j, belief in neighbors_ab.items():
        acc.collected[theta, j] = True
        acc.saved[theta, j] = belief[theta]
    ok = sources.min_overlap(theta, np.flatnonzero(acc.collected[theta]).tolist()) >= threshold(f, rule)
    if ok:
        acc.reset_flag[theta] = True
    return ok


def _finish(state: AgentState, new_local: np.ndarray, raw: np.ndarray) -> AgentState:
    return AgentState(new_local, normalize(raw), state.adht)


def sdht_step(state: AgentState, neighbors_ab: Mapping[int, Sequence[float]],
              likelihoods: Sequence[float], ctx: StepContext) -> tuple[AgentState, list[int]]:
    """One synchronous step for one agent; returns the new state and case-one hypotheses.

    ``neighbors_ab`` maps every member of the current neighbor set (self
    included) to the actual belief it shared at time t.
    """
    new_local = lb_update(state.local, likelihoods, t=ctx.t)
    m = new_local.size
    raw = np.empty(m)
    events = []
    members = list(neighbors_ab)
    for theta in range(m):
        if case_condition(theta, members, ctx.sources, ctx.f, ctx.rule):
            shared = {j: float(b[theta]) for j, b in neighbors_ab.items()}
            raw[theta] = fuse(theta, shared, float(new_local[theta]), ctx.sources, ctx.f, ctx.rule)
            events.append(theta)
        else:
            raw[theta] = min(state.actual[theta], new_local[theta])
    return _finish(state.copy(), new_local, raw), events


def adht_step(state: AgentState, neighbors_ab: Mapping[int, Sequence[float]],
              likelihoods: Sequence[float], ctx: StepContext) -> tuple[AgentState, list[int]]:
    """One asynchronous step: case one fuses over the accumulated beliefs."""
    new_local = lb_update(state.local, likelihoods, t=ctx.t)
    m = new_local.size
    nxt = state.copy()
    raw = np.empty(m)
    events = []
    for theta in range(m):
        if abu(nxt.adht, theta, neighbors_ab, ctx.sources, ctx.f, ctx.rule, ctx.t):
            shared = nxt.adht.shared(theta)
            raw[theta] = fuse(theta, shared, float(new_local[theta]), ctx.sources, ctx.f, ctx.rule)
            events.append(theta)
        else:
            raw[theta] = min(state.actual[theta], new_local[theta])
    return _finish(nxt, new_local, raw), events


# --- vectorized engine -----------------------------------------------------

def _row_normalize(raw: np.ndarray, rows: Sequence[int], what: str, t: int) -> np.ndarray:
    out = raw.copy()
    for i in rows:
        total = math.fsum(raw[i].tolist())
        if not total > 0:
            raise ZeroMassError(f"{what} of agent {i} has zero mass at step {t + 1}")
        out[i] = raw[i] / total
    return out


def _fuse_rows(values: np.ndarray, members: np.ndarray, own: np.ndarray, rows: np.ndarray,
               sources: SourceSetIndex, f: int, rule: str) -> np.ndarray:
    """Fused value per hypothesis for one agent.

    values/members: (m, N) shared values and membership; own: (m,) fresh LB;
    rows: (m,) hypotheses to fuse.  Entries outside ``rows`` are garbage.
    """
    m, n = values.shape
    out = np.zeros(m)
    if not rows.any():
        return out
    v = np.where(members, values, np.inf)
    asc = np.argsort(v, axis=1, kind="stable")  # stable: ties keep ascending id
    if rule == "min":
        kth = np.take_along_axis(v, asc[:, f:f + 1], axis=1)[:, 0]
        return np.minimum(kth, own)
    if not sources.factored:
        out = np.zeros(m)
        for theta in np.flatnonzero(rows):
            shared = {int(j): float(values[theta, j]) for j in np.flatnonzero(members[theta])}
            out[theta] = fuse(int(theta), shared, float(own[theta]), sources, f, rule)
        return out
    low = np.zeros((m, n), bool)
    np.put_along_axis(low, asc[:, :f], True, axis=1)
    cand = members & ~low
    d = np.where(cand, -values, np.inf)
    desc = np.argsort(d, axis=1, kind="stable")
    bitmat = sources._bit_matrix  # (N, K)
    cover = np.cumsum(bitmat[desc], axis=1).min(axis=2)  # (m, N): min_k coverage of each prefix
    n_cand = cand.sum(axis=1)
    ok = (cover >= f + 1) & (np.arange(n)[None, :] < n_cand[:, None])
    first = np.where(ok.any(axis=1), ok.argmax(axis=1), n)
    rank = np.empty_like(desc)
    np.put_along_axis(rank, desc, np.arange(n)[None, :].repeat(m, axis=0), axis=1)
    high = cand & (rank <= first[:, None])
    middle = cand & ~high
    bad_rows = rows & ((first >= n) | ~middle.any(axis=1))
    if bad_rows.any():
        raise ContractError(f"average rule partition failed for hypotheses {np.flatnonzero(bad_rows)[:5]}")
    acc = np.zeros(m)
    for j in range(n):
        acc = acc + np.where(middle[:, j], values[:, j], 0.0)
    mean = acc / np.maximum(middle.sum(axis=1), 1)
    return np.minimum(mean, own)


@dataclass
class BatchState:
    local: np.ndarray       # (N, m)
    actual: np.ndarray      # (N, m)
    collected: np.ndarray   # (N, m, N) bool, ADHT only
    saved: np.ndarray       # (N, m, N)
    reset_flag: np.ndarray  # (N, m)

    @classmethod
    def initial(cls, local: np.ndarray, actual: np.ndarray, algorithm: str) -> "BatchState":
        n, m = local.shape
        if algorithm == "adht":
            coll, saved, flag = np.zeros((n, m, n), bool), np.zeros((n, m, n)), np.zeros((n, m), bool)
        else:
            coll, saved, flag = np.zeros((n, 0, n), bool), np.zeros((n, 0, n)), np.zeros((n, 0), bool)
        return cls(local.astype(float), actual.astype(float), coll, saved, flag)

    def agent(self, i: int) -> AgentState:
        acc = None
        if self.collected.shape[1]:
            acc = AdhtState(self.collected[i].copy(), self.saved[i].copy(), self.reset_flag[i].copy())
        return AgentState(self.local[i].copy(), self.actual[i].copy(), acc)


def batch_step(state: BatchState, broadcasts: np.ndarray, nbr: np.ndarray, likelihoods: np.ndarray,
               active: Sequence[int], ctx: StepContext, algorithm: str) -> tuple[BatchState, np.ndarray]:
    """Advance every active agent from t to t+1.

    broadcasts: (N, m) beliefs shared at t; nbr: (N, N) neighbor masks at
    t+1; likelihoods: (N, m) for the readings at t+1 (rows of inactive
    agents are ignored).  Returns the new state and an (N, m) case-one mask.
    """
    n, m = state.local.shape
    f, rule, t = ctx.f, ctx.rule, ctx.t
    thr = threshold(f, rule)
    raw_lb = likelihoods * state.local
    new_local = state.local.copy()
    new_local[list(active)] = _row_normalize(raw_lb, active, "local belief", t)[list(active)]
    raw_ab = state.actual.copy()
    case_one = np.zeros((n, m), bool)
    coll, saved, flag = state.collected.copy(), state.saved.copy(), state.reset_flag.copy()
    shared_t = broadcasts.T  # (m, N)
    for i in active:
        own = new_local[i]
        if algorithm == "sdht":
            members = np.broadcast_to(nbr[i], (m, n))
            rows = ctx.sources.min_overlap_rows(members) >= thr
            values = shared_t
        else:
            clear = flag[i] | (t == 0)
            coll[i][clear] = False
            saved[i][clear] = 0.0
            flag[i][clear] = False
            cols = np.flatnonzero(nbr[i])
            coll[i][:, cols] = True
            saved[i][:, cols] = shared_t[:, cols]
            rows = ctx.sources.min_overlap_rows(coll[i]) >= thr
            flag[i] = rows
            members, values = coll[i], saved[i]
        fused = _fuse_rows(values, members, own, rows, ctx.sources, f, rule)
        raw_ab[i] = np.where(rows, fused, np.minimum(state.actual[i], own))
        case_one[i] = rows
    new_actual = state.actual.copy()
    new_actual[list(active)] = _row_normalize(raw_ab, active, "actual belief", t)[list(active)]
    return BatchState(new_local, new_actual, coll, saved, flag), case_one
