"""Belief engine: oracles, contracts and the scalar/vectorized equivalence."""

import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from dhtsim.audit import ulp_distance
from dhtsim.beliefs import (AdhtState, AgentState, BatchState, ContractError, StepContext, abu, adht_step,
                            avg_fuse, batch_step, case_condition, fuse, lb_update, min_fuse, partition_lmh,
                            sdht_step, threshold)
from dhtsim.hypotheses import HypothesisSet, SourceSetIndex, ZeroMassError

from test_observation import CENTRE_R1_S1, EAST_R1_S1

# Posterior after one reading from a uniform prior, likelihoods CENTRE / EAST
# (mpmath, 30 digits).
BAYES_ONE_READING = (0.564778900226735944, 0.435221099773264056)

WORKED_VALUES = {0: 0.25, 1: 0.22, 2: 0.35, 3: 0.35, 4: 0.35, 5: 0.37}


def worked_sources():
    """Ten agents, two hypotheses, S(theta, theta') = {1, 2, 3, 4} both ways."""
    s = frozenset({1, 2, 3, 4})
    return SourceSetIndex(10, HypothesisSet(2), pairs={(0, 1): s, (1, 0): s})


def test_thresholds():
    assert threshold(1, "min") == 3 and threshold(1, "avg") == 4
    assert threshold(2, "min") == 5 and threshold(0, "avg") == 2
    with pytest.raises(ValueError):
        threshold(1, "median")


def test_bayes_oracle():
    got = lb_update([0.5, 0.5], [CENTRE_R1_S1, EAST_R1_S1])
    assert got == pytest.approx(BAYES_ONE_READING, rel=1e-14)


def test_bayes_rounded_example():
    got = lb_update([0.5, 0.5], [0.2207, 0.1])
    assert got == pytest.approx([0.6882, 0.3118], abs=5e-5)


def test_bayes_exact_fractions():
    # dyadic inputs keep every product and the sum exact: 0.375 : 0.125
    assert lb_update([0.5, 0.5], [0.75, 0.25]).tolist() == [0.75, 0.25]


def test_bayes_zero_evidence_is_diagnosed():
    with pytest.raises(ZeroMassError, match="agent 3, step 7"):
        lb_update([1.0, 0.0], [0.0, 0.4], agent=3, t=7)


def test_worked_partition():
    low, middle, high = partition_lmh(0, WORKED_VALUES, worked_sources(), f=1)
    assert low == {1}
    assert 5 in high and len(high) == 3 and high - {5} <= {2, 3, 4}
    assert middle == set(WORKED_VALUES) - low - high
    # ties at 0.35 go to the lower ids first
    assert high == {2, 3, 5} and middle == {0, 4}


def test_worked_average():
    assert avg_fuse({0, 2}, WORKED_VALUES, own_lb=1.0) == 0.3
    assert fuse(0, WORKED_VALUES, 1.0, worked_sources(), 1, "avg") == 0.3


def test_worked_case_condition():
    assert case_condition(0, WORKED_VALUES, worked_sources(), 1, "avg")
    assert not case_condition(0, {0, 1, 2, 5}, worked_sources(), 1, "avg")


def test_min_rule_drops_f_lowest():
    assert min_fuse(WORKED_VALUES, 1.0, 1) == 0.25
    assert min_fuse(WORKED_VALUES, 0.1, 1) == 0.1
    assert min_fuse(WORKED_VALUES, 1.0, 0) == 0.22


def test_contracts():
    with pytest.raises(ContractError):
        min_fuse({0: 0.5}, 1.0, 1)
    with pytest.raises(ContractError):
        avg_fuse(set(), WORKED_VALUES, 1.0)
    with pytest.raises(ContractError):
        partition_lmh(0, {0: 0.2, 1: 0.3}, worked_sources(), 1)


# --- resilience ---------------------------------------------------------------

@st.composite
def fusion_cases(draw):
    f = draw(st.integers(0, 2))
    n = draw(st.integers(2 * f + 2, 2 * f + 7))
    values = draw(st.lists(st.floats(0.01, 0.99), min_size=n, max_size=n))
    shared = dict(enumerate(values))
    own = draw(st.floats(0.01, 1.0))
    # bad agents either sit among the f lowest (pushed to 0) or at the very
    # top of the descending order (pushed to 1)
    n_low = draw(st.integers(0, f))
    n_top = draw(st.integers(0, f - n_low))
    return f, shared, own, n_low, n_top


def _extremes(shared, f, n_low, n_top):
    asc = sorted(shared, key=lambda j: (shared[j], j))
    desc = sorted(shared, key=lambda j: (-shared[j], j))
    out = dict(shared)
    for j in asc[:f][:n_low]:
        out[j] = 0.0
    for j in desc[:n_top]:
        out[j] = 1.0
    return out


@settings(max_examples=1000)
@given(fusion_cases())
def test_fusion_ignores_extremes_outside_the_kept_band(case):
    f, shared, own, n_low, n_top = case
    n = len(shared)
    hyps = HypothesisSet.bit_product(2)
    sources = SourceSetIndex(n, hyps, bit_sources=[frozenset(range(n))] * 2)
    attacked = _extremes(shared, f, n_low, n_top)
    assert min_fuse(attacked, own, f) == min_fuse(shared, own, f)
    assert fuse(0, attacked, own, sources, f, "avg") == fuse(0, shared, own, sources, f, "avg")


@given(fusion_cases())
def test_min_result_lies_between_good_values(case):
    f, shared, own, n_low, n_top = case
    attacked = _extremes(shared, f, n_low, n_top)
    honest = [v for j, v in attacked.items() if attacked[j] == shared[j]]
    out = min_fuse(attacked, 1.0, f)
    assert min(honest) <= out <= max(honest)


@given(fusion_cases())
def test_partition_is_a_partition(case):
    f, shared, _, _, _ = case
    n = len(shared)
    sources = SourceSetIndex(n, HypothesisSet.bit_product(2), bit_sources=[frozenset(range(n))] * 2)
    low, middle, high = partition_lmh(0, shared, sources, f)
    assert low | middle | high == set(shared)
    assert not (low & middle or low & high or middle & high)
    assert len(low) == f and len(high) >= f + 1 and middle
    assert max(shared[j] for j in low | middle) <= min(shared[j] for j in high) or f == 0 and not low
    if low:
        assert max(shared[j] for j in low) <= min(shared[j] for j in middle | high)


# --- scalar steps vs the vectorized engine ------------------------------------

@st.composite
def engine_cases(draw):
    n = draw(st.integers(3, 5))
    f = draw(st.integers(0, 1))
    rule = draw(st.sampled_from(["min", "avg"]))
    algorithm = draw(st.sampled_from(["sdht", "adht"]))
    hyps = HypothesisSet.bit_product(n)
    m = hyps.count
    bit_sources = [frozenset(draw(st.sets(st.integers(0, n - 1), min_size=n - 1))) for _ in range(n)]
    sources = SourceSetIndex(n, hyps, bit_sources=bit_sources)
    seed = draw(st.integers(0, 2 ** 32 - 1))
    steps = draw(st.integers(1, 4))
    return n, f, rule, algorithm, sources, m, seed, steps


@settings(max_examples=150)
@given(engine_cases())
def test_batch_step_is_bitwise_equal_to_scalar_steps(case):
    n, f, rule, algorithm, sources, m, seed, steps = case
    gen = np.random.Generator(np.random.Philox(key=seed))
    local = gen.dirichlet(np.ones(m), size=n)
    actual = gen.dirichlet(np.ones(m), size=n)
    batch = BatchState.initial(local, actual, algorithm)
    scalar = {i: batch.agent(i) for i in range(n)}
    if algorithm == "adht":
        for i in range(n):
            scalar[i].adht = AdhtState.empty(m, n)
    active = list(range(n))
    for t in range(steps):
        bcast = batch.actual.copy()
        nbr = gen.random((n, n)) < 0.7
        np.fill_diagonal(nbr, True)
        lik = gen.random((n, m)) + 0.01
        ctx = StepContext(sources, f, rule, t)
        try:
            batch, case_one = batch_step(batch, bcast, nbr, lik, active, ctx, algorithm)
        except ContractError:
            assume(False)
        step = adht_step if algorithm == "adht" else sdht_step
        for i in active:
            nbrs = {int(j): bcast[j] for j in np.flatnonzero(nbr[i])}
            scalar[i], events = step(scalar[i], nbrs, lik[i], ctx)
            assert scalar[i].local.tolist() == batch.local[i].tolist()
            assert scalar[i].actual.tolist() == batch.actual[i].tolist()
            assert sorted(events) == np.flatnonzero(case_one[i]).tolist()


# --- ABU accumulator ------------------------------------------------------------

def _chain_sources(n=4):
    hyps = HypothesisSet.bit_product(2)
    return SourceSetIndex(n, hyps, bit_sources=[frozenset(range(n))] * 2)


def test_abu_keeps_latest_value_and_resets_after_firing():
    src = _chain_sources()
    acc = AdhtState.empty(4, 4)
    b = lambda v: np.full(4, v)  # noqa: E731
    assert not abu(acc, 0, {0: b(0.1)}, src, 1, "min", t=0)
    assert not abu(acc, 0, {1: b(0.2)}, src, 1, "min", t=1)
    assert not abu(acc, 0, {1: b(0.3)}, src, 1, "min", t=2)
    assert acc.shared(0) == {0: 0.1, 1: 0.3}  # agent 1 overwritten by its newer belief
    assert abu(acc, 0, {2: b(0.4)}, src, 1, "min", t=3)  # three sources: 2f+1 reached
    assert acc.reset_flag[0]
    assert not abu(acc, 0, {3: b(0.5)}, src, 1, "min", t=4)  # fresh accumulation
    assert acc.shared(0) == {3: 0.5}


def test_abu_resets_at_time_zero():
    src = _chain_sources()
    acc = AdhtState.empty(4, 4)
    acc.collected[0, :3] = True
    assert not abu(acc, 0, {3: np.full(4, 0.2)}, src, 1, "min", t=0)
    assert acc.shared(0) == {3: 0.2}


@given(st.lists(st.sets(st.integers(0, 4), min_size=1), min_size=1, max_size=8), st.sampled_from(["min", "avg"]))
def test_sdht_condition_implies_adht_condition(nbr_seq, rule):
    """Per step: the accumulator always contains the current neighbor set."""
    n = 5
    src = SourceSetIndex(n, HypothesisSet.bit_product(2), bit_sources=[frozenset({0, 1, 2, 3}), frozenset({1, 2, 3, 4})])
    acc = AdhtState.empty(4, n)
    for t, nbrs in enumerate(nbr_seq):
        shared = {j: np.full(4, 0.25) for j in nbrs}
        sync = case_condition(1, nbrs, src, 1, rule)
        asyn = abu(acc, 1, shared, src, 1, rule, t)
        assert asyn or not sync


def test_sdht_step_case_two_uses_min_of_previous_and_local():
    src = _chain_sources(1)
    state = AgentState(np.array([0.25] * 4), np.array([0.4, 0.3, 0.2, 0.1]))
    nxt, events = sdht_step(state, {0: state.actual}, [1.0, 1.0, 1.0, 1.0], StepContext(src, 1, "min", 0))
    assert events == []
    raw = np.minimum([0.4, 0.3, 0.2, 0.1], 0.25)
    want = raw / math.fsum(raw)
    assert all(ulp_distance(a, b) <= 1 for a, b in zip(nxt.actual, want))
