import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dhtsim.hypotheses import (HypothesisSet, InfiniteDivergenceError, SourceSetIndex, ZeroMassError, is_belief,
                               kl_divergence, normalize)

# Frozen with mpmath at 30 digits.
KL_QUARTER_VS_HALF = 0.130812035941136959
KL_HALF_VS_QUARTER = 0.143841036225890464  # ln(4/3) / 2


def probability_vectors(min_size=2, max_size=8):
    return st.lists(st.floats(0.001, 1.0), min_size=min_size, max_size=max_size).map(
        lambda w: np.array(w) / math.fsum(w))


def test_kl_point_mass_against_fair_coin_is_ln2():
    assert kl_divergence([1.0, 0.0], [0.5, 0.5]) == pytest.approx(math.log(2), abs=1e-15)


def test_kl_frozen_value():
    assert kl_divergence([0.25, 0.75], [0.5, 0.5]) == pytest.approx(KL_QUARTER_VS_HALF, rel=1e-14)


def test_kl_is_not_symmetric():
    assert kl_divergence([0.5, 0.5], [0.25, 0.75]) == pytest.approx(KL_HALF_VS_QUARTER, rel=1e-14)


def test_kl_rejects_missing_support():
    with pytest.raises(InfiniteDivergenceError):
        kl_divergence([0.5, 0.5], [1.0, 0.0])


def test_kl_shape_mismatch():
    with pytest.raises(ValueError, match="dimension"):
        kl_divergence([0.5, 0.5], [0.2, 0.3, 0.5])


@given(probability_vectors())
def test_kl_of_identical_distributions_is_zero(p):
    assert kl_divergence(p, p) == 0.0


@given(probability_vectors(3, 3), probability_vectors(3, 3))
def test_kl_is_nonnegative(p, q):
    assert kl_divergence(p, q) >= 0.0


def test_normalize_uses_exact_total():
    raw = [Fraction(1, 10), Fraction(2, 10), Fraction(7, 10)]
    out = normalize([float(x) for x in raw])
    assert math.fsum(out.tolist()) == pytest.approx(1.0, abs=1e-15)


def test_normalize_zero_vector():
    with pytest.raises(ZeroMassError):
        normalize([0.0, 0.0])


def test_normalize_rejects_negative():
    with pytest.raises(ValueError):
        normalize([0.5, -0.1])


@given(st.lists(st.floats(0, 1e6), min_size=2, max_size=12).filter(lambda v: sum(v) > 0))
def test_normalize_yields_beliefs(raw):
    assert is_belief(normalize(raw))


def test_bit_product_order_and_index():
    hyps = HypothesisSet.bit_product(3)
    assert hyps.count == 8
    assert hyps.labels[0] == (0, 0, 0) and hyps.labels[-1] == (1, 1, 1)
    assert hyps.index((1, 0, 1)) == 5
    assert hyps.bits.shape == (8, 3)


def test_explicit_set():
    hyps = HypothesisSet.explicit([(1, 0), (1, 1)])
    assert not hyps.product
    assert hyps.index((1, 1)) == 1
    with pytest.raises(KeyError):
        hyps.index((0, 0))


def test_explicit_set_rejects_duplicates():
    with pytest.raises(ValueError):
        HypothesisSet.explicit([(1, 0), (1, 0)])


@given(st.lists(st.sets(st.integers(0, 4)), min_size=3, max_size=3), st.sets(st.integers(0, 4)))
def test_factored_source_sets_match_their_dense_expansion(bit_sources, members):
    hyps = HypothesisSet.bit_product(3)
    factored = SourceSetIndex(5, hyps, bit_sources=[frozenset(s) for s in bit_sources])
    dense = SourceSetIndex(5, hyps, pairs=factored.as_pairs())
    for theta in range(hyps.count):
        assert factored.min_overlap(theta, members) == dense.min_overlap(theta, members)
    mask = np.zeros((hyps.count, 5), bool)
    mask[:, list(members)] = True
    assert factored.min_overlap_rows(mask[:1]).tolist() == [factored.min_overlap(0, members)]
    assert dense.min_overlap_rows(mask).tolist() == [dense.min_overlap(t, members) for t in range(hyps.count)]


def test_source_pair_is_union_over_differing_bits():
    hyps = HypothesisSet.bit_product(3)
    idx = SourceSetIndex(4, hyps, bit_sources=[frozenset({1}), frozenset({2, 3}), frozenset({0})])
    assert idx.pair(hyps.index((1, 1, 1)), hyps.index((0, 1, 0))) == {0, 1}
    with pytest.raises(ValueError):
        idx.pair(2, 2)
