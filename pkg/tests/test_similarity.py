import math

import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from adaptvm import similarity as sim

counts = st.integers(0, 10**6)


def vec_pair(min_size=1, max_size=12):
    return st.integers(min_size, max_size).flatmap(
        lambda n: st.tuples(st.lists(counts, min_size=n, max_size=n), st.lists(counts, min_size=n, max_size=n)))


# Values computed by hand from the definitions (angular term dot/(|a||b|+1),
# magnitude term RMS difference) and frozen.
@pytest.mark.parametrize("a, b, params, expected", [
    ([0, 0, 100], [100, 100, 100], sim.SimilarityParams(), 0.9242360934834233),
    ([1, 1000], [1000, 1000], sim.SimilarityParams(), 0.7078130335619098),
    ([10, 0, 10], [0, 10, 10], sim.SimilarityParams(), 0.999999999007432),
    ([3, 4], [4, 3], sim.SimilarityParams(c=1, k=2), 0.9513753416285725),
])
def test_frozen_values(a, b, params, expected):
    assert sim.similarity(a, b, params) == pytest.approx(expected, abs=1e-12)


def test_terms():
    assert sim.alpha([3, 4], [4, 3]) == pytest.approx(24 / 26)
    assert sim.beta([3, 4], [4, 3]) == pytest.approx(1.0)
    assert sim.alpha([0, 0], [0, 0]) == 0.0
    assert sim.beta([], []) == 0.0


def test_pad_appends_shared_maximum():
    assert sim.pad([1, 5], [3, 2]) == ([1, 5, 5], [3, 2, 5])
    assert sim.pad([], []) == ([0], [0])


def test_dimension_mismatch_rejected():
    with pytest.raises(ValueError):
        sim.similarity([1, 2], [1])


@pytest.mark.parametrize("kwargs", [{"c": 0}, {"k": 3}, {"k": 0}, {"reopt_threshold": 1.0}, {"stable_epsilon": 0}])
def test_bad_params_rejected(kwargs):
    with pytest.raises(ValueError):
        sim.SimilarityParams(**kwargs)


def test_verdicts():
    assert sim.is_stable(1.0) and not sim.is_stable(0.999)
    assert sim.needs_reoptimization(0.94) and not sim.needs_reoptimization(0.95)


def test_undamped_cosine_is_undefined_on_zero_vectors():
    with pytest.raises(ZeroDivisionError):
        sim._cosine([0, 0], [0, 0])
    assert sim.similarity([0, 0], [0, 0]) == 1.0
    assert sim._angle([1, 0], [0, 1]) == pytest.approx(math.pi / 2)


@given(vec_pair())
def test_bounded_and_symmetric(pair):
    a, b = pair
    s = sim.similarity(a, b)
    assert 0.0 <= s <= 1.0
    assert s == sim.similarity(b, a)


@given(st.lists(counts, min_size=1, max_size=12))
def test_identity_is_exactly_one(a):
    assert sim.similarity(a, a) == 1.0
    assert sim.padded_similarity(a, a) == 1.0


@given(vec_pair(), st.floats(1, 10**4), st.sampled_from([2, 4, 8, 16]))
def test_in_the_unit_interval_for_any_params(pair, c, k):
    a, b = pair
    s = sim.similarity(a, b, sim.SimilarityParams(c=c, k=k))
    assert 0.0 <= s <= 1.0


@given(st.floats(0, 1), st.floats(0, 10**4), st.floats(0, 10**4))
def test_combine_non_increasing_in_magnitude(al, b1, b2):
    lo, hi = sorted((b1, b2))
    assert sim.combine(al, hi) <= sim.combine(al, lo) + 1e-12


@given(st.floats(0, 1), st.floats(0, 10**4))
def test_combine_bounded_below_by_angular_term(al, bt):
    assert al - 1e-12 <= sim.combine(al, bt) <= 1.0


@given(st.integers(1, 10**6), st.integers(1, 10**6))
def test_one_dimensional_positive_pairs_are_exactly_one(x, y):
    assert sim.similarity([x], [y]) == 1.0


@given(st.integers(1, 10**4), st.integers(2, 50))
def test_padding_detects_large_scalar_change(x, factor):
    big = x * factor
    assume(big - x > 300)  # well beyond c = 100
    assert sim.needs_reoptimization(sim.padded_similarity([x], [big]))
