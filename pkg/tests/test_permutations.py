from fractions import Fraction
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from limitforce.exceptions import InvalidArgumentError, UnsupportedSizeError
from limitforce.services.permutations import (
    Permutation,
    RootedPermutation,
    all_patterns,
    count_occurrences,
    induced_pattern,
    inversion_count,
    lehmer_rank,
    lehmer_rank_many,
    pattern_density,
    pattern_density_by_roots,
    points_to_patterns,
    rooted_pattern_indicator,
)

permutations_st = st.integers(min_value=1, max_value=8).flatmap(
    lambda n: st.permutations(list(range(1, n + 1)))
).map(Permutation)


def test_induced_pattern_examples():
    assert induced_pattern(Permutation.parse("7126354"), [3, 4, 6]) == Permutation.parse("132")
    assert induced_pattern(Permutation.parse("321"), [1, 3]) == Permutation.parse("21")


def test_induced_pattern_rejects_bad_indices():
    pi = Permutation.parse("321")
    with pytest.raises(InvalidArgumentError):
        induced_pattern(pi, [2, 1])
    with pytest.raises(InvalidArgumentError):
        induced_pattern(pi, [1, 4])
    with pytest.raises(InvalidArgumentError):
        induced_pattern(pi, [])


def test_pattern_density_examples():
    assert pattern_density(Permutation.parse("21"), Permutation.parse("21")) == 1
    assert pattern_density(Permutation.parse("12"), Permutation.parse("132")) == Fraction(2, 3)
    assert pattern_density(Permutation.parse("123"), Permutation.parse("21")) == 0


def test_pattern_density_size_cap():
    with pytest.raises(UnsupportedSizeError):
        pattern_density(Permutation.identity(3), Permutation.identity(65))


def test_rooted_pattern_indicator_examples():
    pi = Permutation.parse("12")
    assert rooted_pattern_indicator(RootedPermutation.parse("12'"), pi, 2, {1})
    assert not rooted_pattern_indicator(RootedPermutation.parse("21'"), pi, 2, {1})
    flag = RootedPermutation.parse("2,3',4,1")
    assert rooted_pattern_indicator(flag, Permutation.parse("2341"), 2, {1, 3, 4})


def test_rooted_pattern_indicator_rejects_root_among_others():
    with pytest.raises(InvalidArgumentError):
        rooted_pattern_indicator(RootedPermutation.parse("12'"), Permutation.parse("12"), 2, {2})


def test_all_patterns_lexicographic():
    assert all_patterns(1) == [Permutation((1,))]
    assert [str(p) for p in all_patterns(2)] == ["12", "21"]
    three = all_patterns(3)
    assert len(three) == 6
    assert str(three[0]) == "123" and str(three[-1]) == "321"
    assert [p.rank() for p in three] == list(range(6))


@pytest.mark.parametrize("k", [0, 10])
def test_all_patterns_cap(k):
    with pytest.raises(UnsupportedSizeError):
        all_patterns(k)


def test_serialization_formats():
    assert str(Permutation.parse("7126354")) == "7126354"
    long = Permutation(tuple(range(10, 0, -1)))
    assert str(long) == "10,9,8,7,6,5,4,3,2,1"
    assert Permutation.parse(str(long)) == long
    assert str(RootedPermutation.parse("23'41")) == "2,3',4,1"


def test_parse_rejects_non_bijection():
    with pytest.raises(InvalidArgumentError):
        Permutation.parse("1224")
    with pytest.raises(InvalidArgumentError):
        RootedPermutation.parse("1'2'")


@given(permutations_st, st.integers(min_value=1, max_value=4))
@settings(max_examples=60, deadline=None)
def test_densities_sum_to_one(pi, k):
    if k > pi.order:
        return
    assert sum(pattern_density(s, pi) for s in all_patterns(k)) == 1


@given(permutations_st)
@settings(max_examples=60, deadline=None)
def test_ascents_and_descents_complement(pi):
    if pi.order < 2:
        return
    total = pattern_density(Permutation.parse("12"), pi) + pattern_density(Permutation.parse("21"), pi)
    assert total == 1
    assert pattern_density(Permutation.parse("21"), pi) * comb(pi.order, 2) == inversion_count(pi)


@given(permutations_st, st.integers(min_value=1, max_value=3))
@settings(max_examples=40, deadline=None)
def test_density_by_roots_agrees(pi, k):
    if k > pi.order:
        return
    for sigma in all_patterns(k):
        assert pattern_density_by_roots(sigma, pi) == pattern_density(sigma, pi)


@given(permutations_st)
@settings(max_examples=30, deadline=None)
def test_full_index_set_is_identity(pi):
    assert induced_pattern(pi, range(1, pi.order + 1)) == pi


def test_count_occurrences_small():
    assert count_occurrences(Permutation.parse("12"), Permutation.parse("123")) == 3
    assert count_occurrences(Permutation.parse("21"), Permutation.parse("123")) == 0
    assert count_occurrences(Permutation.parse("132"), Permutation.parse("7126354")) == 9


def test_lehmer_rank_vectorised_matches_scalar():
    patterns = all_patterns(4)
    ranks = np.array([[v - 1 for v in p.mapping] for p in patterns])
    assert lehmer_rank_many(ranks).tolist() == [lehmer_rank(p.mapping) for p in patterns]


def test_points_to_patterns():
    points = np.array([[[0.1, 0.9], [0.5, 0.2], [0.3, 0.4]]])
    # x order: 0.1, 0.3, 0.5 -> y: 0.9, 0.4, 0.2 -> 321
    assert points_to_patterns(points).tolist() == [[2, 1, 0]]
