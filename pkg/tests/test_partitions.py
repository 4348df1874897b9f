from math import log

import pytest
from hypothesis import given, strategies as st

from shrinkpart.bell import extended_bell
from shrinkpart.exceptions import CapacityError, DomainError
from shrinkpart.partitions import (adjusted_rand_index, binder_distance, canonicalize,
                                   check_permutation, enumerate_partitions, is_canonical,
                                   iter_partitions, parse_partition, vi_distance)

labels = st.lists(st.integers(min_value=-5, max_value=5), min_size=1, max_size=9)


@pytest.mark.parametrize("raw, expected", [
    ((2, 2, 1), (1, 1, 2)),
    ((1, 1, 2, 2), (1, 1, 2, 2)),
    ((3, 1, 3, 2), (1, 2, 1, 3)),
])
def test_canonicalize_examples(raw, expected):
    assert canonicalize(raw) == expected


def test_canonicalize_rejects_empty():
    with pytest.raises(DomainError):
        canonicalize([])


@given(labels)
def test_canonicalize_idempotent_and_relabel_invariant(raw):
    once = canonicalize(raw)
    assert is_canonical(once)
    assert canonicalize(once) == once
    shifted = [7 * v + 100 for v in raw]
    assert canonicalize(shifted) == once
    assert set(once) == set(range(1, max(once) + 1))


@pytest.mark.parametrize("n, count", [(1, 1), (3, 5), (4, 15)])
def test_enumeration_counts(n, count):
    parts = enumerate_partitions(n)
    assert len(parts) == count
    assert len(set(parts)) == count
    assert all(is_canonical(p) for p in parts)


def test_enumeration_matches_bell_numbers():
    for n in range(1, 9):
        assert len(enumerate_partitions(n)) == extended_bell(n, 0)


def test_enumeration_cap():
    with pytest.raises(CapacityError):
        next(iter_partitions(13))


def test_ari_examples():
    assert adjusted_rand_index((1, 1, 2, 2), (1, 1, 2, 2)) == 1.0
    assert adjusted_rand_index((1, 2, 3, 4), (1, 1, 1, 1)) == 0.0
    # contingency [[2,0,0],[0,1,1]]: index 1, row pairs 2, column pairs 1
    assert adjusted_rand_index((1, 1, 2, 2), (1, 1, 2, 3)) == pytest.approx(4 / 7, abs=1e-12)


def test_binder_examples():
    assert binder_distance((1, 1, 2, 2), (1, 1, 2, 2)) == 0
    assert binder_distance((1, 1, 2, 2), (1, 1, 1, 1)) == 4
    assert binder_distance((1, 2, 3), (1, 1, 1)) == 3


def test_vi_examples():
    assert vi_distance((1, 1, 2, 2), (1, 1, 2, 2)) == 0.0
    assert vi_distance((1, 1, 2, 2), (1, 1, 1, 1)) == pytest.approx(log(2), abs=1e-12)
    assert vi_distance((1, 2), (1, 1)) == pytest.approx(log(2), abs=1e-12)


def test_distances_are_metrics_on_five_items():
    parts = enumerate_partitions(5)
    for p in parts:
        for q in parts:
            for dist in (binder_distance, vi_distance):
                d = dist(p, q)
                assert d == pytest.approx(dist(q, p), abs=1e-12)
                assert (d < 1e-12) == (p == q)


@given(st.lists(st.integers(0, 3), min_size=2, max_size=8), st.data())
def test_measures_depend_only_on_classes(raw, data):
    other = data.draw(st.lists(st.integers(0, 3), min_size=len(raw), max_size=len(raw)))
    p, q = canonicalize(raw), canonicalize(other)
    raw_p = [v + 10 for v in raw]
    assert adjusted_rand_index(raw_p, other) == pytest.approx(adjusted_rand_index(p, q))
    assert binder_distance(raw_p, other) == binder_distance(p, q)
    assert vi_distance(raw_p, other) == pytest.approx(vi_distance(p, q), abs=1e-12)


def test_size_mismatch_rejected():
    with pytest.raises(DomainError):
        binder_distance((1, 1), (1, 1, 2))


def test_permutation_check():
    assert check_permutation([2, 0, 1], 3) == (2, 0, 1)
    with pytest.raises(DomainError):
        check_permutation([0, 0, 1], 3)


def test_parse_partition():
    assert parse_partition("2,2,1") == (1, 1, 2)
    with pytest.raises(DomainError):
        parse_partition("1,a")
