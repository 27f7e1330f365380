import math

import pytest

from src.core.multi_index import MultiIndex, count_multi_indices, graded_multi_indices, multi_indices_of_degree


def test_from_multiset_counts_ids():
    alpha = MultiIndex.from_multiset([0, 0, 2], 3)
    assert alpha.exponents == (2, 0, 1)
    assert alpha.degree == 3
    assert alpha.factorial == 2
    assert alpha.to_multiset() == (0, 0, 2)
    assert str(alpha) == "0:2;2:1"


def test_negative_exponent_rejected():
    with pytest.raises(ValueError):
        MultiIndex((1, -1))


def test_binomial_and_dominance():
    alpha, gamma = MultiIndex((3, 2)), MultiIndex((1, 2))
    assert alpha.dominates(gamma)
    assert not gamma.dominates(alpha)
    assert alpha.binomial(gamma) == 3
    assert (alpha - gamma) + gamma == alpha


def test_sub_indices_enumerates_the_box():
    subs = list(MultiIndex((2, 1)).sub_indices())
    assert len(subs) == 6
    assert MultiIndex((0, 0)) in subs and MultiIndex((2, 1)) in subs


def test_sub_indices_order_and_edge_cases():
    subs = [s.exponents for s in MultiIndex((1, 0, 2)).sub_indices()]
    assert subs == [(0, 0, 0), (0, 0, 1), (0, 0, 2), (1, 0, 0), (1, 0, 1), (1, 0, 2)]
    assert list(MultiIndex(()).sub_indices()) == [MultiIndex(())]


def test_monomial():
    assert MultiIndex((2, 0, 1)).monomial([3.0, 7.0, -1.0]) == -9.0
    assert MultiIndex.zeros(2).monomial([5.0, 5.0]) == 1.0


@pytest.mark.parametrize("dim,D", [(1, 4), (3, 2), (4, 3)])
def test_graded_enumeration_size(dim, D):
    indices = graded_multi_indices(dim, D)
    assert len(indices) == count_multi_indices(dim, D) == math.comb(dim + D, D)
    assert indices[0] == MultiIndex.zeros(dim)
    assert [a.degree for a in indices] == sorted(a.degree for a in indices)


def test_indices_of_degree_are_distinct():
    indices = multi_indices_of_degree(3, 3)
    assert len(set(indices)) == len(indices) == 10
