import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from csbp_genealogy.errors import ContractError
from csbp_genealogy.multiindex import (add, as_multi_index, leq, mi_factorial, mi_power, multi_indices,
                                       norm1, sub, sub_indices, succ, unit)


def test_basic_arithmetic():
    assert unit(1, 3) == (0, 1, 0)
    assert unit(0, 2, times=3) == (3, 0)
    assert norm1((2, 0, 3)) == 5
    assert mi_factorial((2, 3)) == 12
    assert add((1, 2), (0, 1)) == (1, 3)
    assert sub((1, 2), (0, 1)) == (1, 1)
    assert leq((0, 1), (1, 1)) and not leq((2, 0), (1, 1))


def test_power_convention_zero_to_zero():
    assert mi_power([0.0, 2.0], (0, 3)) == 8.0
    out = mi_power(np.array([[0.0, 2.0], [1.0, 0.0]]), (1, 0))
    np.testing.assert_array_equal(out, [0.0, 1.0])


def test_succ_is_positivity_on_the_support():
    assert succ((0.5, 1.0), (2, 1))
    assert succ((0.0, 1.0), (0, 1))
    assert not succ((0.0, 1.0), (2, 1))


def test_validation():
    with pytest.raises(ContractError):
        as_multi_index((1, -1))
    with pytest.raises(ContractError):
        as_multi_index((1, 2), d=3)


@pytest.mark.parametrize("d,D", [(1, 4), (2, 3), (3, 4)])
def test_multi_indices_graded_and_complete(d, D):
    idx = multi_indices(d, D)
    assert idx[0] == (0,) * d
    assert len(idx) == math.comb(d + D, d)
    assert [norm1(a) for a in idx] == sorted(norm1(a) for a in idx)
    assert len(set(idx)) == len(idx)


@given(st.lists(st.integers(0, 3), min_size=1, max_size=3))
def test_sub_indices_count(bound):
    n = math.prod(b + 1 for b in bound)
    assert len(sub_indices(bound, include_zero=True)) == n
    assert len(sub_indices(bound)) == n - 1
