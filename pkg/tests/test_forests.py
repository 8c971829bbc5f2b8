import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from csbp_genealogy.errors import ContractError, SizeCapError
from csbp_genealogy.fixtures import atom2, feller2
from csbp_genealogy.forests import (LabeledForest, MarkedProcessLaw, all_energies, bell,
                                    composite_derivative, count_forests, enumerate_forests,
                                    forest_energy, forest_law_Q, partition_function, q_prefactor,
                                    set_partitions, single_event_forest, stirling2, trivial_forest)
from csbp_genealogy.laplace import SolutionProvider


def brute_partitions(n):
    """All set partitions of range(n) by assigning block labels and canonicalising."""
    seen = set()
    for labels in itertools.product(range(n), repeat=n):
        blocks = {}
        for i, b in enumerate(labels):
            blocks.setdefault(b, []).append(i)
        seen.add(tuple(sorted(tuple(v) for v in blocks.values())))
    return seen


@pytest.mark.parametrize("n", range(1, 7))
def test_set_partitions_against_brute_force(n):
    ours = [tuple(sorted(p)) for p in set_partitions(n)]
    assert len(ours) == len(set(ours)) == bell(n)
    if n <= 5:
        assert set(ours) == brute_partitions(n)


def test_stirling_and_bell():
    assert [stirling2(4, j) for j in range(5)] == [0, 1, 7, 6, 1]
    assert [bell(n) for n in range(7)] == [1, 1, 2, 5, 15, 52, 203]


@pytest.mark.parametrize("k,m,d,expected", [
    ((3,), 1, 1, 5), ((2,), 2, 1, 3), ((1, 0), 1, 2, 2), ((4,), 3, 1, None),
    ((2, 1), 2, 2, None), ((1, 1, 1), 2, 3, None), ((2, 2), 1, 2, None),
])
def test_enumeration_count_and_uniqueness(k, m, d, expected):
    forests = list(enumerate_forests(k, m, d))
    texts = [H.to_text() for H in forests]
    assert len(set(texts)) == len(forests) == count_forests(k, m, d)
    if expected is not None:
        assert len(forests) == expected
    for H in forests:
        assert H.validate()


def test_canonical_order_is_stable():
    a = [H.to_text() for H in enumerate_forests((2, 1), 2)]
    b = [H.to_text() for H in enumerate_forests((2, 1), 2)]
    assert a == b


def test_text_roundtrip():
    for H in enumerate_forests((2, 1), 2):
        assert LabeledForest.from_text(H.to_text(), 2) == H
    with pytest.raises(ContractError):
        LabeledForest.from_text("garbage", 1)


def test_cap():
    with pytest.raises(SizeCapError) as err:
        list(enumerate_forests((4, 0, 0), 3, 3, cap=100))
    assert err.value.bound == count_forests((4, 0, 0), 3, 3)


def test_stats_and_single_event():
    H = single_event_forest((2, 1), 1, (2, 0))
    st_ = H.stats()
    assert st_.rootdegree == (0, 2)
    assert sorted(st_.outdegrees[0]) == [(0, 1), (2, 0)]
    with pytest.raises(ContractError):
        single_event_forest((2,), 0, (1,))


def test_feller_energies(feller_provider):
    forests = list(enumerate_forests((2,), 1))
    merge = [H for H in forests if len(H.blocks[0]) == 1][0]
    sticks = trivial_forest((2,), 1)
    assert forest_energy(merge, [0, 1], [1.0], [1.0], feller_provider) == pytest.approx(8 / 27, abs=1e-12)
    assert forest_energy(sticks, [0, 1], [1.0], [1.0], feller_provider) == pytest.approx(16 / 81, abs=1e-12)
    r = partition_function((2,), [0, 1], [1.0], [1.0], feller_provider)
    assert r.enumerated == pytest.approx(40 / 81, abs=1e-12)
    assert r.relative_gap < 1e-10
    total_q = sum(forest_law_Q(H, [0, 1], [1.0], [1.0], feller_provider) for H in forests)
    assert total_q == pytest.approx(0.5 * math.exp(-2 / 3) * 40 / 81, abs=1e-12)


def test_trivial_forest_energy_small_time(feller_provider):
    e = forest_energy(trivial_forest((3,), 1), [0, 1e-6], [1.3], [0.8], feller_provider)
    assert e == pytest.approx(1.3 ** 3, rel=1e-5)


def test_single_leaf_is_mesh_invariant(atom2_mech):
    prov = SolutionProvider(atom2_mech, 2)
    vals = [partition_function((0, 1), mesh, [1.0, 2.0], [0.5, 0.7], prov).enumerated
            for mesh in ([0, 1], [0, 0.5, 1], [0, 0.2, 0.6, 1])]
    assert max(vals) - min(vals) < 1e-10 * max(vals)


@pytest.mark.parametrize("k", [(2, 1), (1, 2), (3, 0)])
def test_partition_identity_atom_fixture(atom2_mech, k):
    prov = SolutionProvider(atom2_mech, 3)
    for mesh in ([0, 1], [0, 0.4, 1], [0, 0.2, 0.5, 1]):
        r = partition_function(k, mesh, [1.0, 2.0], [0.7, 1.2], prov)
        assert r.relative_gap < 1e-8


def test_energies_nonnegative_and_tensor_path_matches(atom2_mech):
    prov = SolutionProvider(atom2_mech, 3)
    mesh = [0, 0.3, 1]
    x, lam = [1.0, 2.0], [0.7, 1.2]
    e = all_energies((2, 1), mesh, x, lam, prov)
    assert np.all(e >= 0)
    direct = [forest_energy(H, mesh, x, lam, prov) for H in enumerate_forests((2, 1), 2)]
    np.testing.assert_allclose(e, direct, rtol=1e-12, atol=1e-16)


def test_zero_lambda_gives_zero_q(feller_provider):
    H = trivial_forest((2,), 1)
    assert forest_law_Q(H, [0, 1], [1.0], [0.0], feller_provider) == 0.0


def test_zero_root_mass_kills_forest(feller2_mech):
    prov = SolutionProvider(feller2_mech, 2)
    H = single_event_forest((1, 1), 1, (1, 1))  # root of type 1
    assert forest_energy(H, [0, 1], [1.0, 0.0], [0.5, 0.5], prov) == 0.0


def test_marked_process(feller_provider):
    law = MarkedProcessLaw(feller_provider, [1.0], [1.0], 1.0)
    assert law.root_probability([0]) == pytest.approx(math.exp(-2 / 3))
    assert law.transition(0.3, 0.3, 0, (1,)) == 1.0
    assert law.transition(0.0, 1.0, 0, (2,)) == pytest.approx(2 / 9, abs=1e-12)
    assert law.row_sum(0.0, 1.0, 0, 4) == pytest.approx(1.0, abs=0.05)
    assert law.row_sum(0.2, 0.7, 0, 4) <= 1 + 1e-12


@settings(max_examples=10, deadline=None)
@given(st.floats(0.1, 3.0), st.floats(0.1, 3.0))
def test_partition_identity_property(x, lam):
    prov = SolutionProvider(feller2(), 3)
    r = partition_function((2, 1), [0, 0.5, 1], [x, 1.0], [lam, 0.5], prov)
    assert r.relative_gap < 1e-8
