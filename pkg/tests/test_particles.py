import math

import numpy as np
import pytest

from csbp_genealogy.errors import ContractError
from csbp_genealogy.fixtures import atom1, feller2_independent, stable
from csbp_genealogy.laplace import solve_u
from csbp_genealogy.mechanism import BranchingMechanism
from csbp_genealogy.particles import (_same_family_indicator, estimate_mrca, feller_family_sizes,
                                      mass_samples, simulate)


def test_no_branching_is_static():
    m = BranchingMechanism([[0.0]], [0.0])
    term = simulate(m, [1.0], 5.0, 50, seed=1)
    assert len(term.types) == 50
    np.testing.assert_array_equal(np.sort(term.roots), np.arange(50))


def test_genealogy_and_snapshots(feller_mech):
    term = simulate(feller_mech, [1.0], 1.0, 40, seed=4, mesh=[0.5])
    assert np.all((term.roots >= 0) & (term.roots < 40))
    snap = term.snapshots[0.5]
    assert snap.shape == term.roots.shape
    # particles sharing an ancestor at 0.5 share a root
    for a in np.unique(snap):
        assert len(set(term.roots[snap == a])) == 1


def test_critical_mass_is_martingale(feller_mech):
    Z = mass_samples(feller_mech, [1.0], 1.0, 200, 50000, seed=2)[:, 0]
    assert Z.mean() == pytest.approx(1.0, abs=3 * Z.std() / math.sqrt(Z.size))


def test_event_simulator_mass_with_atoms():
    m = atom1()  # the compensator keeps the mean mass constant
    Z = mass_samples(m, [1.0], 0.5, 40, 300, seed=5)[:, 0]
    assert Z.mean() == pytest.approx(1.0, abs=3.5 * Z.std() / math.sqrt(Z.size))


def test_extinction_matches_large_lambda_limit(feller_mech):
    Z = mass_samples(feller_mech, [1.0], 1.0, 200, 100000, seed=6)[:, 0]
    u_big = solve_u(feller_mech, 1.0, [1e4]).value[0]
    p = math.exp(-u_big)
    assert (Z == 0).mean() == pytest.approx(p, abs=3 * math.sqrt(p * (1 - p) / Z.size) + 2e-3)


def test_family_sampler_matches_event_simulator(feller_mech):
    rng = np.random.default_rng(0)
    fam = feller_family_sizes(0.5, 1.0, 1.0, 20, rng, 4000).sum(axis=1)
    ev = np.array([len(simulate(feller_mech, [1.0], 1.0, 20, seed=s).types) for s in range(800)])
    assert fam.mean() == pytest.approx(ev.mean(), abs=3 * math.hypot(fam.std() / 63, ev.std() / 28))
    assert (fam == 0).mean() == pytest.approx((ev == 0).mean(), abs=0.05)


def test_same_family_indicator():
    rng = np.random.default_rng(1)
    sizes = np.array([[3, 0], [1, 1], [0, 0], [2, 0]])
    out = _same_family_indicator(sizes, 2, rng)
    assert out.tolist() == [True, False, False, True]


def test_mrca_estimate_consistent_with_closed_form(feller_mech):
    est = estimate_mrca(feller_mech, [1.0], 1.0, 2, (50, 100, 200), 30000, seed=8)
    exact = 1 - 3 * math.exp(-2)
    row = est.rows[-1]
    assert abs(row.estimate - exact) <= 3 * row.stderr + est.allowance(row.n) + 0.005


def test_mrca_small_time(feller_mech):
    est = estimate_mrca(feller_mech, [1.0], 1e-3, 2, (100,), 5000, seed=1)
    assert est.rows[0].estimate < 0.01


def test_cross_type_mrca_is_zero():
    est = estimate_mrca(feller2_independent(), [1.0, 1.0], 0.5, (1, 1), (10,), 50, seed=3)
    assert est.rows[0].estimate == 0.0


def test_unsupported_mechanisms():
    with pytest.raises(ContractError):
        simulate(stable(1.5), [1.0], 1.0, 10, seed=0)
    with pytest.raises(ContractError):
        estimate_mrca(atom1(), [1.0], 1.0, 2, (10,), 10, seed=0, method="families")


def test_reproducible(feller_mech):
    a = estimate_mrca(feller_mech, [1.0], 1.0, 2, (50,), 2000, seed=5)
    b = estimate_mrca(feller_mech, [1.0], 1.0, 2, (50,), 2000, seed=5)
    assert a == b
