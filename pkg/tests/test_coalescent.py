import math

import numpy as np
import pytest

from csbp_genealogy.coalescent import (BetaDensity, RateTable, beta_coalescent_rates,
                                       bolthausen_sznitman_rates, first_event_frequencies, gap_halving_ok,
                                       kingman_rates, lambda_coalescent_rate, lambda_psi_rate, merger_rate,
                                       rate_data_from_mechanism, simulate_typed_coalescent,
                                       small_time_limit_integral, small_time_verify)
from csbp_genealogy.errors import ContractError, DomainError
from csbp_genealogy.fixtures import atom2, feller2, stable
from csbp_genealogy.mechanism import Atom, BranchingMechanism, JumpMeasure, NeveuMechanism


def test_feller_rates():
    m = BranchingMechanism([[0.0, 0.0], [0.3, 0.0]], [0.5, 0.25])
    assert merger_rate(m, [2.0, 4.0], (1, 1), (1, 0), 1) == pytest.approx(0.3 * 4 / 2)
    assert merger_rate(m, [2.0, 4.0], (2, 0), (2, 0), 0) == pytest.approx(2 * 0.5 / 2.0)


def test_single_atom_rate():
    m = BranchingMechanism([[0.0]], [0.0], [JumpMeasure((Atom(1.0, (1.0,)),))])
    assert merger_rate(m, [1.0], (3,), (3,), 0) == pytest.approx(1 / 8)


def test_identification_is_exact_for_atoms():
    m = atom2()
    x = [1.0, 2.0]
    data = rate_data_from_mechanism(m, x)
    for k, alpha, c in [((2, 1), (2, 0), 0), ((2, 2), (1, 1), 1), ((1, 2), (0, 1), 0), ((3, 1), (3, 1), 1)]:
        assert lambda_coalescent_rate(data, k, alpha, c) == pytest.approx(merger_rate(m, x, k, alpha, c), rel=1e-14)


def test_bolthausen_sznitman_and_kingman():
    bs = bolthausen_sznitman_rates()
    assert lambda_coalescent_rate(bs, (4,), (2,), 0) == pytest.approx(1 / 3, abs=1e-12)
    assert lambda_coalescent_rate(kingman_rates(0.5), (5,), (2,), 0) == pytest.approx(1.0)
    assert lambda_coalescent_rate(kingman_rates(0.5), (5,), (3,), 0) == 0.0


@pytest.mark.parametrize("x", [0.3, 1.0, 2.0, 7.5])
def test_neveu_rates_do_not_depend_on_x(x):
    m = NeveuMechanism()
    bs = bolthausen_sznitman_rates()
    for k in range(2, 6):
        for j in range(2, k + 1):
            assert merger_rate(m, [x], (k,), (j,), 0) == pytest.approx(
                lambda_coalescent_rate(bs, (k,), (j,), 0), abs=1e-10)
    assert lambda_psi_rate(m, x, 4, 2) == pytest.approx(1 / 3, abs=1e-10)


def test_stable_rates_scale_like_x_power():
    m = stable(1.5)
    r1 = merger_rate(m, [1.0], (4,), (3,), 0)
    r2 = merger_rate(m, [4.0], (4,), (3,), 0)
    assert r2 / r1 == pytest.approx(4.0 ** -0.5)
    assert merger_rate(m, [1.0], (4,), (3,), 0, method="quadrature") == pytest.approx(r1, rel=1e-9)


def test_beta_coalescent_normalisation():
    # Lambda = Beta(2-a, a) is a probability measure, so the k=2 pair rate is 1
    assert lambda_coalescent_rate(beta_coalescent_rates(1.3), (2,), (2,), 0) == pytest.approx(1.0)


def test_beta_density_moment():
    b = BetaDensity(-1.0, 1.0)
    assert b.moment(3, 5) == pytest.approx(b.moment_quadrature(3, 5), rel=1e-9)
    with pytest.raises(DomainError):
        b.moment(1, 3)


def test_contract_errors(feller_mech):
    with pytest.raises(ContractError):
        merger_rate(feller_mech, [1.0], (2,), (1,), 0)
    with pytest.raises(ContractError):
        merger_rate(feller_mech, [1.0], (2,), (3,), 0)
    with pytest.raises(DomainError):
        merger_rate(feller_mech, [0.0], (2,), (2,), 0)


def test_small_time_feller(feller_mech):
    rows = small_time_verify(feller_mech, [1.0], (2,), (2,), 0, [2e-3, 1e-3])
    for r in rows:
        assert r.ratio == pytest.approx(1.0, rel=1e-6)
        assert r.limit_integral == pytest.approx(r.limit_closed, rel=1e-9)
    assert gap_halving_ok(rows)


def test_small_time_two_type_feller():
    m = feller2()
    x = [1.0, 2.0]
    rows = small_time_verify(m, x, (1, 1), (1, 0), 1, [2e-3, 1e-3])
    assert rows[-1].limit_closed == pytest.approx(m.kappa[1, 0] * x[1] / x[0])
    assert rows[-1].relative_gap < 0.05
    assert gap_halving_ok(rows)


def test_limit_integral_matches_closed_form_with_atoms():
    m = atom2()
    for k, alpha, c in [((2, 1), (2, 0), 0), ((1, 2), (1, 2), 1)]:
        assert small_time_limit_integral(m, [1.0, 2.0], k, alpha, c) == pytest.approx(
            merger_rate(m, [1.0, 2.0], k, alpha, c), rel=1e-9)


def test_gap_halving_detects_stalls():
    from csbp_genealogy.coalescent import SmallTimeRow
    good = [SmallTimeRow(t, 1 + t, 1.0, 1.0) for t in (4e-3, 2e-3, 1e-3)]
    bad = [SmallTimeRow(t, 1.01, 1.0, 1.0) for t in (4e-3, 2e-3, 1e-3)]
    assert gap_halving_ok(good)
    assert not gap_halving_ok(bad)


def test_kingman_first_event_time():
    table = RateTable.from_data(kingman_rates(0.5))
    ev = simulate_typed_coalescent(table, (3,), 20000, seed=2, max_events=1)
    times = np.array([e.time for e in ev])
    se = times.std() / math.sqrt(times.size)
    assert times.mean() == pytest.approx(1 / (6 * 0.5), abs=3.5 * se)


def test_bs_first_event_law():
    table = RateTable.from_data(bolthausen_sznitman_rates())
    law = table.first_event_law((4,))
    denom = sum(math.comb(4, j) * math.gamma(j - 1) * math.gamma(5 - j) / math.gamma(4) for j in range(2, 5))
    assert law[((2,), 0)] == pytest.approx(6 * (1 / 3) / denom)
    runs = 20000
    freq = first_event_frequencies(simulate_typed_coalescent(table, (4,), runs, seed=9, max_events=1), runs)
    for key, p in law.items():
        assert abs(freq.get(key, 0.0) - p) <= 3.5 * math.sqrt(p * (1 - p) / runs)


def test_simulator_runs_to_absorption_and_is_reproducible():
    table = RateTable.from_mechanism(atom2(), [1.0, 2.0])
    a = simulate_typed_coalescent(table, (2, 1), 50, seed=3)
    b = simulate_typed_coalescent(table, (2, 1), 50, seed=3)
    assert a == b
    last = {}
    for e in a:
        assert e.blocks_after <= e.blocks_before
        last[e.run] = e
    assert all(e.blocks_after == 1 for e in last.values())
    assert simulate_typed_coalescent(table, (1, 0), 5, seed=1) == []
