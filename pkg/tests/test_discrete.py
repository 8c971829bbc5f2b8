from fractions import Fraction

import numpy as np
import pytest

from csbp_genealogy.discrete import (DiscretePopulation, GWModel, bernoulli_identity_check, census_law,
                                     conditional_law_check, enumerate_population_law, event_first_member,
                                     event_from_name, event_full, event_same_ancestor, sample_k, sample_p,
                                     shipped_events, shipped_models)
from csbp_genealogy.errors import ContractError, SizeCapError

h = Fraction(1, 2)


def test_single_child_model():
    out = enumerate_population_law(shipped_models()["single-child"])
    assert len(out) == 1 and out[0][0] == 1


def test_split_or_die():
    out = enumerate_population_law(shipped_models()["split-or-die"])
    assert sorted((p, pop.census) for p, pop in out) == [(h, (0,)), (h, (2,))]


def test_two_type_census_matches_mean_matrix():
    model = shipped_models()["two-type-flip"]
    law = census_law(enumerate_population_law(model))
    assert sum(law.values()) == 1
    mean = np.array([sum(float(p) * c[j] for c, p in law.items()) for j in range(2)])
    M = model.mean_matrix()
    np.testing.assert_allclose(mean, np.array(model.initial) @ M @ M)


def test_fixed_population_examples():
    pop = DiscretePopulation.of_sizes([3])
    (chk,) = bernoulli_identity_check([(Fraction(1), pop)], (2,), {"full": event_full})
    assert chk.lhs == chk.rhs == 1
    pop4 = DiscretePopulation.of_sizes([4])
    (chk,) = bernoulli_identity_check([(Fraction(1), pop4)], (1,), {"first": event_first_member(0)})
    assert chk.lhs == chk.rhs == Fraction(1, 4)


def test_empty_sample():
    outcomes = enumerate_population_law(shipped_models()["binary-3gen"])
    (chk,) = bernoulli_identity_check(outcomes, (0,), {"full": event_full})
    assert chk.lhs == chk.rhs == 1


@pytest.mark.parametrize("name", sorted(shipped_models()))
def test_identity_on_shipped_models(name):
    model = shipped_models()[name]
    outcomes = enumerate_population_law(model)
    ks = [(1,), (2,), (3,)] if model.d == 1 else [(1, 0), (1, 1), (2, 1)]
    for k in ks:
        for chk in bernoulli_identity_check(outcomes, k, shipped_events(model.d)):
            assert chk.mode == "exact"
            assert chk.lhs == chk.rhs, (name, k, chk.event)


def test_float_mode_agrees():
    outcomes = enumerate_population_law(shipped_models()["binary-3gen"])
    ev = {"same": event_same_ancestor(1)}
    exact = bernoulli_identity_check(outcomes, (2,), ev)[0]
    flt = bernoulli_identity_check(outcomes, (2,), ev, mode="float")[0]
    assert flt.gap < 1e-12
    assert float(exact.lhs) == pytest.approx(flt.lhs, abs=1e-14)


def test_conditional_law():
    pop = DiscretePopulation.of_sizes([5])
    q, pk = conditional_law_check(pop, (2,), event_first_member(0))
    assert q == pk == Fraction(1, 5)


def test_event_names():
    assert event_from_name("full") is event_full
    with pytest.raises(ContractError):
        event_from_name("bogus:1")


def test_model_validation_and_json():
    with pytest.raises(ContractError):
        GWModel((((h, (0,)),),), 1, (1,))
    doc = {"offspring": [[{"p": "1/2", "children": [0]}, {"p": "1/2", "children": [2]}]],
           "generations": 1, "initial": [1]}
    assert GWModel.from_json(doc) == shipped_models()["split-or-die"]
    with pytest.raises(ContractError):
        GWModel.from_json({**doc, "extra": 1})


def test_cap():
    with pytest.raises(SizeCapError):
        enumerate_population_law(shipped_models()["binary-3gen"], cap=10)


def test_samplers():
    rng = np.random.default_rng(0)
    pop = DiscretePopulation.of_sizes([4, 2])
    s = sample_k(pop, (2, 2), rng)
    assert len(s[0]) == 2 and sorted(s[1]) == sorted(pop.members[1])
    assert sample_k(pop, (5, 0), rng)[0] == ()
    full = sample_p(pop, 1.0, rng)
    assert sorted(full[0]) == sorted(pop.members[0])
    assert sample_p(pop, 0.0, rng) == ((), ())
    incl = np.mean([len(sample_p(pop, [0.3, 0.0], rng)[0]) for _ in range(20000)]) / 4
    assert incl == pytest.approx(0.3, abs=3 * np.sqrt(0.3 * 0.7 / 80000) + 1e-3)
