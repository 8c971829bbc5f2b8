"""Exact discrete Poissonization on small Galton–Watson populations.

Every genealogical outcome of a small multitype Galton–Watson model is
enumerated with its exact probability.  Individuals are named by their
ancestral path ``(root, child, grandchild, ...)``, so two individuals share an
ancestor at generation ``g`` exactly when their paths agree on the first
``g + 1`` entries.

The identity checked here says that a uniform ordered ``k``-sample without
replacement has the same law as a Bernoulli ``p``-sample conditioned on size
``k`` and mixed over ``p`` with ``pi-bar^k(dp) = prod_i k_i dp_i / p_i`` on
``[0, 1)`` (point mass at 0 when ``k_i = 0``).
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError, SizeCapError
from .multiindex import as_multi_index

DEFAULT_CAP = 10 ** 6
EXACT_LIMIT = 10 ** 4


@dataclass(frozen=True)
class DiscretePopulation:
    """Members per type; each member is a path tuple."""

    members: tuple  # tuple over types of tuples of member ids

    @property
    def d(self) -> int:
        return len(self.members)

    @property
    def census(self) -> tuple:
        return tuple(len(m) for m in self.members)

    @classmethod
    def of_sizes(cls, sizes: Sequence[int]) -> "DiscretePopulation":
        return cls(tuple(tuple((i, j) for j in range(n)) for i, n in enumerate(sizes)))


@dataclass(frozen=True)
class GWModel:
    """Offspring laws: ``offspring[i]`` is a list of ``(probability, census)``."""

    offspring: tuple
    generations: int
    initial: tuple

    def __post_init__(self):
        d = len(self.offspring)
        law = tuple(tuple((Fraction(p), tuple(int(v) for v in c)) for p, c in row) for row in self.offspring)
        object.__setattr__(self, "offspring", law)
        object.__setattr__(self, "initial", as_multi_index(self.initial, d))
        for i, row in enumerate(law):
            if sum(p for p, _ in row) != 1:
                raise ContractError(f"offspring law of type {i} does not sum to 1")
            for p, c in row:
                if p < 0 or len(c) != d or any(v < 0 for v in c):
                    raise ContractError(f"bad offspring entry {p}, {c} for type {i}")
        if self.generations < 0:
            raise ContractError("generations must be non-negative")

    @property
    def d(self) -> int:
        return len(self.offspring)

    def outcome_bound(self) -> int:
        """Upper bound on the number of genealogical outcomes."""
        sizes = list(self.initial)
        bound = 1
        for _ in range(self.generations):
            nxt = [0] * self.d
            for i, n in enumerate(sizes):
                bound *= len(self.offspring[i]) ** n
                for j in range(self.d):
                    nxt[j] += n * max(c[j] for _, c in self.offspring[i])
            sizes = nxt
            if bound > 10 ** 18:
                break
        return bound

    def mean_matrix(self) -> np.ndarray:
        return np.array([[float(sum(p * c[j] for p, c in row)) for j in range(self.d)]
                         for row in self.offspring])

    @classmethod
    def from_json(cls, doc) -> "GWModel":
        if isinstance(doc, str):
            doc = json.loads(doc)
        unknown = set(doc) - {"offspring", "generations", "initial"}
        if unknown:
            raise ContractError(f"unknown GW model keys: {sorted(unknown)}")
        law = tuple(tuple((Fraction(str(e["p"])), tuple(e["children"])) for e in row)
                    for row in doc["offspring"])
        return cls(law, int(doc["generations"]), tuple(doc["initial"]))


def enumerate_population_law(model: GWModel, *, cap: int = DEFAULT_CAP):
    """All genealogical outcomes as ``(probability, DiscretePopulation)`` pairs."""
    bound = model.outcome_bound()
    if bound > cap:
        raise SizeCapError(f"outcome bound {bound} exceeds cap {cap}", bound=bound, cap=cap)
    d = model.d
    gen = [((r,), i) for r, i in enumerate(i for i, n in enumerate(model.initial) for _ in range(n))]
    outcomes = [(Fraction(1), gen)]
    for _ in range(model.generations):
        nxt = []
        for prob, indiv in outcomes:
            choices = [model.offspring[t] for _, t in indiv]
            for combo in itertools.product(*choices):
                p = prob
                kids = []
                for (path, _), (q, census) in zip(indiv, combo):
                    p *= q
                    slot = 0
                    for j in range(d):
                        for _ in range(census[j]):
                            kids.append((path + (slot,), j))
                            slot += 1
                if p:
                    nxt.append((p, kids))
        outcomes = nxt
    out = []
    for prob, indiv in outcomes:
        members = tuple(tuple(path for path, t in indiv if t == i) for i in range(d))
        out.append((prob, DiscretePopulation(members)))
    return out


def census_law(outcomes) -> dict:
    law: dict = {}
    for p, pop in outcomes:
        law[pop.census] = law.get(pop.census, 0) + p
    return law


# -- events ------------------------------------------------------------------------
# An event is a predicate of (population, ordered sample); the sample is a tuple
# over types of tuples of member ids.
Event = Callable[[DiscretePopulation, tuple], bool]


def event_full(pop, sample) -> bool:
    return True


def event_first_member(i: int = 0) -> Event:
    """The first type-``i`` draw is the type's first-listed member."""
    def ev(pop, sample):
        return bool(sample[i]) and bool(pop.members[i]) and sample[i][0] == pop.members[i][0]
    return ev


def event_includes_member(i: int = 0) -> Event:
    """The type's first-listed member is somewhere in the sample."""
    def ev(pop, sample):
        return bool(pop.members[i]) and pop.members[i][0] in sample[i]
    return ev


def event_same_ancestor(g: int) -> Event:
    """All sampled individuals share their generation-``g`` ancestor."""
    def ev(pop, sample):
        paths = [p for row in sample for p in row]
        return len({p[:g + 1] for p in paths}) <= 1
    return ev


def event_from_name(name: str) -> Event:
    if name == "full":
        return event_full
    kind, _, arg = name.partition(":")
    if kind == "first-member":
        return event_first_member(int(arg or 0))
    if kind == "includes-member":
        return event_includes_member(int(arg or 0))
    if kind == "same-ancestor":
        return event_same_ancestor(int(arg or 0))
    raise ContractError(f"unknown discrete event {name!r}")


# -- the identity -------------------------------------------------------------------
def _ordered_samples(pop: DiscretePopulation, k):
    return itertools.product(*(itertools.permutations(m, ki) for m, ki in zip(pop.members, k)))


def _fraction_in_event(pop, k, event, exact):
    hits = total = 0
    for s in _ordered_samples(pop, k):
        total += 1
        hits += bool(event(pop, s))
    return Fraction(hits, total) if exact else hits / total


def _pbar_weight(N: int, k: int, exact: bool):
    """``int pi-bar^k(dp) p^k (1 - p)^(N - k)`` via the beta integral."""
    if k == 0:
        return Fraction(1) if exact else 1.0
    if exact:
        return Fraction(math.factorial(k) * math.factorial(N - k), math.factorial(N))
    return math.exp(math.lgamma(k + 1) + math.lgamma(N - k + 1) - math.lgamma(N + 1))


def _rhs_given_population(pop, k, event, exact):
    """``int pi-bar^k(dp) Q^p(A, S = k | pop)`` through Bernoulli subsets."""
    if any(n < ki for n, ki in zip(pop.census, k)):
        return Fraction(0) if exact else 0.0
    weight = Fraction(1) if exact else 1.0
    for n, ki in zip(pop.census, k):
        weight *= _pbar_weight(n, ki, exact)
    total = Fraction(0) if exact else 0.0
    per_type = [list(itertools.combinations(m, ki)) for m, ki in zip(pop.members, k)]
    for subsets in itertools.product(*per_type):
        # given the included set, labels are a uniform random ordering
        orders = list(itertools.product(*(itertools.permutations(s) for s in subsets)))
        hits = sum(bool(event(pop, o)) for o in orders)
        total += (Fraction(hits, len(orders)) if exact else hits / len(orders)) * weight
    return total


@dataclass(frozen=True)
class DiscreteCheck:
    event: str
    lhs: object
    rhs: object
    mode: str

    @property
    def gap(self) -> float:
        return float(abs(self.lhs - self.rhs))


def bernoulli_identity_check(outcomes, k, events: dict, *, mode: str | None = None) -> list[DiscreteCheck]:
    """Both sides of the discrete Poissonization identity for each event.

    ``outcomes`` is a list of ``(probability, DiscretePopulation)``; ``events``
    maps names to predicates.
    """
    if not outcomes:
        raise ContractError("no outcomes")
    k = as_multi_index(k, outcomes[0][1].d)
    if mode is None:
        mode = "exact" if len(outcomes) <= EXACT_LIMIT else "float"
    exact = mode == "exact"
    results = []
    for name, ev in events.items():
        lhs = Fraction(0) if exact else 0.0
        rhs = Fraction(0) if exact else 0.0
        for p, pop in outcomes:
            pw = p if exact else float(p)
            if all(n >= ki for n, ki in zip(pop.census, k)):
                lhs += pw * _fraction_in_event(pop, k, ev, exact)
            rhs += pw * _rhs_given_population(pop, k, ev, exact)
        results.append(DiscreteCheck(name, lhs, rhs, mode))
    return results


def conditional_law_check(pop: DiscretePopulation, k, event: Event) -> tuple:
    """``(Q^p(A | S = k), P^k(A))`` for one population; ``p`` cancels."""
    k = as_multi_index(k, pop.d)
    lhs = _fraction_in_event(pop, k, event, True)
    rhs = _rhs_given_population(pop, k, event, True)
    weight = Fraction(1)
    for n, ki in zip(pop.census, k):
        weight *= _pbar_weight(n, ki, True) * math.comb(n, ki)
    return rhs / weight, lhs


# -- sampling ---------------------------------------------------------------------
def sample_k(pop: DiscretePopulation, k, rng: np.random.Generator) -> tuple:
    """Uniform ordered sample without replacement; empty for a type with ``N_i < k_i``."""
    k = as_multi_index(k, pop.d)
    out = []
    for m, ki in zip(pop.members, k):
        if len(m) < ki:
            out.append(())
        else:
            idx = rng.permutation(len(m))[:ki]
            out.append(tuple(m[j] for j in idx))
    return tuple(out)


def sample_p(pop: DiscretePopulation, p, rng: np.random.Generator) -> tuple:
    """Bernoulli(``p_i``) inclusion, then uniformly permuted labels."""
    p = np.broadcast_to(np.asarray(p, dtype=float), (pop.d,))
    out = []
    for m, pi in zip(pop.members, p):
        keep = [x for x, u in zip(m, rng.random(len(m))) if u < pi]
        order = rng.permutation(len(keep))
        out.append(tuple(keep[j] for j in order))
    return tuple(out)


# -- shipped fixtures ----------------------------------------------------------------
def shipped_models() -> dict:
    h = Fraction(1, 2)
    return {
        "single-child": GWModel((((Fraction(1), (1,)),),), 2, (1,)),
        "split-or-die": GWModel((((h, (0,)), (h, (2,))),), 1, (1,)),
        "binary-3gen": GWModel((((Fraction(1, 4), (0,)), (Fraction(1, 4), (1,)), (h, (2,))),), 3, (1,)),
        "one-or-two-2roots": GWModel((((h, (1,)), (h, (2,))),), 2, (2,)),
        "two-type-flip": GWModel((
            ((h, (0, 1)), (Fraction(1, 3), (2, 0)), (Fraction(1, 6), (0, 0))),
            ((h, (1, 0)), (h, (1, 1))),
        ), 2, (1, 1)),
    }


def shipped_events(d: int) -> dict:
    ev = {"full": event_full, "first-member:0": event_first_member(0),
          "includes-member:0": event_includes_member(0),
          "same-ancestor:0": event_same_ancestor(0), "same-ancestor:1": event_same_ancestor(1)}
    if d > 1:
        ev["first-member:1"] = event_first_member(1)
    return ev
