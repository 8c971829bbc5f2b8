"""Poissonization: mixing measures and the laws they produce.

A uniform ``k``-sample from a population is the ``pi^k``-mixture of Poisson
samples conditioned to have exactly ``k`` points.  This module evaluates that
mixture for ancestral-forest laws and runs Monte Carlo checks of the identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, NumericalError
from .forests import LabeledForest, _check_mesh, forest_energy_batch, generation_tables, single_event_forest
from .jets import jet_space
from .laplace import SolutionProvider
from .mechanism import BranchingMechanism
from .multiindex import as_multi_index, mi_factorial, mi_power, norm1
from .quadrature import QuadResult, QuadratureSpec, gauss_legendre_pi_k, integrate_pi_k

__all__ = [
    "gamma_identity_check", "gamma_factorial_check", "integrate_pi_k", "forest_law_P",
    "sample_survival_probability", "mrca_probability", "MixtureMeasure", "normalized_mixture",
    "EVENTS", "mixture_identity_mc", "MixtureCheck", "mixture_quadrature_bias",
]


def gamma_identity_check(j: int, z: float, spec: QuadratureSpec | None = None) -> float:
    """``int pi^j(dlam) (lam z)^j / j! e^{-lam z}``; equals 1."""
    if j < 0 or z <= 0:
        raise ContractError("need j >= 0 and z > 0")
    spec = spec or QuadratureSpec(scale=max(j, 1) / z)
    f = lambda lam: (lam[:, 0] * z) ** j / math.factorial(j) * np.exp(-lam[:, 0] * z)
    return integrate_pi_k((j,), f, spec).value


def gamma_factorial_check(k, y, spec: QuadratureSpec | None = None) -> tuple[float, float]:
    """``(int pi^k lam^k e^{-<y, lam>}, k! / y^k)``."""
    k = as_multi_index(k)
    y = np.asarray(y, dtype=float)
    spec = spec or QuadratureSpec(scale=tuple(np.maximum(k, 1) / y))
    res = integrate_pi_k(k, lambda lam: mi_power(lam, k) * np.exp(-(lam @ y)), spec)
    return res.value, mi_factorial(k) / float(mi_power(y, k))


def default_spec(k, x, mech=None) -> QuadratureSpec:
    """Put the quadrature scale near the bulk of ``lam^k e^{-<x, lam>}``.

    Stable-like jumps leave a tail of order ``lam^{1 - alpha}``, so the map gets
    the power ``2 / (alpha - 1)`` to smooth it out.
    """
    x = np.broadcast_to(np.asarray(x, dtype=float), (len(k),))
    scale = tuple(max(ki, 1) / xi if xi > 0 else 1.0 for ki, xi in zip(k, x))
    alphas = [m.density1d.alpha for m in getattr(mech, "nu", ())
              if getattr(m.density1d, "alpha", None) is not None]
    power = min(max(1.0, 2.0 / (min(alphas) - 1.0)), 20.0) if alphas else 1.0
    return QuadratureSpec(scale=scale, power=power)


def _mechanism_of(mech_or_provider):
    return getattr(mech_or_provider, "mechanism", mech_or_provider)


def _provider(mech_or_provider, degree):
    if isinstance(mech_or_provider, SolutionProvider):
        if mech_or_provider.max_degree < degree:
            raise ContractError(f"provider degree {mech_or_provider.max_degree} < {degree}")
        return mech_or_provider
    return SolutionProvider(mech_or_provider, degree)


def forest_law_P(H: LabeledForest, mesh, x, mech, spec: QuadratureSpec | None = None) -> QuadResult:
    """``P_x(For = H, Z(T) > k)`` for a uniform ``k``-sample at time ``T``."""
    mesh = _check_mesh(mesh)
    if len(mesh) - 1 != H.m:
        raise ContractError("mesh length does not match the forest")
    # jets only need to reach the largest outdegree in H
    n = max(norm1(mu) for row in H.stats().outdegrees for mu in row)
    provider = _provider(mech, n)
    x = np.asarray(x, dtype=float)
    T = mesh[-1]
    k = H.k

    def f(lams):
        tables = generation_tables(provider, mesh, lams, n)
        u = provider.values(T, lams)
        pref = mi_power(lams, k) / mi_factorial(k) * np.exp(-(u @ x))
        return pref * forest_energy_batch(H, tables, x)

    return integrate_pi_k(k, f, spec or default_spec(k, x, _mechanism_of(mech)))


def sample_survival_probability(k, T, x, mech, spec: QuadratureSpec | None = None) -> QuadResult:
    """``P_x(Z(T) > k)`` as the sum of all forest laws, via the jet composite."""
    k = as_multi_index(k)
    n = norm1(k)
    provider = _provider(mech, n)
    x = np.asarray(x, dtype=float)
    space = jet_space(len(k), n)

    def f(lams):
        jets = provider.jets(T, lams, n)
        expo = -np.einsum("i,bin->bn", x, jets)
        comp = space.derivative(space.exp(expo), k)
        return (-1) ** n * mi_power(lams, k) / mi_factorial(k) * comp

    return integrate_pi_k(k, f, spec or default_spec(k, x, _mechanism_of(mech)))


def mrca_probability(k: int, T: float, x: float, mech, spec: QuadratureSpec | None = None) -> QuadResult:
    """Probability that a uniform ``k``-sample at ``T`` descends from one time-0 ancestor."""
    if getattr(mech, "mechanism", mech).d != 1:
        raise ContractError("the MRCA formula is one-dimensional")
    if k < 2:
        raise ContractError("need k >= 2")
    provider = _provider(mech, k)
    x = float(x)

    def f(lams):
        jets = provider.jets(T, lams, k)
        u = jets[:, 0, 0]
        dk = jets[:, 0, k] * math.factorial(k)
        return (-1) ** (k - 1) * x / math.factorial(k) * lams[:, 0] ** k * np.exp(-x * u) * dk

    res = integrate_pi_k((k,), f, spec or default_spec((k,), [x], _mechanism_of(mech)))
    # the integrand alternates in sign for some mechanisms; only the total must be a probability
    if res.value < -max(10 * res.error, 1e-12):
        raise NumericalError(f"MRCA probability came out negative ({res.value:.3g})")
    return res


# -- normalized mixture -----------------------------------------------------------
@dataclass
class MixtureMeasure:
    """``Pi^k``: a probability measure with density ``weight / P(Z > k)`` against ``pi^k``."""

    k: tuple
    kind: str
    weight: Callable | None = None
    normalizer: float = 1.0

    def density(self, lams) -> np.ndarray:
        lams = np.atleast_2d(np.asarray(lams, dtype=float))
        if self.kind == "delta":
            return np.ones(lams.shape[0])
        return self.weight(lams, self.k) / self.normalizer

    def mass(self, spec: QuadratureSpec | None = None) -> float:
        if self.kind == "delta":
            return 1.0
        return integrate_pi_k(self.k, self.density, spec).value


def normalized_mixture(k, population) -> MixtureMeasure:
    k = as_multi_index(k, population.d)
    if norm1(k) == 0:
        return MixtureMeasure(k, "delta")
    p = population.prob_succ(k)
    if p <= 0:
        raise ContractError("the population never reaches the sample size")
    return MixtureMeasure(k, "normalized", population.poisson_weight, p)


# -- Monte Carlo check of the mixture identity ---------------------------------------
def _ev_full(Z, pts, draw):
    return np.ones(Z.shape[0], dtype=bool)


def _ev_first_below_median(Z, pts, draw):
    return pts[0][:, 0] < 0.5 * Z[:, 0]


def _ev_all_below_median(Z, pts, draw):
    ok = np.ones(Z.shape[0], dtype=bool)
    for i, p in enumerate(pts):
        if p.shape[1]:
            ok &= np.all(p < 0.5 * Z[:, i:i + 1], axis=1)
    return ok


def _ev_first_below_one(Z, pts, draw):
    return pts[0][:, 0] < 1.0


def _ev_population_above(Z, pts, draw):
    return Z[:, 0] > 1.0


def _ev_same_cluster(Z, pts, draw):
    cl = draw.cluster_of(pts[0])
    return np.all(cl == cl[:, :1], axis=1)


EVENTS = {
    "full": (_ev_full, 0, False),
    "first_below_median": (_ev_first_below_median, 1, False),
    "all_below_median": (_ev_all_below_median, 0, False),
    "first_below_one": (_ev_first_below_one, 1, False),
    "population_above": (_ev_population_above, 0, False),
    "same_cluster": (_ev_same_cluster, 2, True),
}


@dataclass(frozen=True)
class MixtureCheck:
    event: str
    lhs: float
    lhs_se: float
    rhs: float
    rhs_se: float

    @property
    def z(self) -> float:
        se = math.hypot(self.lhs_se, self.rhs_se)
        if se == 0:
            return 0.0 if self.lhs == self.rhs else math.inf
        return (self.lhs - self.rhs) / se


def _check_events(events, k, population):
    for name in events:
        if name not in EVENTS:
            raise ContractError(f"unknown event {name!r}")
        _, need0, clusters = EVENTS[name]
        if k[0] < need0:
            raise ContractError(f"event {name!r} needs k_0 >= {need0}")
        if clusters and not population.has_clusters:
            raise ContractError(f"event {name!r} needs a population with cluster structure")


def _points(rng, Z, k):
    return [rng.random((Z.shape[0], ki)) * Z[:, i:i + 1] for i, ki in enumerate(k)]


def mixture_identity_mc(k, population, events: Sequence[str], replicas: int, seed: int, *,
                        nodes: int | None = None, scale=None,
                        rhs_replicas: int | None = None) -> list[MixtureCheck]:
    """Compare ``P^k(A, Z > k)`` with ``int pi^k Q^lam(A, S = k)`` by simulation.

    The left side draws ``Z`` and a uniform ``k``-sample.  The right side uses
    fixed Gauss–Legendre nodes in ``lam``; at each node it draws ``Z`` and a
    genuine Poisson sample, keeping runs with exactly ``k`` points.  Runs are
    allocated to nodes in proportion to ``weight * sqrt(q (1 - q))`` with ``q``
    the exact chance of ``S = k``.  The right side is noisier per run, so it
    gets ``rhs_replicas`` (default ``10 * replicas``) runs in total.
    """
    k = as_multi_index(k, population.d)
    if replicas < 1:
        raise ContractError("replicas must be positive")
    if seed is None or int(seed) < 0:
        raise ContractError("a non-negative integer seed is required")
    _check_events(events, k, population)
    ss = np.random.SeedSequence(int(seed))
    lhs_seq, rhs_seq = ss.spawn(2)

    rng = np.random.default_rng(lhs_seq)
    draw = population.sample(rng, replicas)
    Z = draw.Z
    pts = _points(rng, Z, k)
    alive = np.all((Z > 0) | (np.asarray(k) == 0), axis=1)
    lhs = {}
    for name in events:
        hit = alive & EVENTS[name][0](Z, pts, draw)
        p = hit.mean()
        lhs[name] = (p, math.sqrt(p * (1 - p) / replicas))

    active = sum(1 for v in k if v > 0)
    if active == 0:
        # pi^0 is the point mass at 0: S = 0 surely.
        rng = np.random.default_rng(rhs_seq)
        draw = population.sample(rng, replicas)
        pts = _points(rng, draw.Z, k)
        out = []
        for name in events:
            hit = EVENTS[name][0](draw.Z, pts, draw)
            p = hit.mean()
            out.append(MixtureCheck(name, *lhs[name], p, math.sqrt(p * (1 - p) / replicas)))
        return out

    nodes = nodes or (64 if active == 1 else 24)
    if scale is None:
        scale = 1.0
    lams, W = gauss_legendre_pi_k(k, nodes, scale)
    q = population.poisson_weight(lams, k)
    score = W * np.sqrt(np.clip(q * (1 - q), 0, None))
    budget = 10 * replicas if rhs_replicas is None else int(rhs_replicas)
    alloc = np.floor(budget * score / score.sum()).astype(int)
    alloc = np.where(score > 0, np.maximum(alloc, 8), 0)
    streams = rhs_seq.spawn(len(W))
    acc = {name: [0.0, 0.0] for name in events}
    for j in range(len(W)):
        n = int(alloc[j])
        if n == 0:
            continue
        rng = np.random.default_rng(streams[j])
        draw = population.sample(rng, n)
        Zj = draw.Z
        S = rng.poisson(lams[j] * Zj)
        keep = np.all(S == np.asarray(k), axis=1)
        pts = _points(rng, Zj, k)
        for name in events:
            hit = keep & EVENTS[name][0](Zj, pts, draw)
            p = hit.mean()
            acc[name][0] += W[j] * p
            acc[name][1] += W[j] ** 2 * p * (1 - p) / n
    return [MixtureCheck(name, *lhs[name], acc[name][0], math.sqrt(acc[name][1])) for name in events]


def mixture_quadrature_bias(k, population, nodes: int | None = None, scale=None) -> float:
    """``|sum_j W_j q_j - P(Z > k)|`` for the fixed node set used by the MC check."""
    k = as_multi_index(k, population.d)
    active = sum(1 for v in k if v > 0)
    if active == 0:
        return 0.0
    nodes = nodes or (64 if active == 1 else 24)
    lams, W = gauss_legendre_pi_k(k, nodes, 1.0 if scale is None else scale)
    return abs(float(W @ population.poisson_weight(lams, k)) - population.prob_succ(k))
