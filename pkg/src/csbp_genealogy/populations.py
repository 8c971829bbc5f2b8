"""Continuous population fixtures.

A population of type ``i`` is the interval ``[0, Z_i]``; sampled individuals
are uniform points in it.  Each fixture can simulate ``Z`` exactly and knows
two closed forms:

* ``poisson_weight(lams, k) = E[(lam Z)^k / k! exp(-<lam, Z>)]``, the chance that
  a rate-``lam`` Poisson sample has exactly ``k`` points;
* ``prob_succ(k) = P(Z_i > 0 whenever k_i > 0)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .jets import jet_space
from .multiindex import as_multi_index, mi_factorial, mi_power, norm1


@dataclass
class PopulationDraw:
    Z: np.ndarray                    # (R, d)
    cluster_ends: np.ndarray | None = None   # flat cumulative cluster ends (type 0)
    cluster_start: np.ndarray | None = None  # (R,) index of each replica's first cluster

    def cluster_of(self, positions: np.ndarray) -> np.ndarray:
        """Global cluster index of type-0 points ``positions`` (shape ``(R, j)``)."""
        if self.cluster_ends is None:
            raise ContractError("this population has no cluster structure")
        start = self.cluster_start
        offset = np.where(start > 0, self.cluster_ends[np.maximum(start - 1, 0)], 0.0)
        glob = positions + offset[:, None]
        return np.searchsorted(self.cluster_ends, glob, side="right")


class DeterministicPopulation:
    name = "deterministic"
    has_clusters = False

    def __init__(self, z):
        self.z = np.asarray(z, dtype=float).reshape(-1)
        if np.any(self.z < 0):
            raise ContractError("population sizes must be non-negative")
        self.d = self.z.size

    def sample(self, rng: np.random.Generator, R: int) -> PopulationDraw:
        return PopulationDraw(np.tile(self.z, (R, 1)))

    def poisson_weight(self, lams, k):
        lams = np.atleast_2d(lams)
        k = as_multi_index(k, self.d)
        return mi_power(lams * self.z, k) / mi_factorial(k) * np.exp(-(lams @ self.z))

    def prob_succ(self, k) -> float:
        return float(all(zi > 0 for zi, ki in zip(self.z, k) if ki > 0))


class ExponentialPopulation:
    """Independent exponential sizes with the given means."""

    name = "exponential"
    has_clusters = False

    def __init__(self, means):
        self.means = np.asarray(means, dtype=float).reshape(-1)
        if np.any(self.means <= 0):
            raise ContractError("exponential means must be positive")
        self.d = self.means.size

    def sample(self, rng, R):
        return PopulationDraw(rng.exponential(self.means, size=(R, self.d)))

    def poisson_weight(self, lams, k):
        lams = np.atleast_2d(lams)
        k = np.asarray(as_multi_index(k, self.d))
        lt = lams * self.means
        return np.prod(lt ** k / (1.0 + lt) ** (k + 1), axis=1)

    def prob_succ(self, k) -> float:
        return 1.0


class FellerPopulation:
    """``Z(T)`` of the one-type Feller CSBP ``psi(l) = -kappa l + beta l^2``.

    ``u(T, l) = l A / (1 + B l)`` with ``A = e^{kappa T}``,
    ``B = beta (e^{kappa T} - 1) / kappa``.  ``Z(T)`` is a Poisson(``x A / B``)
    number of independent Exp(mean ``B``) clusters; each cluster is the progeny
    of one time-0 ancestor, which gives the genealogical events their meaning.
    """

    name = "feller"
    has_clusters = True
    d = 1

    def __init__(self, beta: float, T: float, x: float, kappa: float = 0.0):
        if beta <= 0 or T <= 0 or x <= 0:
            raise ContractError("Feller fixture needs beta, T, x > 0")
        self.beta, self.T, self.x, self.kappa = float(beta), float(T), float(x), float(kappa)
        self.A = math.exp(kappa * T)
        self.B = beta * T if kappa == 0 else beta * math.expm1(kappa * T) / kappa

    def u(self, lam):
        lam = np.asarray(lam, dtype=float)
        return lam * self.A / (1.0 + self.B * lam)

    def u_derivatives(self, lam, degree: int) -> np.ndarray:
        """``d^p/dlam^p u(T, lam)`` for ``p = 0..degree``."""
        lam = np.asarray(lam, dtype=float)
        out = np.empty(lam.shape + (degree + 1,))
        out[..., 0] = self.u(lam)
        y = 1.0 + self.B * lam
        for p in range(1, degree + 1):
            out[..., p] = (self.A / self.B) * (-1) ** (p + 1) * math.factorial(p) * self.B ** p / y ** (p + 1)
        return out

    def sample(self, rng, R):
        counts = rng.poisson(self.x * self.A / self.B, size=R)
        sizes = rng.exponential(self.B, size=int(counts.sum()))
        ends = np.cumsum(sizes)
        start = np.concatenate([[0], np.cumsum(counts)[:-1]])
        stop = start + counts
        tot = np.where(stop > 0, ends[np.maximum(stop - 1, 0)] if ends.size else 0.0, 0.0)
        before = np.where(start > 0, ends[np.maximum(start - 1, 0)] if ends.size else 0.0, 0.0)
        Z = np.where(counts > 0, tot - before, 0.0)
        return PopulationDraw(Z[:, None], ends, start)

    def poisson_weight(self, lams, k):
        lams = np.atleast_2d(np.asarray(lams, dtype=float))[:, 0]
        k = as_multi_index(k, 1)[0]
        space = jet_space(1, k)
        var = space.variables(lams[:, None])[:, 0, :]
        uj = space.compose_univariate(self.u_derivatives(lams, k), var)
        e = space.exp(-self.x * uj)
        return (-lams) ** k / math.factorial(k) * space.derivative(e, (k,))

    def prob_succ(self, k) -> float:
        if norm1(k) == 0:
            return 1.0
        return -math.expm1(-self.x * self.A / self.B)


def population_from_spec(spec: dict):
    kind = spec.get("kind")
    if kind == "deterministic":
        return DeterministicPopulation(spec["z"])
    if kind == "exponential":
        return ExponentialPopulation(spec["means"])
    if kind == "feller":
        return FellerPopulation(spec["beta"], spec["T"], spec["x"], spec.get("kappa", 0.0))
    raise ContractError(f"unknown population fixture {kind!r}")
