"""Truncated multivariate Taylor jets.

A jet of a function ``f: R^d -> R`` at a base point ``p`` stores the Taylor
coefficients ``D^alpha f(p) / alpha!`` for every ``|alpha| <= max_degree``.
Arithmetic on jets is exact truncation of formal power series, so pushing
jets through an ODE right-hand side integrates all variational equations up
to ``max_degree`` at once.

The low-level functions here act on plain arrays of shape ``(..., n)`` where
``n = len(space.indices)``; leading axes are batch axes.  ``TaylorJet`` is a
thin user-facing wrapper.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import ContractError
from .multiindex import mi_factorial, multi_indices

MAX_DEGREE = 8


class JetSpace:
    """Index bookkeeping for jets in ``d`` variables truncated at ``max_degree``."""

    def __init__(self, d: int, max_degree: int):
        if d < 1:
            raise ContractError("jet dimension must be >= 1")
        if not 0 <= max_degree <= MAX_DEGREE:
            raise ContractError(f"max_degree must lie in [0, {MAX_DEGREE}], got {max_degree}")
        self.d = d
        self.max_degree = max_degree
        self.indices = multi_indices(d, max_degree)
        self.n = len(self.indices)
        self.position = {alpha: i for i, alpha in enumerate(self.indices)}
        self.degrees = np.array([sum(a) for a in self.indices])
        self.factorials = np.array([float(mi_factorial(a)) for a in self.indices])
        self.unit_positions = [self.position[tuple(int(i == j) for j in range(d))]
                               for i in range(d)] if max_degree >= 1 else []

        left, right, target = [], [], []
        for ia, a in enumerate(self.indices):
            for ib, b in enumerate(self.indices):
                s = tuple(x + y for x, y in zip(a, b))
                if sum(s) <= max_degree:
                    left.append(ia)
                    right.append(ib)
                    target.append(self.position[s])
        order = np.argsort(target, kind="stable")
        self._left = np.asarray(left)[order]
        self._right = np.asarray(right)[order]
        target = np.asarray(target)[order]
        self._starts = np.searchsorted(target, np.arange(self.n))

    def __repr__(self):
        return f"JetSpace(d={self.d}, max_degree={self.max_degree})"

    # -- constructors -----------------------------------------------------
    def constant(self, value, batch_shape=()):
        out = np.zeros(tuple(batch_shape) + (self.n,))
        out[..., 0] = value
        return out

    def variables(self, base_point):
        """Jets of the coordinate functions ``lam -> lam_i`` at ``base_point``.

        ``base_point`` has shape ``(..., d)``; the result has shape ``(..., d, n)``.
        """
        base_point = np.asarray(base_point, dtype=float)
        out = np.zeros(base_point.shape + (self.n,))
        out[..., 0] = base_point
        for i, pos in enumerate(self.unit_positions):
            out[..., i, pos] = 1.0
        return out

    # -- arithmetic -------------------------------------------------------
    def mul(self, a, b):
        prod = a[..., self._left] * b[..., self._right]
        return np.add.reduceat(prod, self._starts, axis=-1)

    def exp(self, a):
        a0 = a[..., :1]
        da = a.copy()
        da[..., 0] = 0.0
        res = self.constant(1.0, a.shape[:-1])
        for p in range(self.max_degree, 0, -1):
            res = self.mul(da, res) / p
            res[..., 0] += 1.0
        return np.exp(a0) * res

    def compose_univariate(self, derivs, a):
        """``f(a)`` for a scalar function given its derivatives at ``a[..., 0]``.

        ``derivs[..., p] = f^{(p)}(a0)`` for ``p = 0..max_degree``.
        """
        derivs = np.asarray(derivs, dtype=float)
        da = a.copy()
        da[..., 0] = 0.0
        fact = 1.0
        coeffs = []
        for p in range(self.max_degree + 1):
            if p:
                fact *= p
            coeffs.append(derivs[..., p] / fact)
        res = self.constant(0.0, a.shape[:-1])
        res[..., 0] = coeffs[-1]
        for p in range(self.max_degree - 1, -1, -1):
            res = self.mul(da, res)
            res[..., 0] += coeffs[p]
        return res

    def compose(self, outer, inner):
        """Substitute jets ``inner`` (shape ``(..., d, n)``) into ``outer``.

        ``outer`` has shape ``(..., m, n)`` and is a jet in ``d`` variables
        expanded about ``inner[..., :, 0]``.
        """
        dinner = inner.copy()
        dinner[..., 0] = 0.0
        batch = inner.shape[:-2]
        powers = []
        for i in range(self.d):
            row = [self.constant(1.0, batch)]
            for _ in range(self.max_degree):
                row.append(self.mul(row[-1], dinner[..., i, :]))
            powers.append(row)
        out = np.zeros(outer.shape)
        for pos, beta in enumerate(self.indices):
            term = powers[0][beta[0]]
            for i in range(1, self.d):
                if beta[i]:
                    term = self.mul(term, powers[i][beta[i]])
            out += outer[..., pos:pos + 1] * term[..., None, :]
        return out

    def derivative(self, a, alpha):
        """``D^alpha`` of the jet(s) ``a`` at the base point."""
        pos = self.position[tuple(alpha)]
        return a[..., pos] * self.factorials[pos]

    def derivatives(self, a):
        return a * self.factorials


@lru_cache(maxsize=64)
def jet_space(d: int, max_degree: int) -> JetSpace:
    return JetSpace(d, max_degree)


@dataclass(frozen=True)
class TaylorJet:
    """Jet of a scalar function of ``d`` variables at ``base_point``."""

    space: JetSpace
    base_point: tuple
    coefficients: np.ndarray

    @classmethod
    def variable(cls, i: int, base_point: Sequence[float], max_degree: int) -> "TaylorJet":
        space = jet_space(len(base_point), max_degree)
        return cls(space, tuple(float(b) for b in base_point), space.variables(base_point)[i])

    @classmethod
    def constant(cls, value: float, base_point: Sequence[float], max_degree: int) -> "TaylorJet":
        space = jet_space(len(base_point), max_degree)
        return cls(space, tuple(float(b) for b in base_point), space.constant(value))

    @property
    def value(self) -> float:
        return float(self.coefficients[0])

    def coefficient(self, alpha) -> float:
        return float(self.coefficients[self.space.position[tuple(alpha)]])

    def derivative(self, alpha) -> float:
        return float(self.space.derivative(self.coefficients, alpha))

    def as_dict(self) -> dict:
        return {alpha: float(c) for alpha, c in zip(self.space.indices, self.coefficients)}

    def _wrap(self, coeffs):
        return TaylorJet(self.space, self.base_point, coeffs)

    def _coerce(self, other):
        if isinstance(other, TaylorJet):
            if other.space is not self.space or other.base_point != self.base_point:
                raise ContractError("jets live in different spaces or at different points")
            return other.coefficients
        return self.space.constant(float(other))

    def __add__(self, other):
        return self._wrap(self.coefficients + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self._wrap(self.coefficients - self._coerce(other))

    def __rsub__(self, other):
        return self._wrap(self._coerce(other) - self.coefficients)

    def __neg__(self):
        return self._wrap(-self.coefficients)

    def __mul__(self, other):
        if isinstance(other, TaylorJet):
            return self._wrap(self.space.mul(self.coefficients, self._coerce(other)))
        return self._wrap(self.coefficients * float(other))

    __rmul__ = __mul__

    def exp(self) -> "TaylorJet":
        return self._wrap(self.space.exp(self.coefficients))
