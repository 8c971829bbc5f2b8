"""Integration against the mixing measures ``pi^k``.

``pi^k`` is the product over types of ``k_i dlam_i / lam_i`` when ``k_i > 0``
and the point mass at 0 when ``k_i == 0``.  Active coordinates are mapped to
the unit cube through ``lam = c (s / (1 - s))**p``, which turns the measure
into ``p k_i ds / (s (1 - s))``.  A power ``p > 1`` flattens integrands that
decay only polynomially in ``lam``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import cubature

from .errors import ContractError, QuadratureError


@dataclass(frozen=True)
class QuadratureSpec:
    rtol: float = 1e-10
    atol: float = 1e-13
    rule: str = "auto"  # "auto", "gl-doubling", or any scipy cubature rule
    max_subdivisions: int = 20000
    node_budget: int = 8_000_000
    scale: tuple | float | None = None  # lam = scale * (s / (1 - s))**power
    power: float = 1.0


@dataclass(frozen=True)
class QuadResult:
    value: float
    error: float
    subdivisions: int

    def __float__(self):
        return self.value


def _scales(spec: QuadratureSpec, d: int) -> np.ndarray:
    if spec.scale is None:
        return np.ones(d)
    s = np.broadcast_to(np.asarray(spec.scale, dtype=float), (d,)).copy()
    if np.any(s <= 0):
        raise ContractError("quadrature scale must be positive")
    return s


def integrate_pi_k(k: Sequence[int], f: Callable[[np.ndarray], np.ndarray],
                   spec: QuadratureSpec | None = None) -> QuadResult:
    """``int pi^k(dlam) f(lam)``.

    ``f`` takes an array of shape ``(N, d)`` and returns shape ``(N,)``.
    """
    spec = spec or QuadratureSpec()
    k = tuple(int(v) for v in k)
    if any(v < 0 for v in k):
        raise ContractError("k must be non-negative")
    d = len(k)
    active = [i for i in range(d) if k[i] > 0]
    if not active:
        return QuadResult(float(np.asarray(f(np.zeros((1, d))))[0]), 0.0, 0)
    if not spec.power >= 1:
        raise ContractError("quadrature power must be at least 1")
    scales = _scales(spec, d)[active]
    weights = spec.power * np.array([k[i] for i in active], dtype=float)

    def g(s):
        out = np.zeros(s.shape[0])
        inner = np.all((s > 0) & (s < 1), axis=1)  # deep subdivision can land on an endpoint
        s = s[inner]
        if len(s):
            lam = np.zeros((s.shape[0], d))
            lam[:, active] = scales * (s / (1.0 - s)) ** spec.power
            jac = np.prod(weights / (s * (1.0 - s)), axis=1)
            out[inner] = np.asarray(f(lam), dtype=float) * jac
        return out

    rule = spec.rule
    if rule == "auto":
        rule = "gk21" if len(active) == 1 else "gl-doubling"
    if rule == "gl-doubling":
        return _gl_doubling(g, len(active), spec)
    a = np.zeros(len(active))
    b = np.ones(len(active))
    res = cubature(g, a, b, rule=rule, rtol=spec.rtol, atol=spec.atol,
                   max_subdivisions=spec.max_subdivisions)
    if res.status != "converged":
        raise QuadratureError("pi^k quadrature did not converge",
                              estimate=float(res.estimate), error=float(res.error))
    return QuadResult(float(res.estimate), float(res.error), int(res.subdivisions))


def _tensor_rule(n: int, dim: int):
    x, w = np.polynomial.legendre.leggauss(n)
    s = 0.5 * (x + 1.0)
    w = 0.5 * w
    grids = np.meshgrid(*([s] * dim), indexing="ij")
    wgrids = np.meshgrid(*([w] * dim), indexing="ij")
    S = np.stack([g.ravel() for g in grids], axis=1)
    W = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    return S, W


def _gl_doubling(g, dim: int, spec: QuadratureSpec, chunk: int = 65536) -> QuadResult:
    """Tensor Gauss–Legendre, refined (16, 24, 32, 48, ...) until two levels agree."""
    prev = None
    levels = [16 * 2 ** (i // 2) * (3 if i % 2 else 2) // 2 for i in range(16)]
    for n in levels:
        if n ** dim > spec.node_budget:
            break
        S, W = _tensor_rule(n, dim)
        total = 0.0
        for lo in range(0, len(W), chunk):
            total += float(np.dot(g(S[lo:lo + chunk]), W[lo:lo + chunk]))
        if prev is not None:
            err = abs(total - prev)
            if err <= max(spec.atol, spec.rtol * abs(total)):
                return QuadResult(total, err, n)
        prev = total
    raise QuadratureError("tensor Gauss-Legendre rule exhausted its node budget",
                          estimate=prev, error=None)


def gauss_legendre_pi_k(k: Sequence[int], nodes: int = 48, scale=None):
    """Fixed tensor Gauss–Legendre nodes and weights for ``pi^k``.

    Returns ``(lams, weights)`` with ``lams`` of shape ``(N, d)``.  Used where an
    integrand is noisy (Monte Carlo per node) and adaptivity would chase noise.
    """
    k = tuple(int(v) for v in k)
    d = len(k)
    active = [i for i in range(d) if k[i] > 0]
    if not active:
        return np.zeros((1, d)), np.ones(1)
    scales = np.ones(d) if scale is None else np.broadcast_to(np.asarray(scale, float), (d,))
    S, W = _tensor_rule(nodes, len(active))
    lams = np.zeros((S.shape[0], d))
    for col, i in enumerate(active):
        lams[:, i] = scales[i] * S[:, col] / (1.0 - S[:, col])
        W = W * k[i] / (S[:, col] * (1.0 - S[:, col]))
    return lams, W
