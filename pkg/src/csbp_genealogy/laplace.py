"""Laplace exponent ``u(t, lam)`` and its derivatives.

``u`` solves ``d/dt u = -psi(u)``, ``u(0, lam) = lam``.  We integrate the ODE
in jet arithmetic, so one solve returns every ``D^alpha u(t, lam)`` with
``|alpha| <= max_degree``.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .errors import ContractError, DomainError, IntegrationError, NumericalError
from .jets import MAX_DEGREE, JetSpace, jet_space
from .mechanism import BranchingMechanism
from .multiindex import as_multi_index, mi_factorial, mi_power, norm1, sub_indices

DEFAULT_RTOL = 1e-10
DEFAULT_ATOL = 1e-12
SIGN_TOL = 1e-7


@dataclass
class SolverStats:
    nsteps: int = 0
    nfev: int = 0
    error_estimate: float | None = None


@dataclass(frozen=True)
class LaplaceSolution:
    """``u(t, lam)`` with its jet in ``lam``.

    ``coefficients[i, p]`` is the Taylor coefficient of ``u_i`` at multi-index
    ``space.indices[p]``.
    """

    mechanism: BranchingMechanism
    t: float
    lam: tuple
    space: JetSpace
    coefficients: np.ndarray
    stats: SolverStats = field(default_factory=SolverStats)

    @property
    def max_degree(self) -> int:
        return self.space.max_degree

    @property
    def value(self) -> np.ndarray:
        return self.coefficients[:, 0].copy()

    def derivative(self, i: int, alpha) -> float:
        alpha = as_multi_index(alpha, self.space.d)
        if norm1(alpha) > self.max_degree:
            raise ContractError(f"|alpha|={norm1(alpha)} exceeds jet degree {self.max_degree}")
        return float(self.space.derivative(self.coefficients[i], alpha))

    def derivative_table(self):
        """Rows ``(i, alpha, D^alpha u_i)`` in jet order."""
        ders = self.space.derivatives(self.coefficients)
        return [(i, alpha, float(ders[i, p]))
                for i in range(self.space.d) for p, alpha in enumerate(self.space.indices)]


def _rhs_factory(mech, space, batch_shape):
    shape = tuple(batch_shape) + (mech.d, space.n)

    def rhs(_t, y):
        jets = y.reshape(shape)
        try:
            with np.errstate(over="ignore", invalid="ignore"):  # rejected trial stages may overflow
                return -mech.psi_jet(space, jets).ravel()
        except DomainError:
            # a trial stage left the domain; NaN makes the solver reject and shrink the step
            return np.full(y.shape, np.nan)

    return rhs


def _integrate(mech, t, y0, space, batch_shape, rtol, atol):
    if t == 0:
        return y0.copy(), SolverStats()
    rhs = _rhs_factory(mech, space, batch_shape)
    sol = solve_ivp(rhs, (0.0, t), y0.ravel(), method="DOP853", rtol=rtol, atol=atol)
    if sol.status != 0 or not np.all(np.isfinite(sol.y[:, -1])):
        raise IntegrationError(f"ODE integration failed: {sol.message}",
                               t_reached=float(sol.t[-1]), nsteps=len(sol.t) - 1)
    stats = SolverStats(nsteps=len(sol.t) - 1, nfev=sol.nfev)
    return sol.y[:, -1].reshape(y0.shape), stats


def solve_u_batch(mech: BranchingMechanism, t: float, lams, max_degree: int = 0, *,
                  rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL,
                  check_signs: bool = True):
    """Jets of ``u(t, .)`` at many points at once.

    ``lams`` has shape ``(B, d)``; returns coefficients of shape ``(B, d, n)``.
    """
    t = float(t)
    if not (t >= 0 and math.isfinite(t)):
        raise ContractError(f"t must be finite and non-negative, got {t}")
    if not 0 <= max_degree <= MAX_DEGREE:
        raise ContractError(f"max_degree must lie in [0, {MAX_DEGREE}]")
    lams = np.atleast_2d(np.asarray(lams, dtype=float))
    lams = mech._check_lambda(lams)
    space = jet_space(mech.d, max_degree)
    y0 = space.variables(lams)
    coeffs, stats = _integrate(mech, t, y0, space, lams.shape[:-1], rtol, atol)
    if check_signs:
        check_alternating_signs(space, coeffs)
    return coeffs, stats


def solve_u(mech: BranchingMechanism, t: float, lam, max_degree: int = 0, *,
            rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL,
            estimate_error: bool = False, check_signs: bool = True) -> LaplaceSolution:
    lam = np.asarray(lam, dtype=float).reshape(-1)
    coeffs, stats = solve_u_batch(mech, t, lam[None, :], max_degree, rtol=rtol, atol=atol,
                                  check_signs=check_signs)
    coeffs = coeffs[0]
    if estimate_error and t > 0:
        fine, _ = solve_u_batch(mech, t, lam[None, :], max_degree, rtol=rtol * 1e-2,
                                atol=atol * 1e-2, check_signs=False)
        stats.error_estimate = float(np.max(np.abs(fine[0] - coeffs)))
    elif estimate_error:
        stats.error_estimate = 0.0
    return LaplaceSolution(mech, float(t), tuple(lam.tolist()), jet_space(mech.d, max_degree),
                           coeffs, stats)


def check_alternating_signs(space: JetSpace, coeffs, tol: float = SIGN_TOL):
    """Raise if ``(-1)**(|alpha|+1) D^alpha u_i < 0`` beyond ``tol`` for some ``alpha != 0``."""
    if space.max_degree == 0:
        return
    signs = np.where(space.degrees % 2 == 1, 1.0, -1.0)
    signed = coeffs[..., 1:] * signs[1:]
    scale = 1.0 + np.max(np.abs(coeffs), axis=-1, keepdims=True)
    worst = np.min(signed / scale) if signed.size else 0.0
    if worst < -tol:
        raise NumericalError(f"alternating-sign property violated (scaled margin {worst:.3g})")


def outdegree_rate(sol: LaplaceSolution, i: int, alpha, tol: float = SIGN_TOL) -> float:
    """``r_i^alpha(t, lam) = (-1)**(|alpha|+1) lam**alpha D^alpha u_i / alpha!``."""
    alpha = as_multi_index(alpha, sol.space.d)
    n = norm1(alpha)
    if n == 0:
        raise ContractError("alpha must be nonzero")
    if n > sol.max_degree:
        raise ContractError(f"|alpha|={n} exceeds jet degree {sol.max_degree}")
    coef = sol.coefficients[i, sol.space.position[alpha]]
    rate = (-1) ** (n + 1) * float(mi_power(np.array(sol.lam), alpha)) * coef
    if rate < -tol * (1.0 + abs(sol.value[i])):
        raise NumericalError(f"negative outdegree rate {rate:.3g}")
    return max(rate, 0.0)


def check_total_rate(sol: LaplaceSolution, i: int, truncation: int):
    """``(sum_{0<|alpha|<=A} r_i^alpha, u_i, gap)``."""
    if truncation > sol.max_degree:
        raise ContractError(f"truncation {truncation} exceeds jet degree {sol.max_degree}")
    partial = 0.0
    for alpha in sol.space.indices:
        if 0 < norm1(alpha) <= truncation:
            partial += outdegree_rate(sol, i, alpha)
    u = float(sol.value[i])
    return partial, u, u - partial


class SolutionProvider:
    """Memoised jets of ``u(t, .)`` keyed by ``(t, lam, degree)``.

    Thread-safe; the cache only ever grows within one experiment.
    """

    def __init__(self, mech: BranchingMechanism, max_degree: int, *,
                 rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL):
        self.mechanism = mech
        self.max_degree = max_degree
        self.rtol = rtol
        self.atol = atol
        self.space = jet_space(mech.d, max_degree)
        self._cache: dict = {}
        self._lock = threading.Lock()

    def jets(self, t: float, lams, degree: int | None = None) -> np.ndarray:
        """Coefficients of shape ``(B, d, n)`` at ``lams`` of shape ``(B, d)``."""
        degree = self.max_degree if degree is None else degree
        if degree > self.max_degree:
            raise ContractError(f"requested jet degree {degree} exceeds provider degree {self.max_degree}")
        lams = np.atleast_2d(np.asarray(lams, dtype=float))
        keys = [(float(t), tuple(l.tolist()), degree) for l in lams]
        with self._lock:
            missing = [j for j, key in enumerate(keys) if key not in self._cache]
        if missing:
            coeffs, _ = solve_u_batch(self.mechanism, t, lams[missing], degree,
                                      rtol=self.rtol, atol=self.atol)
            with self._lock:
                for j, c in zip(missing, coeffs):
                    self._cache[keys[j]] = c
        with self._lock:
            return np.stack([self._cache[key] for key in keys])

    def values(self, t: float, lams) -> np.ndarray:
        return self.jets(t, lams, degree=0)[..., 0]

    def solution(self, t: float, lam) -> LaplaceSolution:
        coeffs = self.jets(t, np.asarray(lam, dtype=float)[None, :])[0]
        return LaplaceSolution(self.mechanism, float(t), tuple(np.asarray(lam, float).tolist()),
                               self.space, coeffs)


def semigroup_defect(mech: BranchingMechanism, s: float, t: float, theta, **kw) -> float:
    """``max_i |u(t, u(s, theta)) - u(t + s, theta)|``."""
    inner = solve_u(mech, s, theta, **kw).value
    lhs = solve_u(mech, t, np.maximum(inner, 0.0), **kw).value
    rhs = solve_u(mech, t + s, theta, **kw).value
    return float(np.max(np.abs(lhs - rhs)))
