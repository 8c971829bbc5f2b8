"""Multitype branching mechanisms in Lévy–Khintchine form.

For type ``c`` the mechanism is

    psi_c(lam) = -sum_j kappa[c, j] lam_j + beta_c lam_c**2
                 + int (exp(-<lam, r>) - 1 + lam_c r_c 1{r_c <= 1}) nu_c(dr)

Jump measures are finite lists of atoms in any dimension, optionally plus a
one-dimensional stable density ``C r**(-1-a) dr``.  ``NeveuMechanism`` is the
analytic special case ``psi(lam) = lam log lam``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate, special

from .errors import ContractError, DomainError, QuadratureError
from .jets import JetSpace
from .multiindex import as_multi_index, norm1, unit

EULER_GAMMA = float(np.euler_gamma)


@dataclass(frozen=True)
class Tolerance:
    atol: float = 1e-10
    rtol: float = 1e-8


@dataclass(frozen=True)
class Atom:
    mass: float
    r: tuple

    def __post_init__(self):
        if not (self.mass > 0 and math.isfinite(self.mass)):
            raise ContractError(f"atom mass must be positive and finite, got {self.mass}")
        r = tuple(float(v) for v in self.r)
        if any(v < 0 or not math.isfinite(v) for v in r) or not any(r):
            raise ContractError(f"atom location must be a nonzero vector in the orthant, got {r}")
        object.__setattr__(self, "r", r)


@dataclass(frozen=True)
class StableDensity:
    """``nu(dr) = scale * r**(-1 - alpha) dr`` on ``(0, inf)``."""

    alpha: float
    scale: float = 1.0

    def __post_init__(self):
        if not 1.0 < self.alpha < 2.0:
            raise ContractError(f"stable index must lie in (1, 2), got {self.alpha}")
        if not self.scale > 0:
            raise ContractError("stable scale must be positive")

    def density(self, r):
        return self.scale * np.asarray(r, dtype=float) ** (-1.0 - self.alpha)

    def laplace_moment(self, p: int, lam: float) -> float:
        """``int r**p exp(-lam r) nu(dr)`` for ``p >= 2``."""
        return self.scale * math.gamma(p - self.alpha) * lam ** (self.alpha - p)

    def psi_part(self, lam):
        a, C = self.alpha, self.scale
        lam = np.asarray(lam, dtype=float)
        return C * math.gamma(-a) * lam ** a - C * lam / (a - 1.0)

    def psi_part_derivatives(self, lam, degree: int):
        """Derivatives of ``psi_part`` at ``lam > 0`` up to ``degree`` (last axis)."""
        a, C = self.alpha, self.scale
        lam = np.asarray(lam, dtype=float)
        out = np.empty(lam.shape + (degree + 1,))
        g = C * math.gamma(-a)
        falling = 1.0
        for p in range(degree + 1):
            out[..., p] = g * falling * lam ** (a - p)
            falling *= a - p
        out[..., 0] -= C * lam / (a - 1.0)
        if degree >= 1:
            out[..., 1] -= C / (a - 1.0)
        return out

    def to_json(self):
        return {"family": "stable", "alpha": self.alpha, "scale": self.scale}


@dataclass(frozen=True)
class JumpMeasure:
    atoms: tuple = ()
    density1d: StableDensity | None = None

    def __post_init__(self):
        object.__setattr__(self, "atoms", tuple(self.atoms))

    @property
    def is_zero(self) -> bool:
        return not self.atoms and self.density1d is None

    @property
    def bounded_support(self) -> bool:
        return self.density1d is None

    def to_json(self):
        return {
            "atoms": [{"mass": a.mass, "r": list(a.r)} for a in self.atoms],
            "density1d": None if self.density1d is None else self.density1d.to_json(),
        }


def _phi(x):
    """``exp(-x) - 1 + x`` without cancellation for small ``x``."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-3
    xs = np.where(small, x, 0.0)
    series = xs * xs * (0.5 - xs * (1.0 / 6.0 - xs * (1.0 / 24.0 - xs / 120.0)))
    return np.where(small, series, np.expm1(-np.where(small, 1.0, x)) + np.where(small, 0.0, x))


def _quad(func, a, b, tol: Tolerance, what: str):
    value, err, info = integrate.quad(func, a, b, epsabs=tol.atol, epsrel=tol.rtol,
                                      limit=200, full_output=True)[:3]
    if err > max(tol.atol, tol.rtol * abs(value)) * 10:
        raise QuadratureError(f"quadrature for {what} did not converge", estimate=value, error=err)
    return value


class BranchingMechanism:
    """Immutable Lévy–Khintchine data ``(kappa, beta, nu)`` of a d-type CSBP."""

    name = "lk"

    def __init__(self, kappa, beta, nu: Sequence[JumpMeasure] | None = None,
                 tol: Tolerance | None = None):
        kappa = np.array(kappa, dtype=float, ndmin=2)
        beta = np.array(beta, dtype=float, ndmin=1)
        d = beta.shape[0]
        if kappa.shape != (d, d):
            raise ContractError(f"kappa must be {d}x{d}, got shape {kappa.shape}")
        if nu is None:
            nu = [JumpMeasure() for _ in range(d)]
        nu = tuple(nu)
        if len(nu) != d:
            raise ContractError(f"need one jump measure per type, got {len(nu)} for d={d}")
        if np.any(beta < 0) or not np.all(np.isfinite(beta)):
            raise ContractError("beta must be finite and non-negative")
        off = kappa - np.diag(np.diag(kappa))
        if np.any(off < 0) or not np.all(np.isfinite(kappa)):
            raise ContractError("off-diagonal kappa entries must be finite and non-negative")
        for c, m in enumerate(nu):
            for atom in m.atoms:
                if len(atom.r) != d:
                    raise ContractError(f"atom of type {c} has dimension {len(atom.r)}, expected {d}")
            if m.density1d is not None and d != 1:
                raise ContractError("density jump measures are supported only for d = 1")
        self.d = d
        self.kappa = kappa
        self.beta = beta
        self.nu = nu
        self.tol = tol or Tolerance()
        self.kappa.setflags(write=False)
        self.beta.setflags(write=False)
        # atom tables per type: masses (A,), locations (A, d), compensator flags (A,)
        self._atoms = []
        for c, m in enumerate(nu):
            masses = np.array([a.mass for a in m.atoms], dtype=float)
            locs = np.array([a.r for a in m.atoms], dtype=float).reshape(-1, d)
            comp = locs[:, c] * (locs[:, c] <= 1.0)
            self._atoms.append((masses, locs, comp))

    # -- construction helpers ---------------------------------------------
    @classmethod
    def feller(cls, beta, kappa=None):
        beta = np.array(beta, dtype=float, ndmin=1)
        d = beta.shape[0]
        kappa = np.zeros((d, d)) if kappa is None else kappa
        return cls(kappa, beta)

    def __repr__(self):
        return f"{type(self).__name__}(d={self.d}, kappa={self.kappa.tolist()}, beta={self.beta.tolist()})"

    def bounded_support(self, c: int) -> bool:
        return self.nu[c].bounded_support

    # -- psi ----------------------------------------------------------------
    def _check_lambda(self, lam):
        lam = np.asarray(lam, dtype=float)
        if lam.shape[-1:] != (self.d,):
            raise ContractError(f"lambda must have last dimension {self.d}")
        if not np.all(np.isfinite(lam)) or np.any(lam < 0):
            raise ContractError("lambda must be finite and non-negative")
        return lam

    def psi(self, lam) -> np.ndarray:
        """``(psi_1(lam), ..., psi_d(lam))``; ``lam`` may carry batch axes."""
        lam = self._check_lambda(lam)
        out = -lam @ self.kappa.T + self.beta * lam ** 2
        for c in range(self.d):
            masses, locs, comp = self._atoms[c]
            if masses.size:
                dot = lam @ locs.T
                term = _phi(dot) + lam[..., c:c + 1] * comp - dot
                out[..., c] += term @ masses
            dens = self.nu[c].density1d
            if dens is not None:
                out[..., c] += np.vectorize(lambda l: self._density_psi(dens, l))(lam[..., 0])
        return out

    def _density_psi(self, dens: StableDensity, lam: float) -> float:
        if lam == 0:
            return 0.0
        near = _quad(lambda r: float(_phi(lam * r)) * dens.density(r), 0.0, 1.0, self.tol, "psi near 0")
        far = _quad(lambda r: math.expm1(-lam * r) * dens.density(r), 1.0, np.inf, self.tol, "psi tail")
        return near + far

    def psi_derivative(self, c: int, alpha, lam) -> float:
        """``D^alpha psi_c(lam)`` for ``alpha != 0``."""
        alpha = as_multi_index(alpha, self.d)
        if not any(alpha):
            raise ContractError("alpha must be nonzero; use psi for the value")
        lam = self._check_lambda(lam)
        n = norm1(alpha)
        out = 0.0
        if n == 1:
            j = alpha.index(1)
            out -= self.kappa[c, j]
            if j == c:
                out += 2 * self.beta[c] * lam[c]
        elif alpha == unit(c, self.d, 2):
            out += 2 * self.beta[c]
        masses, locs, comp = self._atoms[c]
        if masses.size:
            ra = np.prod(locs ** np.array(alpha), axis=1)
            w = masses * np.exp(-(locs @ lam))
            out += (-1) ** n * float(ra @ w)
            if alpha == unit(c, self.d):
                out += float(masses @ comp)
        dens = self.nu[c].density1d
        if dens is not None:
            out += self._density_derivative(dens, n, float(lam[0]))
        return float(out)

    def psi_derivative_many(self, c: int, alpha, lams) -> np.ndarray:
        """``psi_derivative`` at each row of ``lams`` (shape ``(N, d)``)."""
        lams = np.atleast_2d(np.asarray(lams, dtype=float))
        if type(self) is not BranchingMechanism or self.nu[c].density1d is not None:
            return np.array([self.psi_derivative(c, alpha, l) for l in lams])
        alpha = as_multi_index(alpha, self.d)
        if not any(alpha):
            raise ContractError("alpha must be nonzero; use psi for the value")
        lams = self._check_lambda(lams)
        n = norm1(alpha)
        out = np.zeros(lams.shape[0])
        if n == 1:
            j = alpha.index(1)
            out -= self.kappa[c, j]
            if j == c:
                out += 2 * self.beta[c] * lams[:, c]
        elif alpha == unit(c, self.d, 2):
            out += 2 * self.beta[c]
        masses, locs, comp = self._atoms[c]
        if masses.size:
            ra = np.prod(locs ** np.array(alpha), axis=1)
            out += (-1) ** n * (np.exp(-(lams @ locs.T)) @ (masses * ra))
            if alpha == unit(c, self.d):
                out += float(masses @ comp)
        return out

    def _density_derivative(self, dens: StableDensity, p: int, lam: float) -> float:
        if lam <= 0:
            raise DomainError("density jump measure has unbounded support; need lambda > 0 "
                              "in every coordinate where alpha is positive")
        f = dens.density
        if p == 1:
            near = _quad(lambda r: r * (-math.expm1(-lam * r)) * f(r), 0.0, 1.0, self.tol, "D psi near 0")
            far = _quad(lambda r: -r * math.exp(-lam * r) * f(r), 1.0, np.inf, self.tol, "D psi tail")
            return near + far
        mom = _quad(lambda r: r ** p * math.exp(-lam * r) * f(r), 0.0, 1.0, self.tol, "D psi near 0")
        mom += _quad(lambda r: r ** p * math.exp(-lam * r) * f(r), 1.0, np.inf, self.tol, "D psi tail")
        return (-1) ** p * mom

    # -- jets ---------------------------------------------------------------
    def psi_jet(self, space: JetSpace, lam_jets: np.ndarray) -> np.ndarray:
        """Jets of ``psi`` composed with ``lam_jets`` of shape ``(..., d, n)``."""
        out = -np.einsum("cj,...jn->...cn", self.kappa, lam_jets)
        for c in range(self.d):
            lc = lam_jets[..., c, :]
            if self.beta[c]:
                out[..., c, :] += self.beta[c] * space.mul(lc, lc)
            masses, locs, comp = self._atoms[c]
            for m, r, cp in zip(masses, locs, comp):
                dot = np.einsum("j,...jn->...n", r, lam_jets)
                e = space.exp(-dot)
                e[..., 0] = np.expm1(-dot[..., 0])
                out[..., c, :] += m * (e + cp * lc)
            dens = self.nu[c].density1d
            if dens is not None:
                base = lc[..., 0]
                if np.any(base <= 0) and space.max_degree > 0:
                    raise DomainError("stable jets need lambda > 0")
                derivs = dens.psi_part_derivatives(np.maximum(base, 1e-300), space.max_degree)
                out[..., c, :] += space.compose_univariate(derivs, lc)
        return out

    # -- validation / io ----------------------------------------------------
    def integrability(self, c: int) -> float:
        """``int (r_c**2 ^ 1) + sum_{j != c} (r_j ^ 1) nu_c(dr)``."""
        masses, locs, _ = self._atoms[c]
        total = 0.0
        if masses.size:
            w = np.minimum(locs[:, c] ** 2, 1.0)
            others = np.delete(np.minimum(locs, 1.0), c, axis=1).sum(axis=1)
            total += float(masses @ (w + others))
        dens = self.nu[c].density1d
        if dens is not None:
            total += _quad(lambda r: r * r * dens.density(r), 0.0, 1.0, self.tol, "integrability")
            total += _quad(dens.density, 1.0, np.inf, self.tol, "integrability")
        return total

    def validate(self) -> list[tuple[str, bool, str]]:
        checks = []
        off = self.kappa - np.diag(np.diag(self.kappa))
        checks.append(("kappa_offdiag_nonnegative", bool(np.all(off >= 0)), f"min={off.min():.3g}"))
        checks.append(("beta_nonnegative", bool(np.all(self.beta >= 0)), f"min={self.beta.min():.3g}"))
        psi0 = self.psi(np.zeros(self.d))
        checks.append(("psi_at_zero", bool(np.max(np.abs(psi0)) <= 1e-12),
                       f"max|psi(0)|={np.max(np.abs(psi0)):.3g}"))
        for c in range(self.d):
            val = self.integrability(c)
            checks.append((f"integrability_type_{c}", bool(math.isfinite(val)), f"value={val:.6g}"))
        return checks

    def to_json(self) -> dict:
        return {
            "d": self.d,
            "kappa": self.kappa.tolist(),
            "beta": self.beta.tolist(),
            "nu": [m.to_json() for m in self.nu],
        }


class NeveuMechanism(BranchingMechanism):
    """``psi(lam) = lam log lam``.

    Its Lévy–Khintchine data are ``nu(dr) = r**-2 dr`` and ``kappa = gamma - 1``
    (Euler's constant), which the coalescent module uses for merger rates.
    """

    name = "neveu"

    def __init__(self, tol: Tolerance | None = None):
        super().__init__([[EULER_GAMMA - 1.0]], [0.0], tol=tol)

    def bounded_support(self, c: int) -> bool:
        return False

    def jump_density(self, r):
        return np.asarray(r, dtype=float) ** -2.0

    def psi(self, lam):
        lam = self._check_lambda(lam)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(lam > 0, lam * np.log(np.where(lam > 0, lam, 1.0)), 0.0)

    def psi_derivative(self, c, alpha, lam):
        alpha = as_multi_index(alpha, 1)
        p = alpha[0]
        if p == 0:
            raise ContractError("alpha must be nonzero; use psi for the value")
        lam = float(self._check_lambda(lam)[0])
        if lam <= 0:
            raise DomainError("Neveu derivatives need lambda > 0")
        if p == 1:
            return math.log(lam) + 1.0
        return (-1) ** p * math.factorial(p - 2) / lam ** (p - 1)

    def _derivs(self, lam, degree):
        out = np.empty(np.shape(lam) + (degree + 1,))
        out[..., 0] = lam * np.log(lam)
        if degree >= 1:
            out[..., 1] = np.log(lam) + 1.0
        for p in range(2, degree + 1):
            out[..., p] = (-1) ** p * math.factorial(p - 2) / lam ** (p - 1)
        return out

    def psi_jet(self, space, lam_jets):
        base = lam_jets[..., 0, 0]
        if np.any(base <= 0):
            raise DomainError("Neveu jets need lambda > 0")
        out = np.empty_like(lam_jets)
        out[..., 0, :] = space.compose_univariate(self._derivs(base, space.max_degree), lam_jets[..., 0, :])
        return out

    @staticmethod
    def u_closed(t, lam):
        return np.asarray(lam, dtype=float) ** math.exp(-t)

    def integrability(self, c):
        return 2.0  # int_0^1 r^2 r^-2 dr + int_1^inf r^-2 dr

    def to_json(self):
        return {"d": 1, "named": "neveu"}


# -- JSON -------------------------------------------------------------------
_TOP_KEYS = {"d", "kappa", "beta", "nu", "named", "tolerance"}


def mechanism_from_json(doc) -> BranchingMechanism:
    """Build a mechanism from a parsed JSON document (or a JSON string)."""
    if isinstance(doc, str):
        doc = json.loads(doc)
    if not isinstance(doc, dict):
        raise ContractError("mechanism document must be a JSON object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ContractError(f"unknown mechanism keys: {sorted(unknown)}")
    tol = Tolerance(**doc["tolerance"]) if "tolerance" in doc else None
    if doc.get("named") is not None:
        if doc["named"] != "neveu":
            raise ContractError(f"unknown named mechanism {doc['named']!r}")
        return NeveuMechanism(tol=tol)
    try:
        d = int(doc["d"])
        kappa = doc.get("kappa", [[0.0] * d for _ in range(d)])
        beta = doc.get("beta", [0.0] * d)
        nu_docs = doc.get("nu") or [{} for _ in range(d)]
    except KeyError as exc:
        raise ContractError(f"mechanism document is missing {exc}") from None
    nu = []
    for entry in nu_docs:
        extra = set(entry) - {"atoms", "density1d"}
        if extra:
            raise ContractError(f"unknown jump-measure keys: {sorted(extra)}")
        atoms = [Atom(float(a["mass"]), tuple(a["r"])) for a in entry.get("atoms", [])]
        dens = entry.get("density1d")
        if dens is not None:
            if dens.get("family") != "stable":
                raise ContractError(f"unsupported density family {dens.get('family')!r}")
            dens = StableDensity(float(dens["alpha"]), float(dens.get("scale", 1.0)))
        nu.append(JumpMeasure(tuple(atoms), dens))
    mech = BranchingMechanism(kappa, beta, nu, tol=tol)
    if mech.d != d:
        raise ContractError(f"declared d={d} but data has dimension {mech.d}")
    return mech


def load_mechanism(path) -> BranchingMechanism:
    with open(path) as fh:
        return mechanism_from_json(json.load(fh))


def beta_function(a: float, b: float) -> float:
    """``B(a, b)`` through log-gamma."""
    return math.exp(special.gammaln(a) + special.gammaln(b) - special.gammaln(a + b))
