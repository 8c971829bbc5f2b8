"""Local merger rates and the multitype Lambda-coalescent.

``merger_rate`` is the small-time rate at which ``alpha`` sampled lineages
(``alpha_i`` of type ``i``) out of ``k`` find a common type-``c`` parent in a
population of size ``x``:

    sum_{j != c} 1{alpha = e_j} kappa[c, j] x_c / x_j
    + 1{alpha = 2 e_c} 2 beta_c / x_c
    + x_c int s^alpha (1 - s)^(k - alpha) T_x#nu_c(ds),    T_x(r)_j = r_j / (r_j + x_j).

``lambda_coalescent_rate`` is the same expression for abstract data
``(kappa, beta, Q)``, and ``simulate_typed_coalescent`` runs the jump chain.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, special

from .errors import ContractError, DomainError, NumericalError
from .forests import single_event_forest
from .mechanism import BranchingMechanism, NeveuMechanism
from .multiindex import as_multi_index, leq, mi_factorial, mi_power, norm1, sub, unit
from .poissonize import forest_law_P
from .quadrature import QuadratureSpec, integrate_pi_k

RATE_GUARD = 1e12


def log_beta(a: float, b: float) -> float:
    return float(special.gammaln(a) + special.gammaln(b) - special.gammaln(a + b))


# -- measures on [0, 1]^d ---------------------------------------------------------
@dataclass(frozen=True)
class BetaDensity:
    """``scale * s**(a - 1) * (1 - s)**(b - 1) ds`` on ``(0, 1)``; one type only."""

    a: float
    b: float
    scale: float = 1.0

    def moment(self, alpha: int, k: int) -> float:
        """``int s^alpha (1 - s)^(k - alpha)`` against this density."""
        p, q = alpha + self.a, k - alpha + self.b
        if p <= 0 or q <= 0:
            raise DomainError(f"rate integral diverges for alpha={alpha}, k={k}")
        return self.scale * math.exp(log_beta(p, q))

    def moment_quadrature(self, alpha: int, k: int) -> float:
        f = lambda s: self.scale * s ** (alpha + self.a - 1) * (1 - s) ** (k - alpha + self.b - 1)
        return integrate.quad(f, 0.0, 1.0, epsabs=1e-13, epsrel=1e-11, limit=200)[0]


@dataclass(frozen=True)
class RateMeasure:
    """``Q_c``: atoms ``(mass, s)`` in ``[0, 1]^d`` plus an optional 1-d beta density."""

    atoms: tuple = ()
    density: BetaDensity | None = None

    def moment(self, alpha, k) -> float:
        total = 0.0
        for mass, s in self.atoms:
            s = np.asarray(s, dtype=float)
            total += mass * _atom_factor(s, alpha, k)
        if self.density is not None:
            total += self.density.moment(alpha[0], k[0])
        return total


def _atom_factor(s, alpha, k) -> float:
    out = 1.0
    for si, ai, ki in zip(s, alpha, k):
        if ai:
            out *= si ** ai
        if ki - ai:
            out *= (1.0 - si) ** (ki - ai)
    return out


@dataclass(frozen=True)
class RateData:
    """Abstract multitype Lambda-coalescent data: ``kappa``, ``beta`` and ``Q_c``."""

    kappa: np.ndarray
    beta: np.ndarray
    Q: tuple

    @property
    def d(self) -> int:
        return len(self.beta)


def _check_alpha(k, alpha, c, d):
    k = as_multi_index(k, d)
    alpha = as_multi_index(alpha, d)
    if not 0 <= c < d:
        raise ContractError(f"type {c} out of range")
    if norm1(alpha) == 0:
        raise ContractError("alpha must be nonzero")
    if alpha == unit(c, d):
        raise ContractError("alpha = e_c is not a merger event")
    if not leq(alpha, k):
        raise ContractError("need alpha <= k")
    return k, alpha


def lambda_coalescent_rate(data: RateData, k, alpha, c: int) -> float:
    """``lambda^{(c)}_{alpha,k}`` for abstract rate data."""
    k, alpha = _check_alpha(k, alpha, c, data.d)
    rate = 0.0
    if norm1(alpha) == 1:
        j = alpha.index(1)
        rate += float(data.kappa[c][j])
    if alpha == unit(c, data.d, 2):
        rate += 2.0 * float(data.beta[c])
    rate += data.Q[c].moment(alpha, k)
    if rate < 0:
        raise NumericalError(f"negative coalescent rate {rate}")
    return rate


# -- rates from a mechanism ------------------------------------------------------------
@dataclass(frozen=True)
class MergerMeasure:
    """The data of one type-``c`` row of ``Lambda^psi(x, .)``."""

    c: int
    kingman_mass: float
    drift: dict
    atoms: tuple          # (x_c * mass, T_x(r))
    density: BetaDensity | None = None


def _stable_like(mech: BranchingMechanism, c: int):
    """``(index a, scale C)`` when ``nu_c`` has density ``C r^(-1-a)``."""
    if isinstance(mech, NeveuMechanism):
        return 1.0, 1.0
    dens = mech.nu[c].density1d
    if dens is None:
        return None
    return dens.alpha, dens.scale


def _check_x(x, k, d):
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape != (d,) or np.any(x < 0):
        raise ContractError("x must be a non-negative vector of length d")
    if any(k[i] > 0 and x[i] <= 0 for i in range(d)):
        raise DomainError("need x_i > 0 wherever k_i > 0")
    return x


def pushforward(r, x) -> np.ndarray:
    """``T_x(r)_j = r_j / (r_j + x_j)``; coordinates with ``r_j = 0`` map to 0."""
    r = np.asarray(r, dtype=float)
    x = np.asarray(x, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(r > 0, r / (r + x), 0.0)


def merger_measure(mech: BranchingMechanism, x, c: int) -> MergerMeasure:
    d = mech.d
    x = np.asarray(x, dtype=float)
    if x[c] <= 0:
        raise DomainError("need x_c > 0")
    drift = {j: float(mech.kappa[c, j] * x[c] / x[j]) for j in range(d) if j != c and x[j] > 0}
    masses, locs, _ = mech._atoms[c]
    atoms = tuple((float(x[c] * m), tuple(pushforward(r, x))) for m, r in zip(masses, locs))
    dens = None
    sl = _stable_like(mech, c)
    if sl is not None:
        a, C = sl
        # x * T_x#(C r^(-1-a) dr) = C x^(1-a) s^(-1-a) (1-s)^(a-1) ds
        dens = BetaDensity(-a, a, C * x[c] ** (1.0 - a))
    return MergerMeasure(c, float(2 * mech.beta[c] / x[c]), drift, atoms, dens)


def rate_data_from_mechanism(mech: BranchingMechanism, x) -> RateData:
    """The identification ``kappa -> kappa x_c / x_j``, ``beta -> beta / x_c``, ``Q -> x_c T_x#nu_c``."""
    d = mech.d
    x = np.asarray(x, dtype=float)
    kappa = np.zeros((d, d))
    Q = []
    for c in range(d):
        mm = merger_measure(mech, x, c)
        for j, v in mm.drift.items():
            kappa[c, j] = v
        Q.append(RateMeasure(mm.atoms, mm.density))
    return RateData(kappa, mech.beta / x, tuple(Q))


def merger_rate(mech: BranchingMechanism, x, k, alpha, c: int, *, method: str = "exact") -> float:
    """Small-time merger rate from the mechanism.

    ``method="quadrature"`` evaluates the density part in ``r``-space by
    adaptive quadrature instead of the beta-function closed form.
    """
    k, alpha = _check_alpha(k, alpha, c, mech.d)
    x = _check_x(x, k, mech.d)
    d = mech.d
    rate = 0.0
    if norm1(alpha) == 1:
        j = alpha.index(1)
        if x[j] <= 0:
            raise DomainError("type-change rate needs x_j > 0")
        rate += mech.kappa[c, j] * x[c] / x[j]
    if alpha == unit(c, d, 2):
        rate += 2.0 * mech.beta[c] / x[c]
    masses, locs, _ = mech._atoms[c]
    for m, r in zip(masses, locs):
        rate += x[c] * m * _atom_factor(pushforward(r, x), alpha, k)
    sl = _stable_like(mech, c)
    if sl is not None:
        a, C = sl
        xa, ka = x[0], k[0]
        p = alpha[0]
        if method == "exact":
            rate += C * xa ** (1.0 - a) * math.exp(log_beta(p - a, ka - p + a))
        elif method == "quadrature":
            f = lambda r: (r / (xa + r)) ** p * (xa / (xa + r)) ** (ka - p) * C * r ** (-1.0 - a)
            rate += xa * (integrate.quad(f, 0.0, 1.0, epsabs=1e-14, epsrel=1e-12, limit=200)[0]
                          + integrate.quad(f, 1.0, np.inf, epsabs=1e-14, epsrel=1e-12, limit=200)[0])
        else:
            raise ContractError(f"unknown method {method!r}")
    if rate < 0:
        raise NumericalError(f"negative merger rate {rate}")
    return float(rate)


def lambda_psi_rate(mech: BranchingMechanism, x: float, k: int, j: int) -> float:
    """``int s^(j-2) (1-s)^(k-j) Lambda^psi(x, ds)`` for one-type mechanisms."""
    if mech.d != 1:
        raise ContractError("Lambda^psi is one-dimensional")
    if not 2 <= j <= k:
        raise ContractError("need 2 <= j <= k")
    rate = 2.0 * mech.beta[0] / x if j == 2 else 0.0
    masses, locs, _ = mech._atoms[0]
    for m, r in zip(masses, locs[:, 0]):
        s = r / (x + r)
        rate += x * m * s ** 2 * s ** (j - 2) * (1 - s) ** (k - j)
    sl = _stable_like(mech, 0)
    if sl is not None:
        a, C = sl
        # x s^2 T_x#nu has density C x^(1-a) s^(1-a) (1-s)^(a-1)
        rate += C * x ** (1.0 - a) * math.exp(log_beta(j - a, k - j + a))
    return float(rate)


# -- named fixtures ------------------------------------------------------------------
def kingman_rates(beta: float = 0.5) -> RateData:
    return RateData(np.zeros((1, 1)), np.array([beta]), (RateMeasure(),))


def bolthausen_sznitman_rates() -> RateData:
    """``Lambda`` = Lebesgue on ``[0, 1]``, i.e. ``Q(ds) = s^-2 ds``."""
    return RateData(np.zeros((1, 1)), np.zeros(1), (RateMeasure((), BetaDensity(-1.0, 1.0)),))


def beta_coalescent_rates(a: float) -> RateData:
    """``Lambda = Beta(2 - a, a)``, i.e. ``Q(ds) = s^(-1-a) (1-s)^(a-1) ds / B(2-a, a)``."""
    if not 0 < a < 2:
        raise ContractError("need 0 < a < 2")
    return RateData(np.zeros((1, 1)), np.zeros(1),
                    (RateMeasure((), BetaDensity(-a, a, math.exp(-log_beta(2 - a, a)))),))


# -- small-time verification -----------------------------------------------------------
@dataclass(frozen=True)
class SmallTimeRow:
    t: float
    ratio: float
    limit_integral: float
    limit_closed: float

    @property
    def gap(self) -> float:
        return abs(self.ratio - self.limit_closed)

    @property
    def relative_gap(self) -> float:
        return self.gap / max(abs(self.limit_closed), 1e-300)


def small_time_limit_integral(mech: BranchingMechanism, x, k, alpha, c: int,
                              spec: QuadratureSpec | None = None) -> float:
    """``(-1)^|alpha| x^(k - alpha + e_c) / k! int pi^k lam^k e^{-<x,lam>} D^alpha psi_c``."""
    k, alpha = _check_alpha(k, alpha, c, mech.d)
    x = _check_x(x, k, mech.d)
    expo = tuple(a - b + (i == c) for i, (a, b) in enumerate(zip(k, alpha)))
    pref = (-1) ** norm1(alpha) * float(mi_power(x, expo)) / mi_factorial(k)
    if spec is None:
        scale = tuple(max(ki, 1) / xi if xi > 0 else 1.0 for ki, xi in zip(k, x))
        spec = QuadratureSpec(scale=scale)
    f = lambda lams: mi_power(lams, k) * np.exp(-(lams @ x)) * mech.psi_derivative_many(c, alpha, lams)
    return pref * integrate_pi_k(k, f, spec).value


def small_time_verify(mech: BranchingMechanism, x, k, alpha, c: int, t_grid: Sequence[float],
                      spec: QuadratureSpec | None = None) -> list[SmallTimeRow]:
    """``(1/t) P(For = H^k_{c,alpha})`` on ``t_grid`` next to both forms of the limit."""
    k, alpha = _check_alpha(k, alpha, c, mech.d)
    x = _check_x(x, k, mech.d)
    lim_int = small_time_limit_integral(mech, x, k, alpha, c, spec)
    lim_closed = merger_rate(mech, x, k, alpha, c)
    H = single_event_forest(k, c, alpha)
    rows = []
    for t in t_grid:
        if t <= 0:
            raise ContractError("t-grid entries must be positive")
        p = forest_law_P(H, [0.0, float(t)], x, mech, spec).value
        rows.append(SmallTimeRow(float(t), p / t, lim_int, lim_closed))
    return rows


def gap_halving_ok(rows: Sequence[SmallTimeRow], floor: float = 1e-8, slack: float = 0.05) -> bool:
    """Each halving of ``t`` at least (about) halves the gap, or the gap is below ``floor``.

    ``floor`` is relative to the limit; ``slack`` absorbs second-order terms.
    """
    rows = sorted(rows, key=lambda r: -r.t)
    for big, small in zip(rows, rows[1:]):
        if small.relative_gap <= floor:
            continue
        factor = small.t / big.t
        if small.gap > big.gap * factor * (1 + slack):
            return False
    return True


# -- simulator -------------------------------------------------------------------------
@dataclass(frozen=True)
class CoalescentEvent:
    run: int
    time: float
    kind: str
    c: int
    alpha: tuple
    blocks_before: int
    blocks_after: int


@dataclass
class TypedPartition:
    blocks: list = field(default_factory=list)  # (type, frozenset of (i, j) labels)
    clock: float = 0.0

    @classmethod
    def singletons(cls, k) -> "TypedPartition":
        return cls([(i, frozenset({(i, j)})) for i, ki in enumerate(k) for j in range(ki)])

    def census(self, d: int) -> tuple:
        n = [0] * d
        for t, _ in self.blocks:
            n[t] += 1
        return tuple(n)


class RateTable:
    """Cached event tables ``[(alpha, c, total_rate)]`` per block census."""

    def __init__(self, rate: Callable[[tuple, tuple, int], float], d: int):
        self.rate = rate
        self.d = d
        self._cache: dict = {}

    @classmethod
    def from_data(cls, data: RateData) -> "RateTable":
        return cls(lambda n, a, c: lambda_coalescent_rate(data, n, a, c), data.d)

    @classmethod
    def from_mechanism(cls, mech: BranchingMechanism, x) -> "RateTable":
        return cls(lambda n, a, c: merger_rate(mech, x, n, a, c), mech.d)

    def events(self, n: tuple):
        if n not in self._cache:
            rows = []
            for alpha in itertools.product(*(range(v + 1) for v in n)):
                if not any(alpha):
                    continue
                ways = math.prod(math.comb(v, a) for v, a in zip(n, alpha))
                for c in range(self.d):
                    if alpha == unit(c, self.d):
                        continue
                    r = ways * self.rate(n, alpha, c)
                    if not math.isfinite(r) or r > RATE_GUARD:
                        raise NumericalError(f"rate {r} for alpha={alpha}, c={c} exceeds the guard")
                    if r > 0:
                        rows.append((alpha, c, r))
            self._cache[n] = rows
        return self._cache[n]

    def first_event_law(self, n: tuple) -> dict:
        rows = self.events(tuple(n))
        total = sum(r for _, _, r in rows)
        return {(a, c): r / total for a, c, r in rows}


def _run_once(table: RateTable, k, rng, run: int, horizon: float, max_events: float):
    state = TypedPartition.singletons(k)
    log = []
    d = table.d
    while len(state.blocks) > 1 and len(log) < max_events:
        n = state.census(d)
        rows = table.events(n)
        if not rows:
            break
        rates = np.array([r for _, _, r in rows])
        total = rates.sum()
        dt = rng.exponential(1.0 / total)
        if state.clock + dt > horizon:
            break
        state.clock += dt
        idx = int(np.searchsorted(np.cumsum(rates), rng.random() * total, side="right"))
        idx = min(idx, len(rows) - 1)
        alpha, c, _ = rows[idx]
        chosen = []
        for i in range(d):
            if alpha[i]:
                pool = [b for b, (t, _) in enumerate(state.blocks) if t == i]
                chosen.extend(rng.choice(pool, size=alpha[i], replace=False).tolist())
        members = frozenset().union(*(state.blocks[b][1] for b in chosen))
        before = len(state.blocks)
        keep = [blk for b, blk in enumerate(state.blocks) if b not in set(chosen)]
        state.blocks = keep + [(c, members)]
        kind = "merge" if norm1(alpha) >= 2 else "type-change"
        log.append(CoalescentEvent(run, state.clock, kind, c, tuple(alpha), before, len(state.blocks)))
    return log


def simulate_typed_coalescent(table: RateTable, k, runs: int, seed: int, *,
                              horizon: float = math.inf,
                              max_events: float = math.inf) -> list[CoalescentEvent]:
    """Run the jump chain ``runs`` times; run ``i`` uses stream ``spawn(runs)[i]``.

    Each run stops at one block, at ``horizon``, or after ``max_events`` events.
    """
    k = as_multi_index(k, table.d)
    if runs < 1:
        raise ContractError("runs must be positive")
    streams = np.random.SeedSequence(int(seed)).spawn(runs)
    out = []
    for run, ss in enumerate(streams):
        out.extend(_run_once(table, k, np.random.default_rng(ss), run, horizon, max_events))
    return out


def first_event_frequencies(events: Sequence[CoalescentEvent], runs: int) -> dict:
    counts: dict = {}
    seen = set()
    for ev in events:
        if ev.run in seen:
            continue
        seen.add(ev.run)
        key = (ev.alpha, ev.c)
        counts[key] = counts.get(key, 0) + 1
    return {key: v / runs for key, v in counts.items()}
