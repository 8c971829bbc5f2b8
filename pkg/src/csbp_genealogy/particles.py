"""Branching particle systems as an independent Monte Carlo oracle.

Particles carry mass ``1/n``.  For a type-``c`` particle:

* quadratic part: at rate ``2 beta_c n`` it splits in two or dies, each with
  probability 1/2;
* ``kappa[c, j]`` (``j != c``): at rate ``kappa[c, j]`` it gives birth to one
  type-``j`` particle;
* ``kappa[c, c]``: an extra birth at rate ``kappa[c, c]`` if positive, a death
  at rate ``-kappa[c, c]`` if negative;
* an atom of mass ``m`` at ``r``: at rate ``m / n`` it gives birth to
  ``round(n r_j)`` type-``j`` particles, and the compensator becomes a death
  rate ``m r_c 1{r_c <= 1}``.

The rescaled mass converges to the CSBP as ``n`` grows.  Nothing here reuses
the analytic formulas it is meant to check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ContractError, NumericalError
from .mechanism import BranchingMechanism, NeveuMechanism

MAX_PARTICLES = 2_000_000


def check_supported(mech: BranchingMechanism):
    if isinstance(mech, NeveuMechanism) or any(m.density1d is not None for m in mech.nu):
        raise ContractError("the particle oracle needs finite-activity jump measures")
    if mech.d > 2:
        raise ContractError("the particle oracle supports d <= 2")


@dataclass
class Terminal:
    """Population at time ``T``: one entry per living particle.

    ``roots`` holds the time-0 ancestor of each particle; ``snapshots`` maps a
    requested mesh time to the id of each particle's ancestor alive then.
    """

    types: np.ndarray
    roots: np.ndarray
    snapshots: dict = field(default_factory=dict)
    n: int = 1

    def mass(self, d: int) -> np.ndarray:
        return np.bincount(self.types, minlength=d) / self.n


def _per_particle_tables(mech, n):
    """Per type, a list of ``(rate, births per type, dies)`` actions."""
    d = mech.d
    eye = np.eye(d, dtype=int)
    none = np.zeros(d, dtype=int)
    tables = []
    for c in range(d):
        rows = []
        if mech.beta[c] > 0:
            b = mech.beta[c] * n  # split and death each at rate beta n
            rows.append((b, eye[c], False))
            rows.append((b, none, True))
        for j in range(d):
            k = mech.kappa[c, j]
            if k > 0:
                rows.append((k, eye[j], False))
            elif j == c and k < 0:
                rows.append((-k, none, True))
        masses, locs, comp = mech._atoms[c]
        for m, r, cp in zip(masses, locs, comp):
            rows.append((m / n, np.rint(n * np.asarray(r)).astype(int), False))
            if cp > 0:
                rows.append((m * cp, none, True))
        tables.append(rows)
    return tables


def simulate(mech: BranchingMechanism, x, T: float, n: int, seed=None, *, rng=None,
             mesh: Sequence[float] = (), max_particles: int = MAX_PARTICLES) -> Terminal:
    """Event-driven simulation from ``round(n x_i)`` type-``i`` particles."""
    check_supported(mech)
    d = mech.d
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape != (d,) or np.any(x < 0):
        raise ContractError("x must be a non-negative vector of length d")
    if T < 0:
        raise ContractError("T must be non-negative")
    rng = rng if rng is not None else np.random.default_rng(seed)
    mesh = sorted({float(t) for t in mesh if 0 < t <= T})
    tables = _per_particle_tables(mech, n)
    type_rate = [sum(r for r, _, _ in rows) for rows in tables]
    cum_rates = [np.cumsum([r for r, _, _ in rows]) for rows in tables]
    births = [[tuple(int(v) for v in b) for _, b, _ in rows] for rows in tables]
    dies = [[dd for _, _, dd in rows] for rows in tables]

    ptype: list = []
    root: list = []
    anc = [[] for _ in mesh]  # ancestor id at each mesh time
    members = [[] for _ in range(d)]
    slot: list = []
    free: list = []
    for i, cnt in enumerate(np.rint(n * x).astype(int)):
        for _ in range(cnt):
            pid = len(ptype)
            ptype.append(i)
            root.append(pid)
            for col in anc:
                col.append(-1)
            slot.append(len(members[i]))
            members[i].append(pid)
    alive = len(ptype)

    t, next_mesh = 0.0, 0
    while True:
        weights = [len(members[c]) * type_rate[c] for c in range(d)]
        total = sum(weights)
        if total <= 0:
            break
        t += rng.exponential(1.0 / total)
        while next_mesh < len(mesh) and mesh[next_mesh] <= min(t, T):
            col = anc[next_mesh]
            for ms in members:
                for pid in ms:
                    col[pid] = pid
            next_mesh += 1
        if t > T:
            break
        u = rng.random() * total
        c = 0
        while c < d - 1 and u >= weights[c]:
            u -= weights[c]
            c += 1
        pid = members[c][int(rng.integers(len(members[c])))]
        e = int(np.searchsorted(cum_rates[c], rng.random() * cum_rates[c][-1], side="right"))
        e = min(e, len(cum_rates[c]) - 1)
        for j, cnt in enumerate(births[c][e]):
            for _ in range(cnt):
                if free:
                    new = free.pop()
                    ptype[new], root[new] = j, root[pid]
                    for col in anc:
                        col[new] = col[pid]
                    slot[new] = len(members[j])
                else:
                    new = len(ptype)
                    ptype.append(j)
                    root.append(root[pid])
                    for col in anc:
                        col.append(col[pid])
                    slot.append(len(members[j]))
                members[j].append(new)
                alive += 1
        if dies[c][e]:
            p = slot[pid]
            last = members[c].pop()
            if last != pid:
                members[c][p] = last
                slot[last] = p
            free.append(pid)
            alive -= 1
        if alive > max_particles:
            raise NumericalError(f"particle count exceeded {max_particles}")
    ids = np.array(sorted(pid for ms in members for pid in ms), dtype=np.int64)
    ptype_a = np.asarray(ptype, dtype=np.int64)
    roots = np.asarray(root, dtype=np.int64)[ids] if len(ids) else np.zeros(0, dtype=np.int64)
    snaps = {s: np.asarray(col, dtype=np.int64)[ids] for s, col in zip(mesh, anc)}
    if np.any(roots < 0):
        raise NumericalError("a terminal particle has no time-0 ancestor")
    return Terminal(ptype_a[ids] if len(ids) else np.zeros(0, dtype=np.int64), roots, snaps, n)


# -- exact sampler for one-type critical binary branching ---------------------------------
def feller_family_sizes(beta: float, x: float, T: float, n: int, rng, replicas: int) -> np.ndarray:
    """Family sizes at ``T`` of the ``round(n x)`` founders; shape ``(replicas, founders)``.

    Each founder starts a linear birth-death process with birth and death rates
    ``beta n``.  At ``T`` it is extinct with probability ``bT / (1 + bT)`` and
    otherwise geometric on ``{1, 2, ...}`` with success probability ``1 / (1 + bT)``.
    """
    b = beta * n
    founders = int(round(n * x))
    q = 1.0 / (1.0 + b * T)
    alive = rng.random((replicas, founders)) < q
    sizes = rng.geometric(q, size=(replicas, founders))
    return np.where(alive, sizes, 0)


def _same_family_indicator(sizes: np.ndarray, k: int, rng) -> np.ndarray:
    """Draw ``k`` distinct particles per row and test for a common founder."""
    total = sizes.sum(axis=1)
    ok = total >= k
    out = np.zeros(sizes.shape[0], dtype=bool)
    cum = np.cumsum(sizes, axis=1)
    for r in np.flatnonzero(ok):
        picks = rng.choice(int(total[r]), size=k, replace=False)
        fam = np.searchsorted(cum[r], picks, side="right")
        out[r] = np.all(fam == fam[0])
    return out


@dataclass(frozen=True)
class MRCARow:
    n: int
    estimate: float
    stderr: float
    replicas: int


@dataclass(frozen=True)
class MRCAEstimate:
    rows: tuple
    intercept: float
    bias_coefficient: float  # C in estimate(n) ~ intercept + C / n

    def allowance(self, n: int) -> float:
        return abs(self.bias_coefficient) / n


def _is_one_type_feller(mech):
    return (mech.d == 1 and not isinstance(mech, NeveuMechanism) and mech.nu[0].is_zero
            and mech.kappa[0, 0] == 0 and mech.beta[0] > 0)


def estimate_mrca(mech: BranchingMechanism, x, T: float, k, n_grid: Sequence[int], replicas: int,
                  seed: int, *, method: str = "auto", chunk: int = 20000) -> MRCAEstimate:
    """Chance that a uniform ``k``-sample at ``T`` has one time-0 ancestor, jointly with survival.

    ``method="families"`` uses the exact family-size sampler (one-type critical
    binary branching only); ``"events"`` runs the event-driven simulator.
    """
    check_supported(mech)
    k = tuple(int(v) for v in np.atleast_1d(k))
    if len(k) != mech.d or sum(k) < 1:
        raise ContractError("k must be a nonzero multi-index of length d")
    if method == "auto":
        method = "families" if _is_one_type_feller(mech) else "events"
    streams = np.random.SeedSequence(int(seed)).spawn(len(n_grid))
    rows = []
    for n, ss in zip(n_grid, streams):
        rng = np.random.default_rng(ss)
        hits = 0
        if method == "families":
            if not _is_one_type_feller(mech):
                raise ContractError("the family sampler needs one-type critical binary branching")
            done = 0
            while done < replicas:
                r = min(chunk, replicas - done)
                sizes = feller_family_sizes(mech.beta[0], float(np.ravel(x)[0]), T, n, rng, r)
                hits += int(_same_family_indicator(sizes, k[0], rng).sum())
                done += r
        elif method == "events":
            for _ in range(replicas):
                term = simulate(mech, x, T, n, rng=rng)
                hits += int(_sample_same_root(term, k, rng))
        else:
            raise ContractError(f"unknown method {method!r}")
        p = hits / replicas
        rows.append(MRCARow(int(n), p, math.sqrt(max(p * (1 - p), 1e-300) / replicas), replicas))
    if len(rows) >= 2:
        A = np.column_stack([np.ones(len(rows)), 1.0 / np.array([r.n for r in rows], dtype=float)])
        w = 1.0 / np.array([max(r.stderr, 1e-12) for r in rows])
        coef, *_ = np.linalg.lstsq(A * w[:, None], np.array([r.estimate for r in rows]) * w, rcond=None)
        intercept, C = float(coef[0]), float(coef[1])
    else:
        intercept, C = rows[0].estimate, 0.0
    return MRCAEstimate(tuple(rows), intercept, C)


def _sample_same_root(term: Terminal, k, rng) -> bool:
    chosen = []
    for i, ki in enumerate(k):
        pool = np.flatnonzero(term.types == i)
        if len(pool) < ki:
            return False
        if ki:
            chosen.extend(rng.choice(pool, size=ki, replace=False).tolist())
    r = term.roots[chosen]
    return bool(np.all(r == r[0]))


def mass_samples(mech: BranchingMechanism, x, T: float, n: int, replicas: int, seed: int) -> np.ndarray:
    """Terminal masses, shape ``(replicas, d)``."""
    check_supported(mech)
    if _is_one_type_feller(mech):
        rng = np.random.default_rng(seed)
        return (feller_family_sizes(mech.beta[0], float(np.ravel(x)[0]), T, n, rng, replicas)
                .sum(axis=1, keepdims=True) / n)
    streams = np.random.SeedSequence(int(seed)).spawn(replicas)
    return np.array([simulate(mech, x, T, n, rng=np.random.default_rng(s)).mass(mech.d)
                     for s in streams])
