"""Labelled ancestral forests, their energies and exact laws.

A forest in ``H^k(m)`` is stored as a chain of set partitions of the leaf set
``[k]``: generation ``l`` vertices are the blocks of ``P_l`` (their sampled
descendants), ``P_m`` is all singletons, and each ``P_l`` coarsens
``P_{l+1}``.  Internal vertices carry a type; a leaf's type is fixed by its
label ``(i, j)``.

Leaves are indexed ``0..|k|-1`` in the order ``(0,0), (0,1), ..., (1,0), ...``.
Within a generation blocks are ordered by their smallest leaf.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np

from .errors import ContractError, NumericalError, SizeCapError
from .jets import jet_space
from .laplace import SolutionProvider, outdegree_rate
from .multiindex import as_multi_index, mi_factorial, mi_power, norm1

DEFAULT_CAP = 10 ** 6
ENERGY_TOL = 1e-9


# -- combinatorics -----------------------------------------------------------
def set_partitions(n: int) -> Iterator[tuple[tuple[int, ...], ...]]:
    """Set partitions of ``range(n)`` in restricted-growth-string order."""
    if n == 0:
        yield ()
        return

    def rec(i, rgs, nblocks):
        if i == n:
            blocks = [[] for _ in range(nblocks)]
            for item, b in enumerate(rgs):
                blocks[b].append(item)
            yield tuple(tuple(b) for b in blocks)
            return
        for b in range(nblocks + 1):
            rgs.append(b)
            yield from rec(i + 1, rgs, max(nblocks, b + 1))
            rgs.pop()

    yield from rec(0, [], 0)


@lru_cache(maxsize=None)
def stirling2(n: int, j: int) -> int:
    if n == j:
        return 1
    if j == 0 or j > n:
        return 0
    return j * stirling2(n - 1, j) + stirling2(n - 1, j - 1)


def bell(n: int) -> int:
    return sum(stirling2(n, j) for j in range(n + 1))


def count_forests(k: Sequence[int], m: int, d: int) -> int:
    """``|H^k(m)|``: chains of coarsenings with free internal types."""

    @lru_cache(maxsize=None)
    def c(n, g):
        if g == 0:
            return 1
        return sum(stirling2(n, j) * d ** j * c(j, g - 1) for j in range(1, n + 1))

    return c(norm1(k), m)


def leaf_labels(k: Sequence[int]) -> list[tuple[int, int]]:
    return [(i, j) for i, ki in enumerate(k) for j in range(ki)]


def _chains(nleaves: int, m: int):
    """Untyped forests as tuples ``(P_0, ..., P_m)`` of block tuples."""
    leaves = tuple((i,) for i in range(nleaves))

    def rec(blocks, remaining):
        if remaining == 0:
            yield (blocks,)
            return
        for part in set_partitions(len(blocks)):
            merged = tuple(tuple(sorted(itertools.chain.from_iterable(blocks[b] for b in grp)))
                           for grp in part)
            merged = tuple(sorted(merged))
            for rest in rec(merged, remaining - 1):
                yield rest + (blocks,)

    yield from rec(leaves, m)


# -- the forest type -----------------------------------------------------------
@dataclass(frozen=True)
class ForestStats:
    rootdegree: tuple
    outdegrees: tuple  # per generation 0..m-1, one multi-index per vertex


@dataclass(frozen=True)
class LabeledForest:
    k: tuple
    d: int
    blocks: tuple  # generation -> tuple of leaf-index blocks
    types: tuple   # generation -> tuple of vertex types

    @property
    def m(self) -> int:
        return len(self.blocks) - 1

    @property
    def leaves(self):
        return leaf_labels(self.k)

    def parents(self, gen: int) -> tuple:
        """Parent index (into generation ``gen - 1``) of each vertex of ``gen``."""
        if gen == 0:
            return tuple(None for _ in self.blocks[0])
        up = self.blocks[gen - 1]
        owner = {leaf: p for p, blk in enumerate(up) for leaf in blk}
        return tuple(owner[blk[0]] for blk in self.blocks[gen])

    def children(self, gen: int) -> list[list[int]]:
        kids = [[] for _ in self.blocks[gen]]
        for c, p in enumerate(self.parents(gen + 1)):
            kids[p].append(c)
        return kids

    def stats(self) -> ForestStats:
        rho = [0] * self.d
        for t in self.types[0]:
            rho[t] += 1
        outs = []
        for g in range(self.m):
            row = []
            for kids in self.children(g):
                mu = [0] * self.d
                for c in kids:
                    mu[self.types[g + 1][c]] += 1
                row.append(tuple(mu))
            outs.append(tuple(row))
        return ForestStats(tuple(rho), tuple(outs))

    def validate(self):
        leaves = self.leaves
        if self.blocks[-1] != tuple((i,) for i in range(len(leaves))):
            raise ContractError("last generation must consist of the leaves")
        if tuple(self.types[-1]) != tuple(i for i, _ in leaves):
            raise ContractError("leaf types must match their labels")
        for g in range(self.m):
            flat = sorted(itertools.chain.from_iterable(self.blocks[g]))
            if flat != list(range(len(leaves))):
                raise ContractError(f"generation {g} does not partition the leaves")
            up = {leaf: p for p, blk in enumerate(self.blocks[g]) for leaf in blk}
            for blk in self.blocks[g + 1]:
                if len({up[leaf] for leaf in blk}) != 1:
                    raise ContractError("a vertex has leaves under two different parents")
            if len(self.types[g]) != len(self.blocks[g]):
                raise ContractError("one type per vertex is required")
            if any(not 0 <= t < self.d for t in self.types[g]):
                raise ContractError("vertex type out of range")
        return True

    # text format: "1:0,0;2:0,1 | 0:1;1:0,1;2:0,0 | 0.0,0.1"
    def to_text(self) -> str:
        par = ";".join(f"{g}:" + ",".join(str(p) for p in self.parents(g))
                       for g in range(1, self.m + 1))
        typ = ";".join(f"{g}:" + ",".join(str(t) for t in self.types[g])
                       for g in range(self.m + 1))
        lab = ",".join(f"{i}.{j}" for i, j in self.leaves)
        return f"{par} | {typ} | {lab}"

    @classmethod
    def from_text(cls, text: str, d: int) -> "LabeledForest":
        try:
            par_s, typ_s, lab_s = (part.strip() for part in text.split("|"))
            labels = [tuple(int(v) for v in item.split(".")) for item in lab_s.split(",") if item]
            types = [tuple(int(v) for v in seg.split(":")[1].split(",")) for seg in typ_s.split(";")]
            parents = [tuple(int(v) for v in seg.split(":")[1].split(",")) for seg in par_s.split(";")]
        except (ValueError, IndexError) as exc:
            raise ContractError(f"malformed forest text: {text!r}") from exc
        k = [0] * d
        for i, _ in labels:
            k[i] += 1
        m = len(types) - 1
        if len(parents) != m:
            raise ContractError("forest text needs one parent row per non-root generation")
        blocks = [tuple((i,) for i in range(len(labels)))]
        for g in range(m, 0, -1):
            nup = len(types[g - 1])
            up = [[] for _ in range(nup)]
            for c, p in enumerate(parents[g - 1]):
                up[p].extend(blocks[0][c])
            blocks.insert(0, tuple(tuple(sorted(b)) for b in up))
        forest = cls(tuple(k), d, tuple(blocks), tuple(types))
        forest.validate()
        return forest


def trivial_forest(k: Sequence[int], m: int) -> LabeledForest:
    """All sticks: no coalescence, every ancestor has its leaf's type."""
    k = tuple(k)
    labels = leaf_labels(k)
    blk = tuple((i,) for i in range(len(labels)))
    types = tuple(i for i, _ in labels)
    return LabeledForest(k, len(k), (blk,) * (m + 1), (types,) * (m + 1))


def single_event_forest(k: Sequence[int], c: int, alpha: Sequence[int]) -> LabeledForest:
    """``H^k_{c,alpha}`` with ``m = 1``.

    The first ``alpha_i`` leaves of each type merge into one root of type ``c``;
    every other leaf is a stick.
    """
    k = tuple(k)
    alpha = tuple(alpha)
    if any(a > b for a, b in zip(alpha, k)) or norm1(alpha) == 0:
        raise ContractError("need 0 != alpha <= k")
    if norm1(alpha) == 1 and alpha[c] == 1:
        raise ContractError("alpha = e_c is a stick, not a merger event")
    labels = leaf_labels(k)
    merged = tuple(idx for idx, (i, j) in enumerate(labels) if j < alpha[i])
    roots = [(merged, c)] + [((idx,), i) for idx, (i, j) in enumerate(labels) if j >= alpha[i]]
    roots.sort(key=lambda r: r[0][0])
    leaves = tuple((i,) for i in range(len(labels)))
    return LabeledForest(k, len(k), (tuple(r[0] for r in roots), leaves),
                         (tuple(r[1] for r in roots), tuple(i for i, _ in labels)))


def enumerate_forests(k: Sequence[int], m: int, d: int | None = None, *, cap: int = DEFAULT_CAP):
    """Stream every element of ``H^k(m)`` once, in canonical order."""
    k = as_multi_index(k, d)
    d = len(k)
    _check_enumeration(k, m, d, cap)
    labels = leaf_labels(k)
    leaf_types = tuple(i for i, _ in labels)
    for chain in _chains(len(labels), m):
        sizes = [len(chain[g]) for g in range(m)]
        for assign in itertools.product(range(d), repeat=sum(sizes)):
            types, pos = [], 0
            for s in sizes:
                types.append(tuple(assign[pos:pos + s]))
                pos += s
            types.append(leaf_types)
            yield LabeledForest(k, d, chain, tuple(types))


def _check_enumeration(k, m, d, cap):
    if norm1(k) == 0:
        raise ContractError("k must be nonzero")
    if m < 1:
        raise ContractError("m must be at least 1")
    bound = count_forests(k, m, d)
    if bound > cap:
        raise SizeCapError(f"|H^k(m)| = {bound} exceeds the cap {cap}", bound=bound, cap=cap)
    return bound


# -- energies ------------------------------------------------------------------
def _check_mesh(mesh):
    mesh = np.asarray(mesh, dtype=float)
    if mesh.ndim != 1 or len(mesh) < 2 or mesh[0] != 0 or np.any(np.diff(mesh) <= 0):
        raise ContractError("mesh must start at 0 and be strictly increasing")
    return mesh


def generation_tables(provider: SolutionProvider, mesh, lams, degree: int):
    """Derivative tables ``D^mu u_c(dt_l, u(T - t_{l+1}, lam))``.

    Returns an array of shape ``(B, m, d, n)`` for ``lams`` of shape ``(B, d)``,
    with ``n`` indexing ``jet_space(d, degree).indices``.
    """
    mesh = _check_mesh(mesh)
    lams = np.atleast_2d(np.asarray(lams, dtype=float))
    T = mesh[-1]
    m = len(mesh) - 1
    space = jet_space(provider.mechanism.d, degree)
    out = np.empty((lams.shape[0], m, provider.mechanism.d, space.n))
    for g in range(m):
        base = lams if g == m - 1 else provider.values(T - mesh[g + 1], lams)
        jets = provider.jets(mesh[g + 1] - mesh[g], np.maximum(base, 0.0), degree)
        out[:, g] = space.derivatives(jets)
    return out


def _sign_and_log(values):
    with np.errstate(divide="ignore"):
        return np.sign(values), np.log(np.abs(values))


def forest_energy_batch(H: LabeledForest, tables, x) -> np.ndarray:
    """Energy of one forest at many ``lam`` given ``generation_tables`` output."""
    x = np.asarray(x, dtype=float)
    space = jet_space(H.d, _table_degree(tables, H.d))
    st = H.stats()
    n = norm1(H.k)
    if max(norm1(mu) for row in st.outdegrees for mu in row) > space.max_degree:
        raise ContractError("derivative tables do not reach the forest's outdegrees")
    e = np.full(tables.shape[0], (-1.0) ** (n - norm1(st.rootdegree)) * float(mi_power(x, st.rootdegree)))
    for g, row in enumerate(st.outdegrees):
        for v, mu in enumerate(row):
            e = e * tables[:, g, H.types[g][v], space.position[mu]]
    return e


def _table_degree(tables, d):
    n = tables.shape[-1]
    deg = 0
    while len(jet_space(d, deg).indices) < n:
        deg += 1
    if len(jet_space(d, deg).indices) != n:
        raise ContractError("tables have an unexpected number of jet entries")
    return deg


def _clamp(e, scale, tol=ENERGY_TOL):
    if np.any(e < -tol * (1.0 + scale)):
        raise NumericalError(f"negative forest energy {np.min(e):.3g}")
    return np.maximum(e, 0.0)


def forest_energy(H: LabeledForest, mesh, x, lam, provider: SolutionProvider) -> float:
    H.validate()
    mesh = _check_mesh(mesh)
    if len(mesh) - 1 != H.m:
        raise ContractError(f"mesh has {len(mesh) - 1} steps, forest has {H.m} generations")
    if provider.max_degree < norm1(H.k):
        raise ContractError(f"need jet degree {norm1(H.k)}, provider has {provider.max_degree}")
    tables = generation_tables(provider, mesh, np.asarray(lam, float)[None, :], norm1(H.k))
    e = forest_energy_batch(H, tables, x)
    return float(_clamp(e, abs(e[0]))[0])


def _chain_energy_tensor(chain, leaf_types, table, x, d, space):
    """Energies of every typing of one untyped chain, C-ordered by vertex."""
    m = len(chain) - 1
    sizes = [len(chain[g]) for g in range(m)]
    offsets = np.cumsum([0] + sizes)
    V = int(offsets[-1])
    logs = np.zeros((d,) * V)
    sign = np.ones((d,) * V)
    logx_sign, logx = _sign_and_log(x)
    for r in range(sizes[0]):
        shape = [1] * V
        shape[r] = d
        logs = logs + logx.reshape(shape)
        sign = sign * logx_sign.reshape(shape)
    for g in range(m):
        up = chain[g]
        owner = {leaf: p for p, blk in enumerate(up) for leaf in blk}
        kids = [[] for _ in up]
        for c, blk in enumerate(chain[g + 1]):
            kids[owner[blk[0]]].append(c)
        for v, ch in enumerate(kids):
            if g + 1 == m:
                mu = [0] * d
                for c in ch:
                    mu[leaf_types[c]] += 1
                col = table[g, :, space.position[tuple(mu)]]
                shape = [1] * V
                shape[offsets[g] + v] = d
                s, lg = _sign_and_log(col)
            else:
                q = len(ch)
                f = np.empty((d,) + (d,) * q)
                for combo in itertools.product(range(d), repeat=q):
                    mu = [0] * d
                    for t in combo:
                        mu[t] += 1
                    f[(slice(None),) + combo] = table[g, :, space.position[tuple(mu)]]
                shape = [1] * V
                shape[offsets[g] + v] = d
                for c in ch:
                    shape[offsets[g + 1] + c] = d
                s, lg = _sign_and_log(f)
            logs = logs + lg.reshape(shape)
            sign = sign * s.reshape(shape)
    n = len(leaf_types)
    base_sign = (-1.0) ** (n - sizes[0])
    with np.errstate(invalid="ignore"):
        return np.where(sign == 0, 0.0, base_sign * sign * np.exp(logs))


def all_energies(k, mesh, x, lam, provider: SolutionProvider, *, cap: int = DEFAULT_CAP):
    """Energies of every forest of ``H^k(m)`` in ``enumerate_forests`` order."""
    k = as_multi_index(k)
    d = len(k)
    mesh = _check_mesh(mesh)
    m = len(mesh) - 1
    _check_enumeration(k, m, d, cap)
    n = norm1(k)
    if provider.max_degree < n:
        raise ContractError(f"need jet degree {n}, provider has {provider.max_degree}")
    table = generation_tables(provider, mesh, np.asarray(lam, float)[None, :], n)[0]
    space = jet_space(d, n)
    leaf_types = [i for i, _ in leaf_labels(k)]
    x = np.asarray(x, dtype=float)
    parts = [_chain_energy_tensor(chain, leaf_types, table, x, d, space).ravel()
             for chain in _chains(n, m)]
    e = np.concatenate(parts)
    return _clamp(e, float(np.max(np.abs(e))) if e.size else 0.0)


def composite_derivative(k, T, x, lam, provider: SolutionProvider) -> float:
    """``(-1)^|k| D^k exp(-<x, u(T, .)>) / exp(-<x, u(T, lam)>)`` from jets."""
    k = as_multi_index(k)
    n = norm1(k)
    space = jet_space(len(k), n)
    jets = provider.jets(T, np.asarray(lam, float)[None, :], n)[0]
    expo = -np.einsum("i,in->n", np.asarray(x, float), jets)
    expo[0] = 0.0
    return (-1) ** n * float(space.derivative(space.exp(expo), k))


@dataclass(frozen=True)
class PartitionResult:
    enumerated: float
    jet: float
    count: int

    @property
    def relative_gap(self) -> float:
        return abs(self.enumerated - self.jet) / max(abs(self.jet), 1e-300)


def partition_function(k, mesh, x, lam, provider: SolutionProvider, *,
                       cap: int = DEFAULT_CAP) -> PartitionResult:
    """The forest partition function, both as an enumerated sum and from jets."""
    mesh = _check_mesh(mesh)
    e = all_energies(k, mesh, x, lam, provider, cap=cap)
    jet = composite_derivative(k, mesh[-1], x, lam, provider)
    return PartitionResult(float(math.fsum(e)), jet, int(e.size))


def q_prefactor(k, T, x, lam, provider: SolutionProvider) -> float:
    """``lam^k / k! * exp(-<x, u(T, lam)>)``."""
    k = as_multi_index(k)
    u = provider.values(T, np.asarray(lam, float)[None, :])[0]
    return float(mi_power(np.asarray(lam, float), k)) / mi_factorial(k) * math.exp(-float(np.dot(x, u)))


def forest_law_Q(H: LabeledForest, mesh, x, lam, provider: SolutionProvider) -> float:
    """``Q(For = H, S = k)`` under Poisson sampling at rate ``lam``."""
    mesh = _check_mesh(mesh)
    return q_prefactor(H.k, mesh[-1], x, lam, provider) * forest_energy(H, mesh, x, lam, provider)


def conditional_forest_law(k, mesh, x, lam, provider: SolutionProvider, *, cap: int = DEFAULT_CAP):
    """``E(H) / sum_I E(I)`` for every forest, in canonical order."""
    e = all_energies(k, mesh, x, lam, provider, cap=cap)
    return e / math.fsum(e)


# -- marked Galton–Watson description --------------------------------------------
class MarkedProcessLaw:
    """Root law and outdegree kernel of the marked ancestral process."""

    def __init__(self, provider: SolutionProvider, x, lam, T: float):
        self.provider = provider
        self.x = np.asarray(x, dtype=float)
        self.lam = np.asarray(lam, dtype=float)
        self.T = float(T)

    def root_means(self) -> np.ndarray:
        return self.x * self.provider.values(self.T, self.lam[None, :])[0]

    def root_probability(self, counts) -> float:
        means = self.root_means()
        counts = np.asarray(counts)
        return float(np.prod([math.exp(-mu) * mu ** c / math.factorial(int(c))
                              for mu, c in zip(means, counts)]))

    def transition(self, s: float, t: float, i: int, alpha) -> float:
        """Probability that a marked type-``i`` vertex at ``s`` has outdegree ``alpha`` at ``t``."""
        if not 0 <= s <= t <= self.T:
            raise ContractError("need 0 <= s <= t <= T")
        alpha = as_multi_index(alpha, len(self.lam))
        base = self.provider.values(self.T - t, self.lam[None, :])[0]
        denom = float(self.provider.values(self.T - s, self.lam[None, :])[0][i])
        if norm1(alpha) == 0:
            return 0.0
        if s == t:
            return float(alpha == tuple(int(j == i) for j in range(len(alpha))))
        sol = self.provider.solution(t - s, base)
        return outdegree_rate(sol, i, alpha) / denom

    def row_sum(self, s: float, t: float, i: int, truncation: int) -> float:
        space = jet_space(len(self.lam), truncation)
        return float(sum(self.transition(s, t, i, a) for a in space.indices if 0 < norm1(a)))
