"""Multi-index helpers.

A multi-index is stored as a plain ``tuple`` of non-negative ints.  Types are
0-based throughout the package: type ``c`` of a ``d``-type process is an
integer in ``range(d)``.
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .errors import ContractError

MultiIndex = tuple


def as_multi_index(entries: Iterable[int], d: int | None = None) -> MultiIndex:
    alpha = tuple(int(a) for a in entries)
    if not alpha:
        raise ContractError("a multi-index needs at least one entry")
    if any(a < 0 for a in alpha):
        raise ContractError(f"multi-index entries must be non-negative, got {alpha}")
    if d is not None and len(alpha) != d:
        raise ContractError(f"expected a multi-index of length {d}, got {alpha}")
    return alpha


def unit(i: int, d: int, times: int = 1) -> MultiIndex:
    """``times * e_i`` in dimension ``d``."""
    return tuple(times if j == i else 0 for j in range(d))


def norm1(alpha: Sequence[int]) -> int:
    return int(sum(alpha))


def mi_factorial(alpha: Sequence[int]) -> int:
    return math.prod(math.factorial(a) for a in alpha)


def mi_power(lam, alpha: Sequence[int]):
    """``lam ** alpha`` with the convention ``0 ** 0 == 1``.

    ``lam`` may carry leading batch dimensions; the last axis has length d.
    """
    lam = np.asarray(lam, dtype=float)
    out = np.ones(lam.shape[:-1])
    for i, a in enumerate(alpha):
        if a:
            out = out * lam[..., i] ** a
    return out


def succ(lam: Sequence[float], alpha: Sequence[int]) -> bool:
    """``lam ≻ alpha``: ``lam_i > 0`` wherever ``alpha_i > 0``."""
    return all(l > 0 for l, a in zip(lam, alpha) if a > 0)


def leq(alpha: Sequence[int], beta: Sequence[int]) -> bool:
    return all(a <= b for a, b in zip(alpha, beta))


def sub(alpha: Sequence[int], beta: Sequence[int]) -> MultiIndex:
    return tuple(a - b for a, b in zip(alpha, beta))


def add(alpha: Sequence[int], beta: Sequence[int]) -> MultiIndex:
    return tuple(a + b for a, b in zip(alpha, beta))


@lru_cache(maxsize=None)
def multi_indices(d: int, max_degree: int) -> tuple[MultiIndex, ...]:
    """All multi-indices with ``|alpha| <= max_degree``, graded then lexicographic."""
    out = []
    for deg in range(max_degree + 1):
        for combo in itertools.combinations_with_replacement(range(d), deg):
            alpha = [0] * d
            for i in combo:
                alpha[i] += 1
            out.append(tuple(alpha))
    # combinations_with_replacement yields lexicographic order of sorted combos,
    # which is reverse-lexicographic on exponent vectors; sort within degree.
    out.sort(key=lambda a: (sum(a), tuple(-x for x in a)))
    return tuple(out)


def sub_indices(bound: Sequence[int], include_zero: bool = False) -> list[MultiIndex]:
    """All multi-indices ``alpha <= bound`` componentwise."""
    out = [tuple(a) for a in itertools.product(*(range(b + 1) for b in bound))]
    if not include_zero:
        out = [a for a in out if any(a)]
    return out
