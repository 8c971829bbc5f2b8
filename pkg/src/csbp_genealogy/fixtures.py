"""Named mechanisms and populations shared by the CLI, tests and demos."""

from __future__ import annotations

import json
from pathlib import Path

from .errors import ContractError
from .mechanism import (Atom, BranchingMechanism, JumpMeasure, NeveuMechanism, StableDensity,
                        mechanism_from_json)


def feller(beta: float = 0.5) -> BranchingMechanism:
    return BranchingMechanism.feller([beta])


def feller2() -> BranchingMechanism:
    """Two types, Feller diffusion with cross-type drift."""
    return BranchingMechanism([[-0.4, 0.3], [0.2, 0.0]], [0.5, 1.0])


def feller2_independent() -> BranchingMechanism:
    return BranchingMechanism.feller([0.5, 1.0])


def atom2() -> BranchingMechanism:
    """Two types, drift, diffusion and one jump atom per type."""
    return BranchingMechanism(
        [[-0.3, 0.5], [0.2, 0.1]], [0.5, 1.0],
        [JumpMeasure((Atom(1.0, (0.5, 0.3)),)), JumpMeasure((Atom(2.0, (0.2, 1.5)),))])


def feller3() -> BranchingMechanism:
    return BranchingMechanism([[-0.2, 0.3, 0.0], [0.1, 0.0, 0.4], [0.2, 0.0, 0.1]], [0.5, 1.0, 0.25])


def atom3() -> BranchingMechanism:
    """Three types; the last one branches only by jumps."""
    return BranchingMechanism(
        [[-0.2, 0.3, 0.0], [0.1, 0.0, 0.4], [0.2, 0.0, 0.1]], [0.5, 1.0, 0.0],
        [JumpMeasure((Atom(1.0, (0.5, 0.0, 0.3)),)), JumpMeasure(()),
         JumpMeasure((Atom(0.5, (0.2, 0.4, 1.5)), Atom(1.0, (0.0, 0.0, 0.7))))])


def atom1() -> BranchingMechanism:
    """One type with a single jump atom."""
    return BranchingMechanism([[0.0]], [0.5], [JumpMeasure((Atom(1.0, (0.5,)),))])


def stable(alpha: float = 1.5) -> BranchingMechanism:
    return BranchingMechanism([[0.0]], [0.0], [JumpMeasure((), StableDensity(alpha))])


MECHANISMS = {
    "feller": feller,
    "feller2": feller2,
    "feller2-independent": feller2_independent,
    "feller3": feller3,
    "atom1": atom1,
    "atom2": atom2,
    "atom3": atom3,
    "stable": stable,
    "neveu": NeveuMechanism,
}


def resolve_mechanism(ref: str) -> BranchingMechanism:
    """A fixture name (``feller``, ``feller:0.25``, ``stable:1.7``), a JSON file or inline JSON."""
    ref = ref.strip()
    if ref.startswith("{"):
        return mechanism_from_json(ref)
    name, _, arg = ref.partition(":")
    if name in MECHANISMS:
        factory = MECHANISMS[name]
        return factory(float(arg)) if arg else factory()
    path = Path(ref)
    if path.is_file():
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ContractError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
        return mechanism_from_json(doc)
    raise ContractError(f"unknown mechanism {ref!r}; use a file or one of {sorted(MECHANISMS)}")
