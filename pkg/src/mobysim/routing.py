"""Routing policies, each a pure function from a :class:`PolicyContext` to a decision.

The engine owns all mutable state (custody, copies, handling marks) and
hands a policy a read-only view of what it needs at a contact opportunity.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable, Iterable, Mapping

import numpy as np

if TYPE_CHECKING:
    from .engine import Bundle


@dataclass(frozen=True)
class Keep:
    blind: bool = False  # no destination pattern was available


@dataclass(frozen=True)
class Forward:
    target: int


@dataclass(frozen=True)
class Replicate:
    targets: frozenset[int]


Decision = Keep | Forward | Replicate
KEEP = Keep()
KEEP_BLIND = Keep(blind=True)


class PatternTable:
    """Distances to destinations, backed by a dense pattern matrix.

    Nodes flagged absent in ``available`` have no pattern; distances from or
    to them are ``None``.
    """

    def __init__(self, matrix: np.ndarray, available: np.ndarray):
        self.matrix = matrix
        self.available = np.asarray(available, dtype=bool)
        self._columns: dict[int, np.ndarray] = {}

    def has(self, node: int) -> bool:
        return bool(self.available[node])

    def _column(self, dest: int) -> np.ndarray:
        col = self._columns.get(dest)
        if col is None:
            col = np.sqrt(((self.matrix - self.matrix[dest]) ** 2).sum(axis=1))
            col[~self.available] = np.inf
            self._columns[dest] = col
        return col

    def distance(self, node: int, dest: int) -> float | None:
        if not (self.available[node] and self.available[dest]):
            return None
        return float(self._column(dest)[node])


class PreferenceLists:
    """One random total order of the nodes per destination, most preferred first."""

    def __init__(self, orders: Mapping[int, Iterable[int]]):
        self.orders = {d: tuple(int(n) for n in o) for d, o in orders.items()}
        self._rank = {d: {n: r for r, n in enumerate(o)} for d, o in self.orders.items()}

    @classmethod
    def draw(cls, nodes: Iterable[int], destinations: Iterable[int], rng: np.random.Generator):
        pool = np.array(sorted(nodes), dtype=np.int64)
        return cls({int(d): rng.permutation(pool).tolist() for d in sorted(set(destinations))})

    def rank(self, dest: int, node: int) -> int:
        try:
            return self._rank[dest][node]
        except KeyError:
            raise KeyError(f"no preference list entry for node {node} towards {dest}") from None


@dataclass(frozen=True, slots=True)
class PolicyContext:
    custodian: int
    bundle: "Bundle"
    neighbors: frozenset[int]
    patterns: PatternTable | None = None
    preference: PreferenceLists | None = None
    visit_epoch: int = 0
    rng: np.random.Generator | None = None
    holders: frozenset[int] = frozenset()  # nodes with a copy (epidemic)
    marks: frozenset | set = frozenset()  # (bundle id, node, visit epoch) handled by potato


def epidemic_decide(ctx: PolicyContext) -> Decision:
    targets = ctx.neighbors - ctx.holders
    return Replicate(frozenset(targets)) if targets else KEEP


def opportunistic_decide(ctx: PolicyContext) -> Decision:
    return Forward(ctx.bundle.destination) if ctx.bundle.destination in ctx.neighbors else KEEP


def random_decide(ctx: PolicyContext) -> Decision:
    dest = ctx.bundle.destination
    if dest in ctx.neighbors:
        return Forward(dest)
    if not ctx.neighbors:
        return KEEP
    if ctx.preference is None:
        raise RuntimeError("random policy needs preference lists")
    best = min(ctx.neighbors, key=lambda n: ctx.preference.rank(dest, n))
    if ctx.preference.rank(dest, best) < ctx.preference.rank(dest, ctx.custodian):
        return Forward(best)
    return KEEP


def potato_decide(ctx: PolicyContext) -> Decision:
    dest = ctx.bundle.destination
    if dest in ctx.neighbors:
        return Forward(dest)
    if not ctx.neighbors or (ctx.bundle.id, ctx.custodian, ctx.visit_epoch) in ctx.marks:
        return KEEP
    choices = sorted(ctx.neighbors)
    return Forward(choices[int(ctx.rng.integers(len(choices)))])


def mobyspace_decide(ctx: PolicyContext) -> Decision:
    """Hand the bundle to the neighbor whose pattern is strictly closest to the destination's."""
    dest = ctx.bundle.destination
    if dest in ctx.neighbors:
        return Forward(dest)
    if ctx.patterns is None:
        raise RuntimeError("mobyspace policy needs pattern access")
    if not ctx.patterns.has(dest):
        return KEEP_BLIND
    mine = ctx.patterns.distance(ctx.custodian, dest)
    best, best_d = None, np.inf if mine is None else mine
    for n in sorted(ctx.neighbors):
        d = ctx.patterns.distance(n, dest)
        if d is not None and d < best_d:
            best, best_d = n, d
    return KEEP if best is None else Forward(best)


POLICIES: dict[str, Callable[[PolicyContext], Decision]] = {
    "epidemic": epidemic_decide,
    "opportunistic": opportunistic_decide,
    "random": random_decide,
    "potato": potato_decide,
    "mobyspace": mobyspace_decide,
}


def get_policy(name: str) -> Callable[[PolicyContext], Decision]:
    try:
        return POLICIES[name]
    except KeyError:
        raise ValueError(f"unknown policy {name!r}; expected one of {', '.join(POLICIES)}") from None
