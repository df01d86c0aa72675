"""Co-location oracle over a node subset of a trace.

Two nodes are in contact while attached to the same location. Presence is
sampled on a time-step grid anchored at the trace span's start: a node is
present at grid instant ``g`` when one of its sessions satisfies
``start <= g < end``. Queries at an off-grid time use the grid instant at or
before it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .trace import Trace


@dataclass(frozen=True)
class ContactEvent:
    time: int
    location: int
    arrivals: frozenset[int]
    departures: frozenset[int]


@dataclass(frozen=True, eq=False)
class OccupancyIndex:
    subset: frozenset[int]
    time_step: int
    origin: int
    span: tuple[int, int]
    location_count: int
    # grid-snapped presence intervals, one row per (merged) visit, sorted by start
    node: np.ndarray
    location: np.ndarray
    start: np.ndarray
    end: np.ndarray
    change_times: np.ndarray
    _node_rows: dict  # node -> row indices ordered by start
    _loc_rows: dict  # location -> row indices ordered by start

    def snap(self, t: float) -> int:
        """Grid instant at or before ``t``."""
        return int(self.origin + ((int(np.floor(t)) - self.origin) // self.time_step) * self.time_step)

    def location_of(self, node: int, t: float) -> int | None:
        if node not in self.subset:
            raise KeyError(f"node {node} is not in the indexed subset")
        g = self.snap(t)
        rows = self._node_rows.get(node)
        if rows is None:
            return None
        i = int(np.searchsorted(self.start[rows], g, side="right")) - 1
        if i >= 0 and self.end[rows[i]] > g:
            return int(self.location[rows[i]])
        return None

    def occupants(self, location: int, t: float) -> frozenset[int]:
        g = self.snap(t)
        rows = self._loc_rows.get(location)
        if rows is None:
            return frozenset()
        i = int(np.searchsorted(self.start[rows], g, side="right"))
        live = rows[:i][self.end[rows[:i]] > g]
        return frozenset(int(n) for n in self.node[live])

    def neighbors(self, node: int, t: float) -> frozenset[int]:
        loc = self.location_of(node, t)
        if loc is None:
            return frozenset()
        return self.occupants(loc, t) - {node}


def _ceil_grid(t: np.ndarray, origin: int, step: int) -> np.ndarray:
    return origin + -((origin - t) // step) * step


def build_index(trace: Trace, subset: Iterable[int], time_step: int = 1) -> OccupancyIndex:
    subset = frozenset(int(n) for n in subset)
    if not subset:
        raise ValueError("cannot index an empty node subset")
    if time_step < 1:
        raise ValueError("time_step must be >= 1")
    unknown = [n for n in subset if not 0 <= n < trace.node_count]
    if unknown:
        raise ValueError(f"nodes not in trace: {sorted(unknown)[:5]}")

    origin = trace.span[0]
    mask = np.isin(trace.node, np.fromiter(subset, dtype=np.int64))
    node, loc = trace.node[mask], trace.location[mask]
    start = _ceil_grid(trace.start[mask], origin, time_step)
    end = _ceil_grid(trace.end[mask], origin, time_step)
    keep = end > start
    node, loc, start, end = node[keep], loc[keep], start[keep], end[keep]

    # join back-to-back sessions at the same location into one visit
    order = np.lexsort((start, node))
    node, loc, start, end = node[order], loc[order], start[order], end[order]
    cont = np.ones(len(node), dtype=bool)
    if len(node) > 1:
        joined = (node[1:] == node[:-1]) & (loc[1:] == loc[:-1]) & (start[1:] == end[:-1])
        cont[1:] = ~joined
    first = np.flatnonzero(cont)
    last = np.append(first[1:], len(node))[: len(first)] - 1
    node, loc, start, end = node[first], loc[first], start[first], end[last]

    order = np.lexsort((node, start))
    node, loc, start, end = node[order], loc[order], start[order], end[order]

    def _rows(keys):
        order = np.argsort(keys, kind="stable")
        uniq, first_pos = np.unique(keys[order], return_index=True)
        return {int(k): rows for k, rows in zip(uniq, np.split(order, first_pos[1:]))}

    return OccupancyIndex(
        subset=subset,
        time_step=int(time_step),
        origin=int(origin),
        span=trace.span,
        location_count=trace.location_count,
        node=node, location=loc, start=start, end=end,
        change_times=np.unique(np.concatenate([start, end])),
        _node_rows=_rows(node),
        _loc_rows=_rows(loc),
    )


def neighbors(index: OccupancyIndex, node: int, t: float) -> frozenset[int]:
    """Subset nodes sharing ``node``'s location at ``t``, excluding ``node``."""
    return index.neighbors(node, t)


def contact_events(index: OccupancyIndex) -> Iterator[ContactEvent]:
    """Arrivals and departures per (time, location), in time then location order."""
    times = np.concatenate([index.start, index.end])
    locs = np.concatenate([index.location, index.location])
    nodes = np.concatenate([index.node, index.node])
    kind = np.concatenate([np.ones(len(index.start), dtype=np.int8), np.zeros(len(index.end), dtype=np.int8)])
    order = np.lexsort((nodes, locs, times))
    times, locs, nodes, kind = times[order], locs[order], nodes[order], kind[order]
    bounds = np.flatnonzero((np.diff(times) != 0) | (np.diff(locs) != 0)) + 1
    for lo, hi in zip(np.r_[0, bounds], np.r_[bounds, len(times)]):
        if lo == hi:
            continue
        k = kind[lo:hi]
        yield ContactEvent(
            time=int(times[lo]),
            location=int(locs[lo]),
            arrivals=frozenset(int(n) for n in nodes[lo:hi][k == 1]),
            departures=frozenset(int(n) for n in nodes[lo:hi][k == 0]),
        )
