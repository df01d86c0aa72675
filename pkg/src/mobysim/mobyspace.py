"""Visit-probability patterns and the geometry of the space they live in.

A node's pattern has one coordinate per location: the fraction of its
connected time, within a window, spent attached to that location. Patterns
of full dimension lie on the hyperplane where coordinates sum to one.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .trace import Trace


class PatternUnavailable(ValueError):
    """The node has no connected time in the requested window."""


@dataclass(frozen=True)
class PatternWindow:
    t0: int
    t1: int

    def __post_init__(self):
        if not self.t0 < self.t1:
            raise ValueError(f"empty pattern window [{self.t0}, {self.t1})")


def _window(window) -> PatternWindow:
    return window if isinstance(window, PatternWindow) else PatternWindow(*window)


@dataclass(frozen=True)
class MobyPoint:
    """Sparse point: ``coords`` maps location id to probability (zeros omitted)."""

    coords: Mapping[int, float]
    dimension: int
    truncated: bool = False
    total: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for loc, c in self.coords.items():
            if not 0 <= loc < self.dimension:
                raise ValueError(f"location {loc} outside dimension {self.dimension}")
            if not 0.0 <= c <= 1.0:
                raise ValueError(f"coordinate {c} for location {loc} outside [0, 1]")
        total = math.fsum(self.coords.values())
        if self.truncated:
            if total > 1 + 1e-9:
                raise ValueError(f"truncated point sums to {total} > 1")
        elif abs(total - 1) > 1e-9:
            raise ValueError(f"coordinates sum to {total}, not 1 (pass truncated=True for partial points)")
        object.__setattr__(self, "total", total)

    @classmethod
    def from_dense(cls, values: Iterable[float], truncated: bool = False) -> "MobyPoint":
        values = np.asarray(values, dtype=float)
        return cls({int(i): float(values[i]) for i in np.flatnonzero(values)}, len(values), truncated)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dimension)
        for loc, c in self.coords.items():
            out[loc] = c
        return out

    @property
    def support(self) -> frozenset[int]:
        return frozenset(loc for loc, c in self.coords.items() if c > 0)


def compute_pattern(trace: Trace, node: int, window) -> MobyPoint:
    """Fraction of ``node``'s connected time spent at each location in ``window``."""
    w = _window(window)
    idx = trace.session_indices(node)
    secs = np.minimum(trace.end[idx], w.t1) - np.maximum(trace.start[idx], w.t0)
    keep = secs > 0
    if not keep.any():
        raise PatternUnavailable(f"node {node} has no connected time in [{w.t0}, {w.t1})")
    per_loc: dict[int, int] = {}
    for loc, s in zip(trace.location[idx][keep], secs[keep]):
        per_loc[int(loc)] = per_loc.get(int(loc), 0) + int(s)
    total = sum(per_loc.values())
    return MobyPoint({loc: s / total for loc, s in sorted(per_loc.items())}, trace.location_count)


def pattern_matrix(trace: Trace, window) -> tuple[np.ndarray, np.ndarray]:
    """Dense patterns of every node, shape ``(node_count, location_count)``.

    Returns the matrix and a boolean mask of nodes that have a pattern;
    rows of nodes without one are all zero.
    """
    w = _window(window)
    secs = np.minimum(trace.end, w.t1) - np.maximum(trace.start, w.t0)
    keep = secs > 0
    flat = trace.node[keep] * trace.location_count + trace.location[keep]
    occupancy = np.bincount(flat, weights=secs[keep], minlength=trace.node_count * trace.location_count)
    occupancy = occupancy.reshape(trace.node_count, trace.location_count)
    totals = occupancy.sum(axis=1)
    has = totals > 0
    matrix = np.zeros_like(occupancy)
    matrix[has] = occupancy[has] / totals[has, None]
    return matrix, has


def distance(a: MobyPoint, b: MobyPoint) -> float:
    """Euclidean distance between two points of the same dimension."""
    if a.dimension != b.dimension:
        raise ValueError(f"dimension mismatch: {a.dimension} vs {b.dimension}")
    keys = set(a.coords) | set(b.coords)
    return math.sqrt(math.fsum((a.coords.get(k, 0.0) - b.coords.get(k, 0.0)) ** 2 for k in keys))


def relative_entropy(p: MobyPoint) -> float:
    """Shannon entropy of ``p`` normalised by ``ln`` of the full dimension."""
    if p.truncated:
        raise ValueError("relative entropy is undefined for truncated points")
    if p.dimension < 2:
        raise ValueError("relative entropy needs a dimension of at least 2")
    h = -math.fsum(c * math.log(c) for c in p.coords.values() if c > 0)
    return min(1.0, max(0.0, h / math.log(p.dimension)))


def relative_entropies(matrix: np.ndarray) -> np.ndarray:
    """Row-wise :func:`relative_entropy` of a dense pattern matrix."""
    n = matrix.shape[1]
    if n < 2:
        raise ValueError("relative entropy needs a dimension of at least 2")
    # same summation as the scalar version so bin edges classify identically
    out = np.empty(matrix.shape[0])
    for i, row in enumerate(matrix):
        c = row[row > 0]
        out[i] = -math.fsum((c * np.log(c)).tolist()) / math.log(n)
    return np.clip(out, 0.0, 1.0)


def truncate(p: MobyPoint, l: int) -> MobyPoint:
    """Keep the ``l`` largest coordinates; ties go to the lower location id.

    The result is not renormalised.
    """
    if l < 1:
        raise ValueError("l must be >= 1")
    if l >= p.dimension:
        return p
    ranked = sorted(p.coords.items(), key=lambda kv: (-kv[1], kv[0]))[:l]
    return MobyPoint(dict(sorted(ranked)), p.dimension, truncated=True)


def truncate_matrix(matrix: np.ndarray, l: int | None) -> np.ndarray:
    """Row-wise :func:`truncate` of a dense pattern matrix."""
    if l is None or l >= matrix.shape[1]:
        return matrix
    if l < 1:
        raise ValueError("l must be >= 1")
    order = np.argsort(-matrix, axis=1, kind="stable")
    out = np.zeros_like(matrix)
    rows = np.arange(matrix.shape[0])[:, None]
    out[rows, order[:, :l]] = matrix[rows, order[:, :l]]
    return out


def prediction_error(p_learn: MobyPoint, p_route: MobyPoint, n: int | None = None) -> float:
    """Distance between a learnt and an observed pattern, divided by ``sqrt(n)``."""
    d = distance(p_learn, p_route)
    return d / math.sqrt(p_learn.dimension if n is None else n)


def pairwise_distances(points: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Euclidean distances between every row of ``points`` and of ``targets``."""
    # explicit differences: the dot-product expansion cancels badly near ties
    out = np.empty((len(points), len(targets)))
    for j, t in enumerate(targets):
        out[:, j] = np.sqrt(((points - t) ** 2).sum(axis=1))
    return out


def write_patterns(path, patterns: Mapping[int, MobyPoint]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["node_id", "location_id", "probability"])
        for node in sorted(patterns):
            for loc, c in sorted(patterns[node].coords.items()):
                w.writerow([node, loc, repr(float(c))])


def read_patterns(path, dimension: int) -> dict[int, MobyPoint]:
    rows: dict[int, dict[int, float]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            rows.setdefault(int(rec["node_id"]), {})[int(rec["location_id"])] = float(rec["probability"])
    return {node: MobyPoint(coords, dimension, truncated=math.fsum(coords.values()) < 1 - 1e-9)
            for node, coords in rows.items()}
