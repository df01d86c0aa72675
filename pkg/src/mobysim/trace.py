"""Session traces: ingestion, synthetic generation, statistics and user selection.

A trace is a set of sessions, each being one node attached to one location
over a half-open interval ``[start, end)`` of integer seconds since the trace
epoch. Sessions of a single node never overlap.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, NamedTuple, TextIO

import numpy as np

from ._rng import stream

DAY = 86_400
WEEK = 7 * DAY


class TraceFormatError(ValueError):
    """Raised for unreadable session input."""


class Session(NamedTuple):
    node: int
    location: int
    start: int
    end: int


@dataclass(frozen=True)
class IngestReport:
    normalized: int = 0  # sessions truncated (or dropped) to remove overlaps
    rejected: int = 0  # lines with end <= start


def _frozen(a, dtype=np.int64) -> np.ndarray:
    a = np.array(a, dtype=dtype)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Trace:
    """Immutable column store of sessions sorted by start time.

    ``node_labels[i]`` / ``location_labels[j]`` give the identifiers that
    dense node ``i`` / location ``j`` carried in the source data.
    """

    node: np.ndarray
    location: np.ndarray
    start: np.ndarray
    end: np.ndarray
    node_count: int
    location_count: int
    span: tuple[int, int]
    node_labels: np.ndarray = field(repr=False, default=None)
    location_labels: np.ndarray = field(repr=False, default=None)
    report: IngestReport = IngestReport()

    def __len__(self) -> int:
        return len(self.start)

    @property
    def sessions(self) -> list[Session]:
        return [Session(*map(int, row)) for row in zip(self.node, self.location, self.start, self.end)]

    @cached_property
    def _by_node(self) -> tuple[np.ndarray, np.ndarray]:
        order = np.lexsort((self.start, self.node))
        offsets = np.searchsorted(self.node[order], np.arange(self.node_count + 1))
        return order, offsets

    def session_indices(self, node: int) -> np.ndarray:
        """Indices (into the column arrays) of ``node``'s sessions, by start."""
        order, offsets = self._by_node
        return order[offsets[node]:offsets[node + 1]]

    @cached_property
    def active_nodes(self) -> np.ndarray:
        return _frozen(np.unique(self.node))

    @property
    def days(self) -> range:
        """Absolute day numbers intersecting the span."""
        return range(self.span[0] // DAY, (self.span[1] - 1) // DAY + 1)

    def restrict(self, t0: int, t1: int) -> "Trace":
        """Sessions clipped to ``[t0, t1)``; identifiers and counts are kept."""
        s = np.maximum(self.start, t0)
        e = np.minimum(self.end, t1)
        keep = e > s
        return Trace(
            node=_frozen(self.node[keep]),
            location=_frozen(self.location[keep]),
            start=_frozen(s[keep]),
            end=_frozen(e[keep]),
            node_count=self.node_count,
            location_count=self.location_count,
            span=(int(t0), int(t1)),
            node_labels=self.node_labels,
            location_labels=self.location_labels,
        )


def _assemble(node, location, start, end, node_count=None, location_count=None,
              rejected=0, relabel=True, span=None) -> Trace:
    node = np.asarray(node, dtype=np.int64)
    location = np.asarray(location, dtype=np.int64)
    start = np.asarray(start, dtype=np.int64)
    end = np.asarray(end, dtype=np.int64).copy()
    if relabel:
        node_labels, node = np.unique(node, return_inverse=True)
        location_labels, location = np.unique(location, return_inverse=True)
        node_count, location_count = len(node_labels), len(location_labels)
    else:
        node_labels = np.arange(node_count)
        location_labels = np.arange(location_count)

    # A later session supersedes the earlier one it overlaps.
    order = np.lexsort((end, start, node))
    node, location, start, end = node[order], location[order], start[order], end[order]
    same = node[:-1] == node[1:]
    overlap = same & (end[:-1] > start[1:])
    end[:-1][overlap] = start[1:][overlap]
    keep = end > start

    node, location, start, end = node[keep], location[keep], start[keep], end[keep]
    order = np.lexsort((node, start))
    if span is None:
        span = (int(start.min()), int(end.max()))
    return Trace(
        node=_frozen(node[order]),
        location=_frozen(location[order]),
        start=_frozen(start[order]),
        end=_frozen(end[order]),
        node_count=int(node_count),
        location_count=int(location_count),
        span=span,
        node_labels=_frozen(node_labels),
        location_labels=_frozen(location_labels),
        report=IngestReport(normalized=int(overlap.sum()), rejected=rejected),
    )


def parse_sessions(text: str | Iterable[str]) -> Trace:
    """Parse ``node_id,location_id,start,end`` lines into a :class:`Trace`.

    ``#`` comments and blank lines are skipped, except a ``# span: t0 t1``
    comment, which sets the trace span when it encloses every session.
    Lines with ``end <= start``
    are dropped and counted in ``trace.report.rejected``; overlapping
    sessions of one node are resolved by truncating the earlier one, counted
    in ``trace.report.normalized``.
    """
    lines = io.StringIO(text) if isinstance(text, str) else text
    cols: list[list[int]] = [[], [], [], []]
    rejected = 0
    declared = None
    for lineno, raw in enumerate(lines, 1):
        if raw.startswith("# span:"):
            try:
                a, b = raw[len("# span:"):].split()
                declared = (int(a), int(b))
            except ValueError:
                raise TraceFormatError(f"line {lineno}: bad span comment {raw.rstrip()!r}") from None
            continue
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 4:
            raise TraceFormatError(f"line {lineno}: expected 4 fields, got {len(parts)}: {raw.rstrip()!r}")
        try:
            node, loc, start, end = (int(p) for p in parts)
        except ValueError:
            raise TraceFormatError(f"line {lineno}: non-integer field in {raw.rstrip()!r}") from None
        if end <= start:
            rejected += 1
            continue
        for col, v in zip(cols, (node, loc, start, end)):
            col.append(v)
    if not cols[0]:
        raise TraceFormatError("no sessions in input")
    if declared is not None and (declared[0] > min(cols[2]) or declared[1] < max(cols[3])):
        declared = None
    return _assemble(*cols, rejected=rejected, span=declared)


def read_sessions(path: str | os.PathLike) -> Trace:
    with open(path, encoding="utf-8") as fh:
        return parse_sessions(fh)


def write_sessions(trace: Trace, out: str | os.PathLike | TextIO) -> None:
    """Write a trace in session CSV form, using the original identifiers."""
    def _write(fh):
        fh.write("# node_id,location_id,start,end\n")
        fh.write(f"# span: {trace.span[0]} {trace.span[1]}\n")
        nl, ll = trace.node_labels, trace.location_labels
        for n, l, s, e in zip(trace.node, trace.location, trace.start, trace.end):
            fh.write(f"{nl[n]},{ll[l]},{s},{e}\n")

    if hasattr(out, "write"):
        _write(out)
    else:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            _write(fh)


# -- synthetic traces -------------------------------------------------------

@dataclass(frozen=True)
class SyntheticConfig:
    """Parameters of the synthetic session generator.

    Each node ranks the locations by a private random permutation and picks
    the location of rank ``r`` for each session with probability
    proportional to ``r ** -zipf_exponent``. Arrivals are Poisson with
    ``sessions_per_day`` mean per node (modulated by a day/night cycle when
    ``diurnal``); durations are exponential and are cut at the next arrival.
    ``activity_spread`` is the log-normal sigma of a per-node, mean-one
    multiplier on the arrival rate; 0 makes all nodes equally active.
    """

    node_count: int = 200
    location_count: int = 50
    duration: int = 45 * DAY
    zipf_exponent: float = 2.0
    mean_session_duration: float = 2 * 3600.0
    sessions_per_day: float = 4.0
    diurnal: bool = False
    seed: int = 0
    activity_spread: float = 0.0

    def __post_init__(self):
        if self.node_count < 1 or self.location_count < 1:
            raise ValueError("node_count and location_count must be >= 1")
        if self.duration <= 0 or self.mean_session_duration <= 0 or self.sessions_per_day <= 0:
            raise ValueError("duration, mean_session_duration and sessions_per_day must be > 0")
        if self.zipf_exponent <= 0:
            raise ValueError("zipf_exponent must be > 0")
        if self.activity_spread < 0:
            raise ValueError("activity_spread must be >= 0")


def generate_synthetic(config: SyntheticConfig) -> Trace:
    rng = stream(config.seed, "synthetic")
    n_loc, horizon = config.location_count, int(config.duration)
    weights = np.arange(1, n_loc + 1, dtype=float) ** -config.zipf_exponent
    weights /= weights.sum()
    sigma = config.activity_spread
    multipliers = np.exp(sigma * rng.standard_normal(config.node_count) - sigma**2 / 2)

    cols: list[list[np.ndarray]] = [[], [], [], []]
    for k in range(config.node_count):
        ranking = rng.permutation(n_loc)
        rate = config.sessions_per_day * multipliers[k] * horizon / DAY
        if config.diurnal:
            # thinning against a rate of zero at midnight and twice the mean at noon
            cand = np.sort(rng.uniform(0, horizon, rng.poisson(2 * rate)))
            phase = 2 * np.pi * (cand % DAY) / DAY
            starts = cand[rng.uniform(0, 2, len(cand)) < 1 - np.cos(phase)]
        else:
            starts = np.sort(rng.uniform(0, horizon, rng.poisson(rate)))
        starts = np.unique(np.floor(starts).astype(np.int64))
        if not len(starts):
            continue
        durations = np.maximum(1, np.rint(rng.exponential(config.mean_session_duration, len(starts))))
        nxt = np.append(starts[1:], horizon)
        ends = np.minimum(starts + durations.astype(np.int64), nxt)
        locs = ranking[rng.choice(n_loc, size=len(starts), p=weights)]
        cols[0].append(np.full(len(starts), k))
        cols[1].append(locs)
        cols[2].append(starts)
        cols[3].append(ends)
    if not cols[0]:
        raise ValueError("synthetic configuration produced no sessions")
    return _assemble(*(np.concatenate(c) for c in cols), node_count=config.node_count,
                     location_count=n_loc, relabel=False, span=(0, horizon))


# -- statistics -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TraceStats:
    """Per-node and per-day aggregates. Inactive nodes carry day ``-1``."""

    active_days: np.ndarray
    locations_visited: np.ndarray
    connection_time: np.ndarray
    apparition_day: np.ndarray
    disparition_day: np.ndarray
    day: np.ndarray
    day_active_nodes: np.ndarray
    day_mean_locations: np.ndarray
    day_mean_connection_time: np.ndarray

    @property
    def active_users(self) -> int:
        return int((self.active_days > 0).sum())

    def summary(self) -> dict[str, float]:
        on = self.active_days > 0
        return {
            "users": self.active_users,
            "mean_locations_visited": float(self.locations_visited[on].mean()),
            "mean_active_days": float(self.active_days[on].mean()),
            "mean_connection_hours": float(self.connection_time[on].mean() / 3600),
            "mean_active_users_per_day": float(self.day_active_nodes.mean()),
            "mean_locations_per_day": float(np.nanmean(self.day_mean_locations)),
            "mean_connection_hours_per_day": float(np.nanmean(self.day_mean_connection_time) / 3600),
        }


def _day_pieces(trace: Trace):
    """Split each session at day boundaries: (node, location, day, seconds)."""
    d0 = trace.start // DAY
    d1 = (trace.end - 1) // DAY
    reps = (d1 - d0 + 1).astype(np.int64)
    idx = np.repeat(np.arange(len(trace)), reps)
    first = np.repeat(np.cumsum(reps) - reps, reps)
    day = d0[idx] + (np.arange(len(idx)) - first)
    secs = np.minimum(trace.end[idx], (day + 1) * DAY) - np.maximum(trace.start[idx], day * DAY)
    return trace.node[idx], trace.location[idx], day, secs


def trace_statistics(trace: Trace) -> TraceStats:
    n = trace.node_count
    node, loc, day, secs = _day_pieces(trace)
    days = np.arange(trace.days.start, trace.days.stop)
    d_index = day - days[0]

    connection_time = np.bincount(trace.node, weights=trace.end - trace.start, minlength=n)
    locations_visited = np.bincount(np.unique(trace.node * trace.location_count + trace.location)
                                    // trace.location_count, minlength=n)

    # every piece carries at least one second, so each (node, day) pair seen is active
    nd_keys = np.unique(node * len(days) + d_index)
    nd_time = np.bincount(np.searchsorted(nd_keys, node * len(days) + d_index), weights=secs)
    nd_node, nd_day = nd_keys // len(days), nd_keys % len(days)

    active_days = np.bincount(nd_node, minlength=n)
    apparition = np.full(n, -1, dtype=np.int64)
    disparition = np.full(n, -1, dtype=np.int64)
    has = active_days > 0
    firsts = np.searchsorted(nd_node, np.arange(n), side="left")
    lasts = np.searchsorted(nd_node, np.arange(n), side="right") - 1
    apparition[has] = days[nd_day[firsts[has]]]
    disparition[has] = days[nd_day[lasts[has]]]

    day_active = np.bincount(nd_day, minlength=len(days))
    day_time = np.bincount(nd_day, weights=nd_time, minlength=len(days))
    ndl = np.unique((node * len(days) + d_index) * trace.location_count + loc)
    day_locs = np.bincount((ndl // trace.location_count) % len(days), minlength=len(days))
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_locs = np.where(day_active > 0, day_locs / day_active, np.nan)
        mean_time = np.where(day_active > 0, day_time / day_active, np.nan)

    return TraceStats(
        active_days=_frozen(active_days),
        locations_visited=_frozen(locations_visited),
        connection_time=_frozen(connection_time, dtype=float),
        apparition_day=_frozen(apparition),
        disparition_day=_frozen(disparition),
        day=_frozen(days),
        day_active_nodes=_frozen(day_active),
        day_mean_locations=_frozen(mean_locs, dtype=float),
        day_mean_connection_time=_frozen(mean_time, dtype=float),
    )


def write_stats(stats: TraceStats, node_path, day_path, trace: Trace | None = None) -> None:
    """Export per-node and per-day statistics as two CSV files."""
    labels = trace.node_labels if trace is not None else np.arange(len(stats.active_days))
    with open(node_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["node_id", "active_days", "locations_visited", "connection_time_s",
                    "apparition_day", "disparition_day"])
        for i in range(len(stats.active_days)):
            w.writerow([labels[i], stats.active_days[i], stats.locations_visited[i],
                        int(stats.connection_time[i]), stats.apparition_day[i], stats.disparition_day[i]])
    with open(day_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["day", "active_nodes", "mean_locations_visited", "mean_connection_time_s"])
        for i in range(len(stats.day)):
            w.writerow([stats.day[i], stats.day_active_nodes[i],
                        f"{stats.day_mean_locations[i]:.6g}", f"{stats.day_mean_connection_time[i]:.6g}"])


# -- user selection ---------------------------------------------------------

def most_active_pool(trace: Trace) -> np.ndarray:
    """Nodes active on every day of the trace span."""
    stats = trace_statistics(trace)
    return np.flatnonzero(stats.active_days == len(trace.days))


def select_users(trace: Trace, mode: str, count: int, seed: int, *,
                 entropy_bin: tuple[float, float] | None = None,
                 window: tuple[int, int] | None = None) -> frozenset[int]:
    """Draw ``count`` distinct nodes from a pool.

    ``mode`` is ``"uniform"`` (every node with at least one session),
    ``"most-active"`` (nodes active on every day of the span) or
    ``"entropy-bin"`` (nodes whose relative pattern entropy lies in the
    half-open ``entropy_bin``, patterns taken over ``window``).
    """
    if mode in ("uniform", "uniform-random"):
        pool = trace.active_nodes
    elif mode == "most-active":
        pool = most_active_pool(trace)
    elif mode == "entropy-bin":
        if entropy_bin is None:
            raise ValueError("entropy-bin selection needs entropy_bin=(low, high)")
        from .mobyspace import pattern_matrix, relative_entropies  # circular at import time

        matrix, has = pattern_matrix(trace, window or trace.span)
        ent = relative_entropies(matrix)
        lo, hi = entropy_bin
        pool = np.flatnonzero(has & (ent >= lo) & (ent < hi))
    else:
        raise ValueError(f"unknown selection mode {mode!r}")
    if count > len(pool):
        raise ValueError(f"{mode} pool has {len(pool)} nodes, cannot select {count}")
    rng = stream(seed, "sampling")
    return frozenset(int(x) for x in rng.choice(np.sort(pool), size=count, replace=False))


def traffic_sources(trace: Trace, sampled: Iterable[int], count: int, seed: int, *,
                    window_start: int | None = None, window_end: int | None = None) -> frozenset[int]:
    """Pick ``count`` sources among sampled nodes seen during the first week.

    ``window_end`` clips the week for simulations shorter than seven days.
    """
    t0 = trace.span[0] if window_start is None else window_start
    t1 = t0 + WEEK if window_end is None else min(t0 + WEEK, window_end)
    early = np.unique(trace.node[(trace.start >= t0) & (trace.start < t1)])
    eligible = np.array(sorted(set(early.tolist()) & set(sampled)), dtype=np.int64)
    if count > len(eligible):
        raise ValueError(f"only {len(eligible)} sampled nodes appear in the first week, need {count}")
    rng = stream(seed, "sources")
    return frozenset(int(x) for x in rng.choice(eligible, size=count, replace=False))
