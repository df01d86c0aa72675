"""Trace-driven bundle simulation and multi-run experiments.

The simulation advances on the time-step grid of an :class:`OccupancyIndex`
but only visits grid instants where something can happen: a node arrives
somewhere, a bundle is created, or a bundle moved during the previous step.
Between such instants every policy would keep all of its bundles, so the
result is identical to visiting every step.
"""

from __future__ import annotations

import math
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import routing
from ._rng import derive_seed, stream
from .contact import OccupancyIndex, _ceil_grid, build_index, contact_events
from .metrics import ExperimentResult, aggregate
from .mobyspace import pattern_matrix, truncate_matrix
from .routing import Forward, Keep, PatternTable, PolicyContext, PreferenceLists, Replicate
from .trace import DAY, Trace, most_active_pool, select_users, traffic_sources

POLICY_NAMES = tuple(routing.POLICIES)


@dataclass(frozen=True)
class Bundle:
    id: int
    source: int
    destination: int
    created_at: int

    def __post_init__(self):
        if self.source == self.destination:
            raise ValueError(f"bundle {self.id}: source equals destination")


@dataclass(frozen=True)
class RunConfig:
    policy: str = "mobyspace"
    sampled_users: int = 300
    traffic_sources: int = 100
    connections_per_source: int = 5
    bundles_per_connection: int = 1
    time_step: int = 1
    duration: int = 45 * DAY
    seed: int = 0
    pattern_window: tuple[int, int] | None = None
    truncation: int | None = None

    def __post_init__(self):
        for name in ("sampled_users", "traffic_sources", "connections_per_source",
                     "bundles_per_connection", "time_step", "duration"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.truncation is not None and self.truncation < 1:
            raise ValueError("truncation must be >= 1")


@dataclass(frozen=True)
class BundleOutcome:
    bundle: Bundle
    delivered_at: int | None = None
    hops: int | None = None
    path: tuple[int, ...] = ()
    hop_times: tuple[int, ...] = ()  # hop_times[i] is when path[i + 1] took the bundle

    @property
    def delivered(self) -> bool:
        return self.delivered_at is not None

    @property
    def delay(self) -> float | None:
        return None if self.delivered_at is None else float(self.delivered_at - self.bundle.created_at)


@dataclass
class RunResult:
    policy: str
    start: int
    horizon: int
    outcomes: list[BundleOutcome]
    transmissions: int = 0
    blind_decisions: int = 0
    preference: PreferenceLists | None = field(default=None, repr=False)

    @property
    def created(self) -> int:
        return len(self.outcomes)

    @property
    def delivery_times(self) -> np.ndarray:
        return np.sort([o.delivered_at for o in self.outcomes if o.delivered])


def generate_workload(trace: Trace, sources: Iterable[int], sampled: Iterable[int],
                      config: RunConfig, seed: int, window: tuple[int, int] | None = None) -> list[Bundle]:
    """Each source opens connections to distinct random destinations among ``sampled``.

    Bundles are created when the source first appears in the window.
    """
    t0, t1 = window or (trace.span[0], trace.span[0] + config.duration)
    pool = sorted(set(sampled))
    rng = stream(seed, "workload")
    bundles: list[Bundle] = []
    for src in sorted(sources):
        candidates = [n for n in pool if n != src]
        if len(candidates) < config.connections_per_source:
            raise ValueError(f"source {src}: only {len(candidates)} destination candidates, "
                             f"need {config.connections_per_source}")
        idx = trace.session_indices(src)
        live = idx[(trace.end[idx] > t0) & (trace.start[idx] < t1)]
        if not len(live):
            raise ValueError(f"source {src} never appears in the simulation window")
        created = int(max(trace.start[live[0]], t0))
        for dest in rng.choice(candidates, size=config.connections_per_source, replace=False):
            for _ in range(config.bundles_per_connection):
                bundles.append(Bundle(len(bundles), int(src), int(dest), created))
    return bundles


def pattern_table(trace: Trace, window: tuple[int, int] | None = None,
                  truncation: int | None = None) -> PatternTable:
    matrix, has = pattern_matrix(trace, window or trace.span)
    return PatternTable(truncate_matrix(matrix, truncation), has)


class _Run:
    """Mutable state of one simulation. Not shared between runs."""

    def __init__(self, index, bundles, policy, step, patterns, preference, potato_rng, audit):
        self.index = index
        self.bundles = bundles
        self.policy = policy
        self.decide = routing.get_policy(policy)
        self.step = step
        self.patterns = patterns
        self.preference = preference
        self.rng = potato_rng
        self.audit = audit

        self.loc_of: dict[int, int] = {}
        self.members: dict[int, set[int]] = defaultdict(set)
        self.epoch: dict[int, int] = defaultdict(int)
        self.holdings: dict[int, set[int]] = defaultdict(set)
        self.marks: set[tuple[int, int, int]] = set()
        self.delivered_at: dict[int, int] = {}
        self.transmissions = 0
        self.blind = 0
        self.activated = 0
        # single copy: bundle -> custody path [(node, time)], last arrival time
        self.path: dict[int, list[tuple[int, int]]] = {}
        self.arrived: dict = {}
        # epidemic: bundle -> {node: (parent, time)}
        self.copies: dict[int, dict[int, tuple[int | None, int]]] = {}

    # -- bookkeeping --------------------------------------------------------

    def create(self, b: Bundle, t: int) -> int | None:
        self.activated += 1
        self.holdings[b.source].add(b.id)
        if self.policy == "epidemic":
            self.copies[b.id] = {b.source: (None, b.created_at)}
        else:
            self.path[b.id] = [(b.source, b.created_at)]
        return self.loc_of.get(b.source)

    def _deliver(self, bid: int, t: int) -> None:
        self.delivered_at[bid] = t
        if self.policy == "epidemic":
            for node in self.copies[bid]:
                self.holdings[node].discard(bid)
        else:
            holder = self.path[bid][-1][0]
            self.holdings[holder].discard(bid)

    def _forward(self, c: int, bid: int, target: int, t: int) -> None:
        b = self.bundles[bid]
        self.transmissions += 1
        if self.audit:
            self._audit_hop(c, b, target)
        if self.policy == "potato" and target != b.destination:
            self.marks.add((bid, c, self.epoch[c]))
        self.holdings[c].discard(bid)
        self.path[bid].append((target, t))
        self.arrived[bid] = t
        if target == b.destination:
            self.delivered_at[bid] = t
        else:
            self.holdings[target].add(bid)

    def _audit_hop(self, c: int, b: Bundle, target: int) -> None:
        assert self.loc_of.get(c) is not None and self.loc_of.get(c) == self.loc_of.get(target), \
            f"bundle {b.id}: {c} -> {target} without contact"
        if target == b.destination:
            return
        if self.policy == "mobyspace":
            mine = self.patterns.distance(c, b.destination)
            assert self.patterns.distance(target, b.destination) < (math.inf if mine is None else mine), \
                f"bundle {b.id}: distance not decreasing"
        elif self.policy == "random":
            assert self.preference.rank(b.destination, target) < self.preference.rank(b.destination, c)
        elif self.policy == "potato":
            assert (b.id, c, self.epoch[c]) not in self.marks, f"bundle {b.id}: handled twice by {c}"

    # -- one grid instant ---------------------------------------------------

    def process(self, t: int, dirty: Iterable[int]) -> set[int]:
        """Run the policy for every custodian at the dirty locations.

        Returns locations that received a bundle and must be revisited next step.
        """
        custodians = sorted(n for loc in dirty if len(self.members[loc]) > 1
                            for n in self.members[loc] if self.holdings.get(n))
        touched: set[int] = set()
        if self.policy == "epidemic":
            for c in custodians:
                if self._exchange(c, t):
                    touched.add(self.loc_of[c])
        else:
            for c in custodians:
                loc = self.loc_of[c]
                neighbors = frozenset(self.members[loc] - {c})
                for bid in sorted(self.holdings[c]):
                    if self.arrived.get(bid) == t:
                        continue
                    ctx = PolicyContext(
                        custodian=c, bundle=self.bundles[bid], neighbors=neighbors,
                        patterns=self.patterns, preference=self.preference,
                        visit_epoch=self.epoch[c], rng=self.rng, marks=self.marks,
                    )
                    decision = self.decide(ctx)
                    if isinstance(decision, Forward):
                        self._forward(c, bid, decision.target, t)
                        touched.add(loc)
                    elif isinstance(decision, Keep) and decision.blind:
                        self.blind += 1
                    elif isinstance(decision, Replicate):
                        raise RuntimeError(f"{self.policy} may not replicate")
        if self.audit:
            self._audit_state()
        return touched

    def _exchange(self, c: int, t: int) -> bool:
        """Epidemic replication from custodian ``c``, equivalent to
        :func:`routing.epidemic_decide` applied bundle by bundle."""
        eligible = {bid for bid in self.holdings[c] if self.arrived.get((bid, c)) != t}
        moved = False
        for target in sorted(self.members[self.loc_of[c]] - {c}):
            for bid in sorted((eligible & self.holdings[c]) - self.holdings[target]):
                self.transmissions += 1
                moved = True
                self.copies[bid][target] = (c, t)
                self.arrived[(bid, target)] = t
                if target == self.bundles[bid].destination:
                    self._deliver(bid, t)
                else:
                    self.holdings[target].add(bid)
        return moved

    def _audit_state(self) -> None:
        if self.policy == "epidemic":
            return
        held = [bid for node in self.holdings for bid in self.holdings[node]]
        assert len(held) == len(set(held)), "a bundle has more than one custodian"
        assert len(held) + len(self.delivered_at) == self.activated, "bundle conservation violated"

    # -- results ------------------------------------------------------------

    def outcomes(self) -> list[BundleOutcome]:
        out = []
        for b in self.bundles:
            t = self.delivered_at.get(b.id)
            if self.policy == "epidemic":
                if t is None:
                    out.append(BundleOutcome(b))
                    continue
                steps = []
                node = b.destination
                while node is not None:
                    parent, when = self.copies[b.id][node]
                    steps.append((node, when))
                    node = parent
                steps.reverse()
            else:
                steps = self.path.get(b.id, [(b.source, b.created_at)])
            nodes = tuple(n for n, _ in steps)
            times = tuple(w for _, w in steps[1:])
            out.append(BundleOutcome(b, t, len(nodes) - 1 if t is not None else None, nodes, times))
        return out


def run_simulation(trace: Trace, subset: Iterable[int], bundles: Sequence[Bundle], policy: str,
                   config: RunConfig, *, patterns: PatternTable | None = None,
                   index: OccupancyIndex | None = None, seed: int | None = None,
                   audit: bool = False) -> RunResult:
    """Replay ``trace`` restricted to ``subset`` and route ``bundles`` with ``policy``.

    ``seed`` (default ``config.seed``) feeds the preference-list and potato
    streams. With ``audit`` every step checks custody conservation and the
    per-hop progress rule of the policy.
    """
    routing.get_policy(policy)
    seed = config.seed if seed is None else seed
    subset = frozenset(subset)
    t0 = trace.span[0]
    if config.duration > trace.span[1] - t0:
        raise ValueError(f"duration {config.duration}s exceeds trace span of {trace.span[1] - t0}s")
    horizon = t0 + config.duration
    if index is None:
        index = build_index(trace, subset, config.time_step)
    for b in bundles:
        if b.created_at >= horizon:
            raise ValueError(f"bundle {b.id} created at {b.created_at}, after the horizon {horizon}")
        if b.source not in subset or b.destination not in subset:
            raise ValueError(f"bundle {b.id} has an endpoint outside the simulated subset")
    if [b.id for b in bundles] != list(range(len(bundles))):
        raise ValueError("bundle ids must be 0..len(bundles)-1 in order")

    if policy == "mobyspace":
        if patterns is None:
            patterns = pattern_table(trace, config.pattern_window, config.truncation)
        if patterns.matrix.shape != (trace.node_count, trace.location_count):
            raise ValueError("pattern table does not match the trace dimensions")
    preference = None
    if policy == "random":
        preference = PreferenceLists.draw(subset, {b.destination for b in bundles}, stream(seed, "preference"))

    state = _Run(index, list(bundles), policy, config.time_step, patterns, preference,
                 stream(seed, "potato"), audit)

    by_time: dict[int, list] = defaultdict(list)
    for ev in contact_events(index):
        if ev.time < horizon:
            by_time[ev.time].append(ev)
    activation = _ceil_grid(np.array([b.created_at for b in bundles], dtype=np.int64),
                            index.origin, index.time_step)
    pending = sorted(range(len(bundles)), key=lambda i: (activation[i], i))
    ev_times = sorted(by_time)

    ei = bi = 0
    follow_time, follow_locs = None, set()
    while True:
        candidates = []
        if ei < len(ev_times):
            candidates.append(ev_times[ei])
        if bi < len(pending):
            candidates.append(int(activation[pending[bi]]))
        if follow_time is not None:
            candidates.append(follow_time)
        if not candidates:
            break
        t = min(candidates)
        if t >= horizon:
            break

        dirty: set[int] = set()
        if ei < len(ev_times) and ev_times[ei] == t:
            events = by_time[t]
            for ev in events:
                for n in ev.departures:
                    state.members[ev.location].discard(n)
                    if state.loc_of.get(n) == ev.location:
                        del state.loc_of[n]
            for ev in events:
                for n in ev.arrivals:
                    state.members[ev.location].add(n)
                    state.loc_of[n] = ev.location
                    state.epoch[n] += 1
                if ev.arrivals:
                    dirty.add(ev.location)
            ei += 1
        while bi < len(pending) and activation[pending[bi]] <= t:
            loc = state.create(bundles[pending[bi]], t)
            if loc is not None:
                dirty.add(loc)
            bi += 1
        if follow_time == t:
            dirty |= follow_locs
            follow_time, follow_locs = None, set()

        touched = state.process(t, dirty)
        if touched:
            follow_time, follow_locs = t + config.time_step, touched

    return RunResult(policy, t0, horizon, state.outcomes(), state.transmissions, state.blind, preference)


# -- experiments ------------------------------------------------------------

EXPERIMENT_KINDS = ("standard", "most-active", "entropy-bins", "reduction", "learning")
DEFAULT_ENTROPY_BINS = ((0.0, 0.1), (0.1, 0.2), (0.2, 0.3), (0.3, 0.4))


@dataclass(frozen=True)
class ExperimentConfig:
    run: RunConfig = RunConfig()
    policies: tuple[str, ...] | None = None
    runs: int = 5
    experiment: str = "standard"
    selection: str | None = None
    entropy_bins: tuple[tuple[float, float], ...] = DEFAULT_ENTROPY_BINS
    levels: tuple[int, ...] = (1, 2, 3)
    learning_days: int = 15
    routing_days: int = 30
    cdf_bins: int = 45
    level: float = 0.90

    def __post_init__(self):
        if self.experiment not in EXPERIMENT_KINDS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        for p in self.policies or ():
            routing.get_policy(p)
        if self.runs < 1:
            raise ValueError("runs must be >= 1")

    @property
    def policy_list(self) -> tuple[str, ...]:
        if self.policies:
            return tuple(self.policies)
        return ("mobyspace",) if self.experiment == "reduction" else POLICY_NAMES

    @property
    def selection_mode(self) -> str:
        if self.selection:
            return self.selection
        return {"standard": "uniform", "entropy-bins": "entropy-bin"}.get(self.experiment, "most-active")


@dataclass(frozen=True)
class Scenario:
    label: str
    selection: str
    entropy_bin: tuple[float, float] | None = None
    truncation: int | None = None


def scenarios(cfg: ExperimentConfig) -> list[Scenario]:
    mode = cfg.selection_mode
    if cfg.experiment == "entropy-bins":
        return [Scenario(f"S_r=[{a:g},{b:g})", "entropy-bin", (a, b)) for a, b in cfg.entropy_bins]
    if cfg.experiment == "reduction":
        levels = [Scenario(f"l={l}", mode, truncation=l) for l in cfg.levels]
        return levels + [Scenario("l=full", mode, truncation=cfg.run.truncation)]
    return [Scenario(cfg.experiment, mode, truncation=cfg.run.truncation)]


_WORKER_TRACE: Trace | None = None


def _init_worker(trace: Trace) -> None:
    global _WORKER_TRACE
    _WORKER_TRACE = trace


def draw_sample(trace: Trace, cfg: ExperimentConfig, group: Scenario, run: int):
    seed = derive_seed(cfg.run.seed, run)
    window = cfg.run.pattern_window or trace.span
    sampled = select_users(trace, group.selection, cfg.run.sampled_users, seed,
                           entropy_bin=group.entropy_bin, window=window)
    sources = traffic_sources(trace, sampled, cfg.run.traffic_sources, seed,
                              window_end=trace.span[0] + cfg.run.duration)
    bundles = generate_workload(trace, sources, sampled, cfg.run, seed)
    return seed, sampled, bundles


def _simulate_task(args) -> RunResult:
    cfg, group, run, policy = args
    trace = _WORKER_TRACE
    seed, sampled, bundles = draw_sample(trace, cfg, group, run)
    patterns = None
    if policy == "mobyspace":
        patterns = pattern_table(trace, cfg.run.pattern_window, group.truncation)
    return run_simulation(trace, sampled, bundles, policy, cfg.run, patterns=patterns, seed=seed)


def run_experiment(trace: Trace, cfg: ExperimentConfig, jobs: int = 1) -> ExperimentResult:
    """Paired multi-run comparison: every policy sees the same sample and workload per run."""
    if cfg.experiment == "learning":
        raise ValueError("use learning_experiment() for the learning experiment")
    if cfg.run.duration > trace.span[1] - trace.span[0]:
        raise ValueError(f"duration {cfg.run.duration}s exceeds trace span of {trace.span[1] - trace.span[0]}s")
    groups = scenarios(cfg)
    tasks = [(cfg, g, r, p) for g in groups for r in range(cfg.runs) for p in cfg.policy_list]

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker, initargs=(trace,)) as pool:
            results = list(pool.map(_simulate_task, tasks))
    else:
        results = _serial(trace, cfg, tasks)

    by_group: dict[str, dict[str, list[RunResult]]] = {}
    for (c, g, r, p), res in zip(tasks, results):
        by_group.setdefault(g.label, {}).setdefault(p, []).append(res)
    return aggregate(by_group, level=cfg.level, cdf_bins=cfg.cdf_bins, horizon=cfg.run.duration)


def _serial(trace: Trace, cfg: ExperimentConfig, tasks) -> list[RunResult]:
    # shares samples, indices and pattern tables across policies of one run
    samples, tables, indices, out = {}, {}, {}, []
    for c, g, r, p in tasks:
        key = (g.selection, g.entropy_bin, r)
        if key not in samples:
            samples[key] = draw_sample(trace, cfg, g, r)
            indices[key] = build_index(trace, samples[key][1], cfg.run.time_step)
        seed, sampled, bundles = samples[key]
        patterns = None
        if p == "mobyspace":
            if g.truncation not in tables:
                tables[g.truncation] = pattern_table(trace, cfg.run.pattern_window, g.truncation)
            patterns = tables[g.truncation]
        out.append(run_simulation(trace, sampled, bundles, p, cfg.run, patterns=patterns,
                                  index=indices[key], seed=seed))
    return out


@dataclass(frozen=True)
class LearningPoint:
    days: int
    mean_error: float
    mean_error_most_active: float
    nodes: int
    most_active_nodes: int


def learning_experiment(trace: Trace, learning_days: int = 15, routing_days: int = 30) -> list[LearningPoint]:
    """Prediction error of patterns learnt over the k days just before the routing period."""
    t0 = trace.span[0]
    split = t0 + learning_days * DAY
    end = split + routing_days * DAY
    if end > trace.span[1]:
        raise ValueError(f"trace span shorter than {learning_days} + {routing_days} days")
    route, has_route = pattern_matrix(trace, (split, end))
    active = np.zeros(trace.node_count, dtype=bool)
    active[most_active_pool(trace)] = True
    n = trace.location_count
    out = []
    for k in range(1, learning_days + 1):
        learn, has_learn = pattern_matrix(trace, (split - k * DAY, split))
        both = has_learn & has_route
        if not both.any():
            raise ValueError(f"no node has patterns in both windows for k={k}")
        err = np.sqrt(((learn - route) ** 2).sum(axis=1)) / math.sqrt(n)
        top = both & active
        if not top.any():
            raise ValueError("no most-active node has patterns in both windows")
        out.append(LearningPoint(k, float(err[both].mean()), float(err[top].mean()),
                                 int(both.sum()), int(top.sum())))
    return out

