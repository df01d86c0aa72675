"""Transport metrics, Student-t confidence intervals and delivery CDFs."""

from __future__ import annotations

import csv
import dataclasses
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

DAY = 86_400


@dataclass(frozen=True)
class RunSummary:
    delivery_ratio: float  # percent
    delay_days: float | None  # over delivered bundles only
    route_length: float | None


@dataclass(frozen=True)
class Estimate:
    mean: float | None
    half_width: float | None
    n: int


@dataclass(frozen=True)
class PolicyMetrics:
    delivery_ratio: Estimate
    delay_days: Estimate
    route_length: Estimate
    cdf: tuple[tuple[int, float], ...]
    runs: tuple[RunSummary, ...]


def summarize_run(result) -> RunSummary:
    if result.created < 1:
        raise ValueError("run has no bundles")
    done = [o for o in result.outcomes if o.delivered]
    ratio = 100.0 * len(done) / result.created
    if not done:
        return RunSummary(ratio, None, None)
    return RunSummary(
        ratio,
        math.fsum(o.delay for o in done) / len(done) / DAY,
        math.fsum(o.hops for o in done) / len(done),
    )


def merge_runs(a, b):
    """Concatenate the bundles of two runs of the same policy."""
    return dataclasses.replace(a, outcomes=list(a.outcomes) + list(b.outcomes),
                               transmissions=a.transmissions + b.transmissions,
                               blind_decisions=a.blind_decisions + b.blind_decisions)


def confidence_interval(samples: Sequence[float], level: float = 0.90) -> tuple[float, float]:
    """Mean and Student-t half-width at ``level``, with the (k - 1) sample deviation."""
    x = np.asarray(samples, dtype=float)
    k = len(x)
    if k < 2:
        raise ValueError("need at least two samples for a confidence interval")
    mean = float(x.mean())
    s = float(x.std(ddof=1))
    q = stats.t.ppf((1 + level) / 2, k - 1)
    return mean, float(q * s / math.sqrt(k))


def delivery_cdf(result, horizon: int | None = None, bins: int = 45) -> list[tuple[int, float]]:
    """Fraction of created bundles delivered within ``t`` seconds of the run start,
    at ``bins + 1`` evenly spaced ``t`` from 0 to ``horizon``."""
    if bins < 1:
        raise ValueError("bins must be >= 1")
    horizon = result.horizon - result.start if horizon is None else horizon
    elapsed = np.sort([o.delivered_at - result.start for o in result.outcomes if o.delivered])
    ts = [round(i * horizon / bins) for i in range(bins + 1)]
    counts = np.searchsorted(elapsed, ts, side="right")
    return [(t, float(c) / result.created) for t, c in zip(ts, counts)]


def _estimate(values: Sequence[float | None], level: float) -> Estimate:
    vals = [v for v in values if v is not None]
    if not vals:
        return Estimate(None, None, 0)
    if len(vals) == 1:
        return Estimate(vals[0], None, 1)
    mean, hw = confidence_interval(vals, level)
    return Estimate(mean, hw, len(vals))


def policy_metrics(runs: Sequence, level: float = 0.90, cdf_bins: int = 45,
                   horizon: int | None = None) -> PolicyMetrics:
    summaries = tuple(summarize_run(r) for r in runs)
    curves = np.array([[f for _, f in delivery_cdf(r, horizon, cdf_bins)] for r in runs])
    ts = [t for t, _ in delivery_cdf(runs[0], horizon, cdf_bins)]
    return PolicyMetrics(
        delivery_ratio=_estimate([s.delivery_ratio for s in summaries], level),
        delay_days=_estimate([s.delay_days for s in summaries], level),
        route_length=_estimate([s.route_length for s in summaries], level),
        cdf=tuple(zip(ts, curves.mean(axis=0).tolist())),
        runs=summaries,
    )


METRICS = ("delivery_ratio", "delay_days", "route_length")


@dataclass
class ExperimentResult:
    """``groups[label][policy]`` holds the aggregated metrics of one scenario."""

    groups: dict[str, dict[str, PolicyMetrics]]
    runs: dict[str, dict[str, list]] = dataclasses.field(default_factory=dict, repr=False)

    def metrics(self, policy: str, group: str | None = None) -> PolicyMetrics:
        if group is None:
            if len(self.groups) != 1:
                raise KeyError("several groups; name one")
            group = next(iter(self.groups))
        return self.groups[group][policy]

    def rows(self):
        for group, policies in self.groups.items():
            for policy, m in policies.items():
                for name in METRICS:
                    est = getattr(m, name)
                    yield group, policy, name, est.mean, est.half_width, est.n

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["group", "policy", "metric", "mean", "half_width", "runs"])
            for group, policy, name, mean, hw, n in self.rows():
                w.writerow([group, policy, name, _fmt(mean), _fmt(hw), n])

    def write_cdf_csv(self, path) -> None:
        """``policy,t_seconds,fraction``; with several groups the policy reads ``group/policy``."""
        multi = len(self.groups) > 1
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["policy", "t_seconds", "fraction"])
            for group, policies in self.groups.items():
                for policy, m in policies.items():
                    label = f"{group}/{policy}" if multi else policy
                    for t, f in m.cdf:
                        w.writerow([label, t, _fmt(f)])


def _fmt(x: float | None) -> str:
    return "" if x is None else f"{x:.10g}"


def aggregate(by_group: Mapping[str, Mapping[str, list]], level: float = 0.90,
              cdf_bins: int = 45, horizon: int | None = None) -> ExperimentResult:
    groups = {g: {p: policy_metrics(runs, level, cdf_bins, horizon) for p, runs in pol.items()}
              for g, pol in by_group.items()}
    return ExperimentResult(groups, {g: dict(p) for g, p in by_group.items()})


def read_results_csv(path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
