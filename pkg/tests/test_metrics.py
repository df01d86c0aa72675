import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mobysim.engine import Bundle, BundleOutcome, RunResult
from mobysim.metrics import (aggregate, confidence_interval, delivery_cdf, merge_runs, read_results_csv,
                             summarize_run)
from mobysim.trace import DAY

# Half-widths from an independent incomplete-beta inversion (mpmath, 30 digits).
S30 = [(7 * i * i + 3 * i) % 23 for i in range(30)]
CI_ORACLE = [
    ([1, 2, 3, 4, 5], 3.0, 1.50744331906232),
    ([0, 10], 5.0, 31.5687575733752),
    (S30, 9.53333333333333, 1.97501946690621),
]


def make_run(delays, undelivered=0, start=0, horizon=45 * DAY, hops=None, policy="x"):
    outcomes = []
    for i, d in enumerate(delays):
        b = Bundle(i, 0, 1, start)
        h = 1 if hops is None else hops[i]
        outcomes.append(BundleOutcome(b, start + d, h))
    for j in range(undelivered):
        outcomes.append(BundleOutcome(Bundle(len(delays) + j, 0, 1, start)))
    return RunResult(policy, start, horizon, outcomes)


def test_ratio():
    assert summarize_run(make_run([10] * 75, undelivered=425)).delivery_ratio == 15.0


def test_delay_days():
    s = summarize_run(make_run([86400, 172800], hops=[1, 4]))
    assert s.delay_days == 1.5 and s.route_length == 2.5


def test_nothing_delivered():
    s = summarize_run(make_run([], undelivered=3))
    assert (s.delivery_ratio, s.delay_days, s.route_length) == (0.0, None, None)
    with pytest.raises(ValueError):
        summarize_run(make_run([]))


@pytest.mark.parametrize("samples, mean, hw", CI_ORACLE)
def test_ci_oracle(samples, mean, hw):
    m, h = confidence_interval(samples, 0.90)
    assert round(m, 6) == round(mean, 6)
    assert round(h, 6) == round(hw, 6)


def test_ci_closed_form_five():
    assert confidence_interval([1, 2, 3, 4, 5])[1] == pytest.approx(2.13184678632665 * math.sqrt(2.5) / math.sqrt(5),
                                                                    abs=1e-12)


def test_ci_constant_and_errors():
    assert confidence_interval([5, 5, 5, 5, 5]) == (5.0, 0.0)
    with pytest.raises(ValueError):
        confidence_interval([1.0])
    with pytest.raises(ValueError):
        confidence_interval([])


samples = st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=2, max_size=30)


@given(samples, st.floats(-1e3, 1e3), st.floats(0.01, 100))
@settings(max_examples=300, deadline=None)
def test_ci_equivariance(xs, shift, scale):
    m, h = confidence_interval(xs)
    ms, hs = confidence_interval([x + shift for x in xs])
    assert ms == pytest.approx(m + shift, abs=1e-9)
    assert hs == pytest.approx(h, rel=1e-6, abs=1e-6)
    mk, hk = confidence_interval([x * scale for x in xs])
    assert mk == pytest.approx(m * scale, rel=1e-9, abs=1e-9)
    assert hk == pytest.approx(h * scale, rel=1e-6, abs=1e-9)
    assert h >= 0


def test_cdf_examples():
    s = delivery_cdf(make_run([], undelivered=4), horizon=100, bins=10)
    assert len(s) == 11 and all(f == 0 for _, f in s)
    s = delivery_cdf(make_run([0, 0, 0], undelivered=1), horizon=100, bins=10)
    assert all(f == 0.75 for _, f in s)
    assert [t for t, _ in s] == list(range(0, 101, 10))
    with pytest.raises(ValueError):
        delivery_cdf(make_run([1]), bins=0)


runs = st.builds(lambda d, u: make_run(d, u, horizon=1000),
                 st.lists(st.integers(0, 999), max_size=40), st.integers(0, 20)).filter(lambda r: r.created > 0)


@given(runs, st.integers(1, 60))
@settings(max_examples=300, deadline=None)
def test_cdf_monotone_and_terminal(run, bins):
    s = delivery_cdf(run, bins=bins)
    fr = [f for _, f in s]
    assert all(a <= b for a, b in zip(fr, fr[1:]))
    assert fr[-1] == pytest.approx(summarize_run(run).delivery_ratio / 100, abs=1e-12)


@given(runs, runs)
@settings(max_examples=300, deadline=None)
def test_merge_consistency(a, b):
    m = summarize_run(merge_runs(a, b))
    sa, sb = summarize_run(a), summarize_run(b)
    na, nb = a.created, b.created
    assert m.delivery_ratio == pytest.approx((sa.delivery_ratio * na + sb.delivery_ratio * nb) / (na + nb))
    da = sum(o.delivered for o in a.outcomes)
    db = sum(o.delivered for o in b.outcomes)
    if da + db == 0:
        assert m.delay_days is None and m.route_length is None
    else:
        parts = [(s.delay_days, s.route_length, n) for s, n in ((sa, da), (sb, db)) if n]
        assert m.delay_days == pytest.approx(sum(d * n for d, _, n in parts) / (da + db))
        assert m.route_length == pytest.approx(sum(h * n for _, h, n in parts) / (da + db))


def test_aggregate_and_csv(tmp_path):
    group = {"standard": {"a": [make_run([DAY], 1), make_run([2 * DAY], 3)], "b": [make_run([], 2), make_run([], 2)]}}
    res = aggregate(group, horizon=45 * DAY)
    m = res.metrics("a")
    assert m.delivery_ratio.mean == pytest.approx(37.5) and m.delivery_ratio.n == 2
    assert m.delay_days.mean == pytest.approx(1.5)
    assert res.metrics("b").delay_days.mean is None
    res.write_csv(tmp_path / "r.csv")
    rows = read_results_csv(tmp_path / "r.csv")
    assert len(rows) == 6
    assert rows[0] == {"group": "standard", "policy": "a", "metric": "delivery_ratio", "mean": "37.5",
                       "half_width": rows[0]["half_width"], "runs": "2"}
    assert [r["mean"] for r in rows if r["policy"] == "b"][1:] == ["", ""]
    res.write_cdf_csv(tmp_path / "c.csv")
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "policy,t_seconds,fraction" and len(lines) == 1 + 2 * 46
