import numpy as np
import pytest

from mobysim.contact import build_index
from mobysim.engine import (Bundle, ExperimentConfig, RunConfig, draw_sample, generate_workload,
                            learning_experiment, pattern_table, run_experiment, run_simulation, scenarios)
from mobysim.trace import DAY, SyntheticConfig, generate_synthetic, parse_sessions, select_users, \
    traffic_sources

from conftest import small_config
from oracle import step_simulate

POLICIES = ["epidemic", "opportunistic", "random", "potato", "mobyspace"]
A, B, C = 0, 1, 2


def hand_run(trace, policy, **kw):
    cfg = RunConfig(duration=30, **kw)
    return run_simulation(trace, {A, B, C}, [Bundle(0, A, B, 0)], policy, cfg, audit=True)


def test_golden_mobyspace(hand_trace):
    o = hand_run(hand_trace, "mobyspace").outcomes[0]
    assert (o.delivered_at, o.hops, o.path, o.hop_times) == (20, 2, (A, C, B), (10, 20))


def test_golden_epidemic(hand_trace):
    r = hand_run(hand_trace, "epidemic")
    o = r.outcomes[0]
    assert (o.delivered_at, o.hops, o.path) == (20, 2, (A, C, B))
    assert o.delay == hand_run(hand_trace, "mobyspace").outcomes[0].delay
    assert r.transmissions == 2


def test_golden_opportunistic(hand_trace):
    o = hand_run(hand_trace, "opportunistic").outcomes[0]
    assert not o.delivered and o.delay is None and o.hops is None


def test_golden_potato_bounces_back(hand_trace):
    # C is A's only neighbour; C hands it back one step later and A, already
    # marked for this visit, keeps it
    o = hand_run(hand_trace, "potato").outcomes[0]
    assert not o.delivered
    assert o.path == (A, C, A) and o.hop_times == (10, 11)


# -- workload ----------------------------------------------------------------

@pytest.fixture(scope="module")
def workload_trace():
    return generate_synthetic(SyntheticConfig(node_count=320, location_count=40, duration=8 * DAY, seed=2))


def test_workload_size_and_destinations(workload_trace):
    cfg = RunConfig(duration=8 * DAY)
    sampled = select_users(workload_trace, "uniform", 300, seed=1)
    sources = traffic_sources(workload_trace, sampled, 100, seed=1)
    bundles = generate_workload(workload_trace, sources, sampled, cfg, seed=1)
    assert len(bundles) == 500
    assert [b.id for b in bundles] == list(range(500))
    per_source = {}
    for b in bundles:
        assert b.source != b.destination and b.destination in sampled
        per_source.setdefault(b.source, []).append(b.destination)
    assert set(per_source) == set(sources)
    assert all(len(set(d)) == 5 for d in per_source.values())
    assert generate_workload(workload_trace, sources, sampled, cfg, seed=1) == bundles


def test_workload_created_at_first_session():
    tr = parse_sessions("# span: 0 100000\n0,0,3600,4000\n0,1,5000,6000\n" +
                        "\n".join(f"{k},0,10,20" for k in range(1, 7)))
    bundles = generate_workload(tr, {0}, range(7), RunConfig(duration=100000), seed=0)
    assert {b.created_at for b in bundles} == {3600}


def test_workload_connections_per_source():
    tr = parse_sessions("\n".join(f"{k},0,10,20" for k in range(4)))
    cfg = RunConfig(duration=10, connections_per_source=3, bundles_per_connection=2)
    assert len(generate_workload(tr, {0, 1}, range(4), cfg, seed=0)) == 12
    with pytest.raises(ValueError, match="destination candidates"):
        generate_workload(tr, {0}, range(4), RunConfig(duration=10), seed=0)


def test_bundle_source_equals_destination():
    with pytest.raises(ValueError):
        Bundle(0, 3, 3, 0)


# -- equivalence with the every-step oracle ----------------------------------

def _setup(seed, step, dense):
    if step == 1:
        dur = 6 * 3600
        cfg_kw = dict(duration=dur, mean_session_duration=1200 if dense else 900,
                      sessions_per_day=40.0 if dense else 30.0)
    else:
        dur = DAY
        cfg_kw = dict(duration=dur)
    if not dense:
        cfg_kw.update(location_count=8, zipf_exponent=1.0)
    tr = generate_synthetic(small_config(seed, **cfg_kw))
    rc = RunConfig(sampled_users=10, traffic_sources=5, connections_per_source=3, duration=dur,
                   time_step=step, seed=seed)
    sampled = select_users(tr, "uniform", 10, seed)
    bundles = generate_workload(tr, traffic_sources(tr, sampled, 5, seed), sampled, rc, seed)
    return tr, rc, sampled, bundles


@pytest.mark.parametrize("policy", POLICIES)
@pytest.mark.parametrize("seed, step, dense", [(0, 1, True), (1, 1, False), (2, 60, True), (3, 60, False),
                                               (4, 1, False)])
def test_event_driven_equals_every_step(policy, seed, step, dense):
    tr, rc, sampled, bundles = _setup(seed, step, dense)
    pt = pattern_table(tr) if policy == "mobyspace" else None
    res = run_simulation(tr, sampled, bundles, policy, rc, patterns=pt, seed=seed, audit=True)
    ref, transmissions, _, holders = step_simulate(tr, sampled, bundles, policy, rc, seed, patterns=pt)
    assert [(o.delivered_at, o.hops, o.path, o.hop_times) for o in res.outcomes] == ref
    assert res.transmissions == transmissions
    for series in holders.values():
        assert all(a <= b for a, b in zip(series, series[1:]))


# -- invariants --------------------------------------------------------------

@pytest.fixture(scope="module")
def paired(medium_trace):
    rc = RunConfig(sampled_users=50, traffic_sources=20, duration=4 * DAY, seed=5)
    subset = select_users(medium_trace, "uniform", 50, 5)
    bundles = generate_workload(medium_trace, traffic_sources(medium_trace, subset, 20, 5), subset, rc, 5)
    index = build_index(medium_trace, subset)
    return {p: run_simulation(medium_trace, subset, bundles, p, rc, index=index, audit=True) for p in POLICIES}, index


def test_epidemic_dominates(paired):
    runs, _ = paired
    epi = runs["epidemic"].outcomes
    for p in POLICIES:
        for e, o in zip(epi, runs[p].outcomes):
            if o.delivered:
                assert e.delivered and e.delay <= o.delay


def test_paths_follow_contacts(paired):
    runs, index = paired
    for p, res in runs.items():
        for o in res.outcomes:
            assert o.path[0] == o.bundle.source or not o.path
            for u, v, t in zip(o.path, o.path[1:], o.hop_times):
                assert u != v
                assert v in index.neighbors(u, t), (p, o.bundle.id)
            assert list(o.hop_times) == sorted(o.hop_times)
            if o.delivered:
                assert o.path[-1] == o.bundle.destination and o.hops == len(o.path) - 1
                assert o.bundle.created_at <= o.delivered_at < res.horizon


def test_opportunistic_one_hop(paired):
    runs, _ = paired
    assert {o.hops for o in runs["opportunistic"].outcomes if o.delivered} == {1}


def test_chain_progress(paired, medium_trace):
    runs, _ = paired
    table = pattern_table(medium_trace)
    for o in runs["mobyspace"].outcomes:
        chain = o.path[:-1] if o.delivered else o.path
        d = [table.distance(n, o.bundle.destination) for n in chain]
        assert all(b < (np.inf if a is None else a) for a, b in zip(d, d[1:]))
    pref = runs["random"].preference
    for o in runs["random"].outcomes:
        chain = o.path[:-1] if o.delivered else o.path
        r = [pref.rank(o.bundle.destination, n) for n in chain]
        assert all(b < a for a, b in zip(r, r[1:]))


def test_potato_one_forward_per_visit(paired):
    runs, index = paired
    seen = set()
    for o in runs["potato"].outcomes:
        for i, (u, v, t) in enumerate(zip(o.path, o.path[1:], o.hop_times)):
            if v == o.bundle.destination:
                continue
            rows = index._node_rows[u]
            j = int(np.searchsorted(index.start[rows], t, side="right")) - 1
            key = (o.bundle.id, u, int(rows[j]))
            assert key not in seen
            seen.add(key)


def test_deterministic(medium_trace):
    rc = RunConfig(sampled_users=40, traffic_sources=10, duration=2 * DAY, seed=1)
    subset = select_users(medium_trace, "uniform", 40, 1)
    bundles = generate_workload(medium_trace, traffic_sources(medium_trace, subset, 10, 1), subset, rc, 1)
    for p in POLICIES:
        a = run_simulation(medium_trace, subset, bundles, p, rc)
        b = run_simulation(medium_trace, subset, bundles, p, rc)
        assert a.outcomes == b.outcomes and a.transmissions == b.transmissions


def test_run_errors(hand_trace):
    cfg = RunConfig(duration=30)
    with pytest.raises(ValueError, match="exceeds"):
        run_simulation(hand_trace, {0, 1, 2}, [], "epidemic", RunConfig(duration=31))
    with pytest.raises(ValueError, match="horizon"):
        run_simulation(hand_trace, {0, 1, 2}, [Bundle(0, 0, 1, 30)], "epidemic", cfg)
    with pytest.raises(ValueError, match="outside"):
        run_simulation(hand_trace, {0, 1}, [Bundle(0, 0, 2, 0)], "epidemic", cfg)
    with pytest.raises(ValueError, match="ids"):
        run_simulation(hand_trace, {0, 1, 2}, [Bundle(1, 0, 1, 0)], "epidemic", cfg)
    with pytest.raises(ValueError, match="unknown policy"):
        run_simulation(hand_trace, {0, 1, 2}, [], "flood", cfg)
    from mobysim.routing import PatternTable
    bad = PatternTable(np.eye(3), np.ones(3, bool))
    with pytest.raises(ValueError, match="pattern table"):
        run_simulation(hand_trace, {0, 1, 2}, [Bundle(0, 0, 1, 0)], "mobyspace", cfg, patterns=bad)


def test_blind_decisions_counted():
    tr = parse_sessions("# span: 0 200\n0,0,0,50\n2,0,0,50\n1,1,150,160")
    cfg = RunConfig(duration=100, pattern_window=(0, 100))
    res = run_simulation(tr, {0, 1, 2}, [Bundle(0, 0, 1, 0)], "mobyspace", cfg)
    assert res.blind_decisions >= 1 and not res.outcomes[0].delivered


# -- experiments -------------------------------------------------------------

def test_experiment_paired_runs(medium_trace):
    cfg = ExperimentConfig(RunConfig(sampled_users=40, traffic_sources=10, duration=2 * DAY),
                           policies=("epidemic", "mobyspace"), runs=5)
    res = run_experiment(medium_trace, cfg)
    runs = res.runs["standard"]
    assert sorted(runs) == ["epidemic", "mobyspace"]
    assert all(len(v) == 5 for v in runs.values())
    for e, m in zip(runs["epidemic"], runs["mobyspace"]):
        assert [o.bundle for o in e.outcomes] == [o.bundle for o in m.outcomes]
    assert [o.bundle for o in runs["epidemic"][0].outcomes] != [o.bundle for o in runs["epidemic"][1].outcomes]


def test_experiment_parallel_matches_serial(medium_trace):
    cfg = ExperimentConfig(RunConfig(sampled_users=30, traffic_sources=8, duration=DAY),
                           policies=("potato", "random"), runs=2)
    a, b = run_experiment(medium_trace, cfg), run_experiment(medium_trace, cfg, jobs=2)
    assert list(a.rows()) == list(b.rows())


def test_entropy_bin_grid():
    cfg = ExperimentConfig(experiment="entropy-bins")
    assert [g.label for g in scenarios(cfg)] == ["S_r=[0,0.1)", "S_r=[0.1,0.2)", "S_r=[0.2,0.3)", "S_r=[0.3,0.4)"]
    assert len(cfg.policy_list) == 5 and cfg.selection_mode == "entropy-bin"


def test_reduction_grid(medium_trace):
    cfg = ExperimentConfig(RunConfig(sampled_users=20, traffic_sources=5, duration=2 * DAY),
                           experiment="reduction", runs=2)
    assert cfg.policy_list == ("mobyspace",) and cfg.selection_mode == "most-active"
    res = run_experiment(medium_trace, cfg)
    assert list(res.groups) == ["l=1", "l=2", "l=3", "l=full"]


def test_entropy_bins_run(medium_trace):
    from mobysim.mobyspace import compute_pattern, relative_entropy
    ent = [relative_entropy(compute_pattern(medium_trace, k, medium_trace.span)) for k in medium_trace.active_nodes]
    med = round(float(np.median(ent)), 3)
    cfg = ExperimentConfig(RunConfig(sampled_users=8, traffic_sources=3, connections_per_source=2, duration=DAY),
                           experiment="entropy-bins", entropy_bins=((0.0, med), (med, 1.0)), runs=2,
                           policies=("opportunistic",))
    res = run_experiment(medium_trace, cfg)
    assert list(res.groups) == [f"S_r=[0,{med:g})", f"S_r=[{med:g},1)"]
    _, sampled, _ = draw_sample(medium_trace, cfg, scenarios(cfg)[0], 0)
    assert all(relative_entropy(compute_pattern(medium_trace, k, medium_trace.span)) < med for k in sampled)


def test_experiment_rejects_learning(medium_trace):
    with pytest.raises(ValueError):
        run_experiment(medium_trace, ExperimentConfig(experiment="learning"))
    with pytest.raises(ValueError):
        ExperimentConfig(experiment="nope")


def test_learning_periodic_zero():
    rows = [f"{k},0,{d * DAY + 3600},{d * DAY + 7200}" for d in range(6) for k in range(3)]
    rows.append("3,1,10,20")  # a second location so the space has n = 2
    tr = parse_sessions("\n".join(rows))
    pts = learning_experiment(tr, learning_days=3, routing_days=2)
    assert [p.days for p in pts] == [1, 2, 3]
    assert all(p.mean_error == 0 and p.mean_error_most_active == 0 for p in pts)


def test_learning_span_too_short(medium_trace):
    with pytest.raises(ValueError, match="shorter"):
        learning_experiment(medium_trace, 3, 2)
