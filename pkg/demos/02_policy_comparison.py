"""Five policies on one synthetic campus, five paired runs.

Every run draws a fresh sample of users and a fresh workload; all five
policies then replay the same sample, so differences come from routing only.
Takes about half a minute.
"""

from mobysim import ExperimentConfig, RunConfig, SyntheticConfig, generate_synthetic, run_experiment
from mobysim.trace import DAY

trace = generate_synthetic(SyntheticConfig(
    node_count=200, location_count=50, duration=15 * DAY,
    zipf_exponent=2.0, activity_spread=0.5, seed=1,
))
print(f"{len(trace)} sessions, {trace.node_count} nodes, {trace.location_count} locations")

cfg = ExperimentConfig(RunConfig(sampled_users=150, traffic_sources=50, duration=15 * DAY, seed=1), runs=5)
result = run_experiment(trace, cfg)

print(f"{'policy':14s} {'delivered %':>14s} {'delay (d)':>14s} {'hops':>12s}")
for policy in cfg.policy_list:
    m = result.metrics(policy)
    cells = []
    for est in (m.delivery_ratio, m.delay_days, m.route_length):
        cells.append("-" if est.mean is None else f"{est.mean:6.2f} ± {est.half_width:4.2f}")
    print(f"{policy:14s} {cells[0]:>14s} {cells[1]:>14s} {cells[2]:>12s}")

# the curve behind the delivery ratio: fraction delivered by each day
curve = result.metrics("mobyspace").cdf
print("mobyspace delivered by day:", " ".join(f"{f:.2f}" for t, f in curve[::9]))
