"""What the pattern space looks like, and how much of it routing needs.

1. relative entropy of each user's pattern
2. routing with only the top-l coordinates of every pattern
3. how fast a pattern learnt from k days predicts the next 30
"""

import numpy as np

from mobysim import ExperimentConfig, RunConfig, SyntheticConfig, generate_synthetic, learning_experiment, \
    run_experiment
from mobysim.mobyspace import pattern_matrix, relative_entropies, truncate_matrix
from mobysim.trace import DAY, most_active_pool

trace = generate_synthetic(SyntheticConfig(
    node_count=200, location_count=50, duration=45 * DAY,
    zipf_exponent=2.0, activity_spread=1.0, seed=3,
))

matrix, has = pattern_matrix(trace, trace.span)
ent = relative_entropies(matrix)[has]
hist, edges = np.histogram(ent, bins=np.linspace(0, 1, 11))
print("relative entropy of user patterns")
for lo, n in zip(edges, hist):
    print(f"  [{lo:.1f}, {lo + 0.1:.1f})  {'#' * int(n // 2)} {n}")

top3 = truncate_matrix(matrix, 3)[has].sum(axis=1)
print(f"mass kept by the top 3 locations: median {np.median(top3):.2f}")

short = trace.restrict(0, 15 * DAY)
pool = len(most_active_pool(short))  # truncation runs on users seen every day
print(f"{pool} users active on all 15 days")
cfg = ExperimentConfig(RunConfig(sampled_users=min(80, pool), traffic_sources=30, duration=15 * DAY, seed=3),
                       experiment="reduction", runs=3)
res = run_experiment(short, cfg)
print("delivery ratio with truncated patterns")
for group in res.groups:
    print(f"  {group:7s} {res.metrics('mobyspace', group).delivery_ratio.mean:5.1f}%")

print("prediction error after k learning days")
for p in learning_experiment(trace, learning_days=15, routing_days=30):
    print(f"  k={p.days:2d}  all {p.mean_error:.4f}  most active {p.mean_error_most_active:.4f}")
