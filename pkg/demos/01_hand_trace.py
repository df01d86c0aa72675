"""Three nodes, two access points, one bundle.

A sits at location 0, B at location 1. C visits both, half its time each.
In pattern space A = (1, 0), B = (0, 1) and C = (0.5, 0.5), so C is closer
to B than A is and the pattern-distance policy hands the bundle over.
"""

from mobysim import Bundle, RunConfig, parse_sessions, run_simulation
from mobysim.engine import pattern_table

A, B, C = 0, 1, 2

trace = parse_sessions("""\
0,0,0,15
2,0,10,15
2,1,20,25
1,1,20,30
""")

table = pattern_table(trace)
print("patterns")
for name, node in (("A", A), ("B", B), ("C", C)):
    print(f"  {name} {table.matrix[node]}  distance to B {table.distance(node, B):.4f}")

bundle = Bundle(0, A, B, created_at=0)
cfg = RunConfig(duration=30)

for policy in ("mobyspace", "epidemic", "opportunistic", "potato"):
    o = run_simulation(trace, {A, B, C}, [bundle], policy, cfg, audit=True).outcomes[0]
    if o.delivered:
        print(f"{policy:14s} delivered at t={o.delivered_at} via {o.path} ({o.hops} hops)")
    else:
        print(f"{policy:14s} not delivered, custody went {o.path}")

# potato hands the bundle to C at t=10, C hands it straight back at t=11,
# and A will not pass it on again during the same visit
