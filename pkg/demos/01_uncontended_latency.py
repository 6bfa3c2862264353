"""
One transaction, no contention
==============================

A single client increments a key on five servers. With every message taking
exactly ``d`` ticks the client hears back after five one-way delays, i.e.
2.5 round trips, and the servers exchange a quadratic number of messages.
"""
from byblos import checker, netsim
from byblos.config import ScenarioConfig, WorkItem
from byblos.core import increment

d = 10
item = WorkItem("c1", 0, frozenset({"x"}), frozenset({"x"}), increment("x", 5))
cfg = ScenarioConfig(n=5, f=1, d=d, delta=2 * d + 1, workload=(item,), name="demo")

trace = netsim.run(cfg)

###############################################################################
# Where the time goes. Each step is one network hop.

for kind in ("CLIENT_START", "CHOSEN", "CONFIRM", "DECIDE", "APPLY", "CLIENT_DONE"):
    ev = trace.first(kind)
    print(f"{ev.tick:>4}  {kind:<13} {ev.node}")

row, = checker.measure_latency(trace)
print(f"\nlatency {row.ticks} ticks = {row.rtts} RTT")

###############################################################################
# Message counts by type. The total is 4n^2 for n servers.

counts = checker.message_counts(trace)
for kind, c in counts.items():
    print(f"  {kind:<16} {c}")
print("total", sum(counts.values()), "= 4 * 5**2")
