"""
Two conflicting transactions
============================

A second transaction on the same key reaches the servers one tick before the
first one is confirmed. It shows up in the first one's pending set, both end
up with timestamp 1, and the tie is broken by a fixed order on transaction
ids. Every server applies them in that same order.
"""
from byblos import checker, netsim
from byblos.cli import bundled_scenarios
from byblos.config import load_config

cfg = load_config(str(bundled_scenarios()["gracious_contention"]))
trace = netsim.run(cfg)

# the pending set each server computed for timestamp 1
for ev in trace.of_kind("PENDING"):
    print(ev.node, "pending", ev.detail["t"], ev.detail["members"])

# apply order at every server: always the same for conflicting pairs
for s in cfg.servers:
    order = [e.detail["txn"] for e in trace.of_kind("APPLY") if e.node == s]
    print(s, "applied", order)

for row in checker.measure_latency(trace):
    print(row.txn, row.outcome, row.ticks, "ticks", row.rtts, "RTT")

# canonical equivalence: replaying in timestamp order gives the same results
print(checker.check_canonical_equivalence(trace).line())
