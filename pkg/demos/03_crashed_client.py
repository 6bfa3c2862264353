"""
Recovering from a crashed client
================================

``c1`` proposes and then crashes, so its transaction never gets confirmed.
``c2`` conflicts with it and must wait until the pending timer (delta) expires
at the servers and consensus cancels ``c1``'s transaction. ``c3`` touches a
different key and is not slowed down at all.
"""
from byblos import checker, netsim
from byblos.cli import bundled_scenarios
from byblos.config import load_config

cfg = load_config(str(bundled_scenarios()["crashed_client_contention"]))
trace = netsim.run(cfg)

# follow c1's transaction: crash, timer, cancel, decision
for kind in ("CRASH", "TIMER_EXPIRED", "RESOLVE_START", "DECIDE"):
    evs = [e for e in trace.of_kind(kind) if e.detail.get("txn", "c1:0") == "c1:0"]
    for ev in evs[:2]:
        print(f"{ev.tick:>4} {kind:<14} {ev.node} {ev.detail}")

print()
for row in checker.measure_latency(trace):
    if row.ticks is None:
        print(f"{row.txn}: crashed, no answer")
    else:
        print(f"{row.txn}: {row.outcome} after {row.ticks} ticks, {row.extra} beyond 2.5 RTT")

# the extra delay for c2 is the timer plus one vote exchange
print("delta =", cfg.delta, " one hop =", cfg.d)
