"""
A Byzantine server, many schedules
==================================

Each behavior in the fault menu is run against a random contended workload
with jittered delays. The checkers look at every trace for the safety
properties; none of them may fail.
"""
import collections

from byblos import checker, netsim
from byblos.cli import bundled_scenarios
from byblos.config import load_config

scenarios = ["byzantine_silent", "byzantine_delay", "byzantine_equivocate",
             "byzantine_wrong_clock", "byzantine_spam_cancel"]

for name in scenarios:
    verdicts = collections.Counter()
    worst = 0.0
    for seed in range(20):
        cfg = load_config(str(bundled_scenarios()[name]), seed=seed)
        rep = checker.report(netsim.run(cfg))
        verdicts.update(v.status for v in rep.verdicts if v.name != "prefix_strict")
        worst = max(worst, checker.summarize_latency(rep.latency).get("max_rtt", 0))
    print(f"{name:<24} {dict(verdicts)}  slowest {worst:.2f} RTT")
