"""
Binary consensus on its own
===========================

Every transaction is resolved by one binary consensus instance (1 = commit,
0 = cancel). The harness below runs a single instance among five in-process
nodes, one of which may misbehave.
"""
from collections import Counter

from byblos.consensus import EQUIVOCATE, SILENT, simulate

nodes = ["s1", "s2", "s3", "s4", "s5"]

# all correct and unanimous: one exchange of votes
res = simulate({s: 1 for s in nodes}, f=1, synchronous=True)
print("unanimous:", res["decisions"], "waves", set(res["waves"].values()), res["paths"]["s1"])

# one silent node: four matching votes are not enough for the fast path,
# so the nodes run a round of the slow path
res = simulate({s: 1 for s in nodes[:4]}, f=1, byzantine={"s5": SILENT}, synchronous=True)
print("silent s5:", res["decisions"], "waves", set(res["waves"].values()), res["paths"]["s1"])

###############################################################################
# Split inputs under random asynchronous schedules with an equivocating node.
# Agreement must hold every time; the number of rounds varies with the coin.

rounds = Counter()
for seed in range(200):
    inputs = {"s1": 0, "s2": 1, "s3": 0, "s4": 1}
    res = simulate(inputs, f=1, seed=seed, byzantine={"s5": EQUIVOCATE}, coin_seed=seed)
    assert res["agreement"] and res["all_decided"]
    rounds[max(res["rounds"].values())] += 1
print("rounds needed:", dict(sorted(rounds.items())))
