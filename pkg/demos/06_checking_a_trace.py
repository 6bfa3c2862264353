"""
Checking and minimizing a trace
===============================

Traces are plain text, one event per line, so they can be saved, diffed and
reloaded. Here a real trace is tampered with (one server reports a different
timestamp) and the checker finds the shortest prefix that already fails.
"""
import json

from byblos import checker, netsim
from byblos.cli import bundled_scenarios
from byblos.config import load_config
from byblos.trace import Trace

cfg = load_config(str(bundled_scenarios()["gracious_contention"]))
text = netsim.run(cfg).dumps()
print(text.splitlines()[0][:100], "...")
print(len(text.splitlines()), "events")

lines = []
for line in text.splitlines():
    tick, seq, kind, node, detail = line.split(" ", 4)
    if kind == "CONFIRM" and node == "s3":
        d = json.loads(detail)
        d["ts"] += 4
        detail = json.dumps(d, sort_keys=True, separators=(",", ":"))
    lines.append(" ".join((tick, seq, kind, node, detail)))
bad = Trace.loads("\n".join(lines))

for v in checker.check_all(bad):
    print(v.line())

cut = checker.minimize(bad, checker.check_same_timestamp)
print("\nshortest failing prefix:", cut, "events; last one:")
print(" ", bad.events[cut - 1].line())
