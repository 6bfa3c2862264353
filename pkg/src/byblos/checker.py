"""Post-hoc verification of a run, working from its trace alone.

Every check is a pure function ``Trace -> Verdict``. Safety checks give a full
verdict on any trace, including a truncated one; liveness checks return N/A
unless the run reached quiescence. A failing verdict carries the length of
the shortest trace prefix that still fails, so the failure can be replayed
with ``trace.prefix(n)``.
"""
from __future__ import annotations

import statistics
from collections import defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from typing import Callable

from .core import COMMIT, LedgerState, Result, Transaction, apply, canonical_key, conflict
from .trace import Trace

PASS = "PASS"
FAIL = "FAIL"
NA = "NA"


@dataclass
class Verdict:
    name: str
    status: str
    detail: str = ""
    counterexample: int | None = None  # prefix length that still fails
    events: tuple = ()  # seq numbers of the events involved

    @property
    def ok(self) -> bool:
        return self.status != FAIL

    def line(self) -> str:
        detail = self.detail
        if self.counterexample is not None:
            detail += f" [prefix={self.counterexample}]"
        if self.events:
            detail += f" [events={','.join(map(str, self.events[:8]))}]"
        return f"PROP {self.name} {self.status} {detail}".rstrip()

    def to_json(self) -> dict:
        return {"name": self.name, "status": self.status, "detail": self.detail,
                "counterexample": self.counterexample, "events": list(self.events)}


def _field(ev, key):
    # message events keep their raw fields until rendered; avoid rendering them
    if ev._detail is None and ev._extra is not None:
        return ev._extra[key]
    return ev.detail[key]


class View:
    """Indexes over one trace, built lazily and shared between checks."""

    def __init__(self, trace: Trace):
        self.trace = trace
        self.complete = trace.complete
        cfg = trace.config
        self.config = cfg
        self.servers = list(cfg.get("servers", []))
        self.byzantine = set(cfg.get("byzantine", {}))
        self.correct = [s for s in self.servers if s not in self.byzantine]
        self.crashed_clients = set(cfg.get("crashes", {}))
        self.d = cfg.get("d", 1)

    def events(self, *kinds):
        return self.trace.of_kind(*kinds)

    @cached_property
    def txns(self) -> dict:
        """txn id string -> Transaction, for every transaction a client started."""
        out = {}
        for e in self.events("CLIENT_START"):
            out[e.detail["txn"]] = Transaction.from_json(e.detail["def"])
        return out

    @cached_property
    def confirm_ts(self) -> dict:
        """txn -> {server: ts} over correct servers."""
        out: dict = defaultdict(dict)
        for e in self.events("CONFIRM"):
            if e.node in self.correct:
                out[e.detail["txn"]][e.node] = e.detail["ts"]
        return out

    @cached_property
    def decisions(self) -> dict:
        """txn -> {server: [values]} over correct servers."""
        out: dict = defaultdict(lambda: defaultdict(list))
        for e in self.events("DECIDE"):
            if e.node in self.correct:
                out[e.detail["txn"]][e.node].append(e.detail["value"])
        return out

    @cached_property
    def committed(self) -> set:
        return {t for t, by in self.decisions.items() if any(1 in v for v in by.values())}

    @cached_property
    def logs(self) -> dict:
        """server -> list of (txn, disposition, ts, result, event seq)."""
        out = {s: [] for s in self.correct}
        for e in self.events("APPLY"):
            if e.node in out:
                d = e.detail
                out[e.node].append((d["txn"], d["disposition"], d["ts"], d["result"], e.seq))
        return out

    @cached_property
    def finals(self) -> dict:
        return {e.node: e.detail for e in self.events("FINAL")}

    def ts_of(self, txn: str):
        seen = set(self.confirm_ts.get(txn, {}).values())
        return next(iter(seen)) if len(seen) == 1 else None

    def canonical_order(self) -> list:
        known = [t for t in self.committed if self.ts_of(t) is not None and t in self.txns]
        return sorted(known, key=lambda t: canonical_key(self.txns[t].id, self.ts_of(t)))


def _view(trace) -> View:
    return trace if isinstance(trace, View) else View(trace)


# ---------------------------------------------------------------------------
# safety


def check_non_skipping(trace) -> Verdict:
    v = _view(trace)
    evs = v.events("CHOSEN")
    assigned = sorted({e.detail["ts"] for e in evs})
    if not assigned:
        return Verdict("non_skipping", PASS, "no timestamps assigned")
    missing = sorted(set(range(1, assigned[-1] + 1)) - set(assigned))
    if missing:
        first = next(e.seq for e in evs if e.detail["ts"] > missing[0])
        return Verdict("non_skipping", FAIL, f"gap at {missing[0]} (max {assigned[-1]})",
                       events=(first,))
    return Verdict("non_skipping", PASS, f"timestamps 1..{assigned[-1]}")


def check_pending_completeness(trace) -> Verdict:
    v = _view(trace)
    confirmed = {}  # txn -> ts, from any correct server
    for txn, by in v.confirm_ts.items():
        for ts in by.values():
            confirmed[txn] = ts
    checked = 0
    for e in v.events("PENDING"):
        if e.node not in v.correct:
            continue
        t = e.detail["t"]
        members = set(e.detail["members"])
        checked += 1
        for txn, ts in confirmed.items():
            if ts <= t and txn not in members:
                return Verdict("pending_completeness", FAIL,
                               f"{e.node} pending[{t}] misses {txn} confirmed at {ts}",
                               events=(e.seq,))
    return Verdict("pending_completeness", PASS, f"{checked} pending sets")


def check_same_timestamp(trace) -> Verdict:
    v = _view(trace)
    for txn, by in sorted(v.confirm_ts.items()):
        if len(set(by.values())) > 1:
            return Verdict("same_timestamp", FAIL, f"{txn} confirmed at {dict(sorted(by.items()))}")
    return Verdict("same_timestamp", PASS, f"{len(v.confirm_ts)} confirmed")


def check_resolution_agreement(trace) -> Verdict:
    v = _view(trace)
    for txn, by in sorted(v.decisions.items()):
        values = {x for vals in by.values() for x in vals}
        if len(values) > 1:
            return Verdict("resolution_agreement", FAIL, f"{txn} decided {sorted(values)} "
                           f"({ {s: vals for s, vals in sorted(by.items())} })")
    committed_at = defaultdict(set)
    cancelled_at = defaultdict(set)
    for s, log in v.logs.items():
        for txn, d, *_ in log:
            (committed_at if d == COMMIT else cancelled_at)[txn].add(s)
    both = sorted(set(committed_at) & set(cancelled_at))
    if both:
        t = both[0]
        return Verdict("resolution_agreement", FAIL,
                       f"{t} committed at {sorted(committed_at[t])}, cancelled at {sorted(cancelled_at[t])}")
    return Verdict("resolution_agreement", PASS, f"{len(v.decisions)} resolved")


def check_conflict_order(trace) -> Verdict:
    v = _view(trace)
    pos = {s: {txn: i for i, (txn, d, *_) in enumerate(log) if d == COMMIT}
           for s, log in v.logs.items()}
    applied = sorted({t for p in pos.values() for t in p if t in v.txns})
    pairs = 0
    for a, b in combinations(applied, 2):
        if not conflict(v.txns[a], v.txns[b]):
            continue
        order = {}
        for s, p in pos.items():
            if a in p and b in p:
                order[s] = p[a] < p[b]
        pairs += 1
        if len(set(order.values())) > 1:
            first = {s: (a if o else b) for s, o in sorted(order.items())}
            return Verdict("conflict_order", FAIL, f"{a} vs {b}: first applied {first}")
    return Verdict("conflict_order", PASS, f"{pairs} conflicting pairs")


def canonical_replay(v: View, only: set | None = None):
    """Replay committed transactions in canonical order from the initial state."""
    state = LedgerState()
    results = {}
    for txn in v.canonical_order():
        if only is not None and txn not in only:
            continue
        state, res = apply(v.txns[txn], state)
        results[txn] = res
    return state, results


def check_canonical_equivalence(trace) -> Verdict:
    v = _view(trace)
    name = "canonical_equivalence"
    unknown = [t for t in v.committed if v.ts_of(t) is None]
    if unknown and v.complete:
        return Verdict(name, FAIL, f"committed without a single confirmed timestamp: {sorted(unknown)}")
    _, results = canonical_replay(v)
    for s, log in v.logs.items():
        for txn, d, ts, res, seq in log:
            if d != COMMIT:
                continue
            if ts != v.ts_of(txn):
                return Verdict(name, FAIL, f"{s} applied {txn} at ts {ts}, confirmed {v.ts_of(txn)}",
                               events=(seq,))
            want = results.get(txn)
            if want is None or Result.from_json(res) != want:
                return Verdict(name, FAIL, f"{s} result for {txn} is {res}, canonical "
                                           f"{want.to_json() if want else None}", events=(seq,))
    # what clients saw
    for e in v.events("CLIENT_DONE"):
        txn = e.detail["txn"]
        if e.detail["outcome"] == "OK":
            want = results.get(txn)
            got = Result.from_json(e.detail["result"])
            if want is None or got != want:
                return Verdict(name, FAIL, f"client got {e.detail['result']} for {txn}, "
                                           f"canonical {want.to_json() if want else None}",
                               events=(e.seq,))
        elif txn in v.committed:
            return Verdict(name, FAIL, f"client told BOT for committed {txn}", events=(e.seq,))
    # real-time order between conflicting commits
    done = {e.detail["txn"]: e.seq for e in v.events("CLIENT_DONE")}
    start = {e.detail["txn"]: e.seq for e in v.events("CLIENT_START")}
    order = {t: i for i, t in enumerate(v.canonical_order())}
    for a in order:
        if a not in done:
            continue
        for b in order:
            if b in start and done[a] < start[b] and order[b] < order[a] \
                    and conflict(v.txns[a], v.txns[b]):
                return Verdict(name, FAIL, f"{a} finished before {b} started but orders after it",
                               events=(done[a], start[b]))
    # final states, once the run is over
    if v.complete:
        for s in v.correct:
            fin = v.finals.get(s)
            if fin is None:
                continue
            applied = {txn for txn, d, *_ in v.logs[s] if d == COMMIT}
            state, _ = canonical_replay(v, only=applied)
            if state.to_json() != fin["state"]:
                return Verdict(name, FAIL, f"{s} final state {fin['state']} != canonical {state.to_json()}")
    return Verdict(name, PASS, f"{len(order)} committed in canonical order")


def check_prefix_strict(trace) -> Verdict:
    """Every pair of correct logs is prefix-related. Not part of the default gate."""
    v = _view(trace)
    logs = {s: [t for t, *_ in log] for s, log in v.logs.items()}
    for a, b in combinations(sorted(logs), 2):
        la, lb = logs[a], logs[b]
        k = min(len(la), len(lb))
        if la[:k] != lb[:k]:
            i = next(i for i in range(k) if la[i] != lb[i])
            return Verdict("prefix_strict", FAIL, f"{a} and {b} diverge at {i}: {la[i]} vs {lb[i]}")
    return Verdict("prefix_strict", PASS, f"{len(logs)} logs prefix-related")


def check_consensus(trace) -> Verdict:
    """Integrity (one decision per node) and validity (unanimous input wins)."""
    v = _view(trace)
    name = "consensus"
    for txn, by in sorted(v.decisions.items()):
        for s, vals in by.items():
            if len(vals) > 1:
                return Verdict(name, FAIL, f"{s} decided {txn} {len(vals)} times")
    inputs: dict = defaultdict(dict)
    for e in v.events("RESOLVE_START"):
        if e.node in v.correct:
            inputs[e.detail["txn"]].setdefault(e.node, 1 if e.detail["code"] == COMMIT else 0)
    for txn, by in sorted(inputs.items()):
        if len(by) < len(v.correct) or len(set(by.values())) != 1:
            continue
        (x,) = set(by.values())
        got = {y for vals in v.decisions.get(txn, {}).values() for y in vals}
        if got and got != {x}:
            return Verdict(name, FAIL, f"all correct proposed {x} for {txn}, decided {sorted(got)}")
    rounds = [e.detail["round"] for e in v.events("DECIDE") if e.node in v.correct]
    return Verdict(name, PASS, f"max round {max(rounds) if rounds else 0}")


def check_fifo(trace) -> Verdict:
    last: dict = {}
    for e in _view(trace).trace.events:
        if e.kind not in ("DELIVER", "DROP"):
            continue
        key = (_field(e, "src"), e.node)
        mid = _field(e, "id")
        if last.get(key, -1) > mid:
            return Verdict("fifo", FAIL, f"{key[0]}->{key[1]} delivered {mid} after {last[key]}",
                           events=(e.seq,))
        last[key] = mid
    return Verdict("fifo", PASS, f"{len(last)} channels")


# ---------------------------------------------------------------------------
# liveness


def check_progress(trace) -> Verdict:
    """Every transaction of a correct client commits."""
    v = _view(trace)
    if not v.complete:
        return Verdict("progress", NA, "trace incomplete")
    done = {e.detail["txn"]: e.detail["outcome"] for e in v.events("CLIENT_DONE")}
    for e in v.events("CLIENT_START"):
        if e.node in v.crashed_clients:
            continue
        txn = e.detail["txn"]
        if done.get(txn) != "OK":
            return Verdict("progress", FAIL, f"{txn} of {e.node}: {done.get(txn, 'no answer')}",
                           events=(e.seq,))
    return Verdict("progress", PASS, f"{len(done)} answered")


def check_termination(trace) -> Verdict:
    """Every started resolution decides and every commit is applied everywhere correct."""
    v = _view(trace)
    if not v.complete:
        return Verdict("termination", NA, "trace incomplete")
    for s in v.correct:
        fin = v.finals.get(s, {})
        if fin.get("undecided"):
            return Verdict("termination", FAIL, f"{s} undecided on {fin['undecided'][:5]}")
        applied = {txn for txn, d, *_ in v.logs[s] if d == COMMIT}
        missing = sorted(v.committed - applied)
        if missing:
            return Verdict("termination", FAIL, f"{s} never applied {missing[:5]}")
    return Verdict("termination", PASS, f"{len(v.decisions)} instances")


SAFETY: dict[str, Callable] = {
    "non_skipping": check_non_skipping,
    "pending_completeness": check_pending_completeness,
    "same_timestamp": check_same_timestamp,
    "resolution_agreement": check_resolution_agreement,
    "conflict_order": check_conflict_order,
    "canonical_equivalence": check_canonical_equivalence,
    "consensus": check_consensus,
    "fifo": check_fifo,
}
LIVENESS: dict[str, Callable] = {
    "progress": check_progress,
    "termination": check_termination,
}
OPTIONAL: dict[str, Callable] = {
    "prefix_strict": check_prefix_strict,
}


def minimize(trace: Trace, check: Callable) -> int | None:
    """Length of the shortest failing prefix (binary search, then a local scan)."""
    if check(trace).ok:
        return None
    lo, hi = 0, len(trace)
    while lo < hi:
        mid = (lo + hi) // 2
        if check(trace.prefix(mid)).ok:
            lo = mid + 1
        else:
            hi = mid
    # non-monotone checks: make sure the answer really fails
    while hi < len(trace) and check(trace.prefix(hi)).ok:
        hi += 1
    return hi


def check_all(trace: Trace, strict_prefix: bool = False) -> list[Verdict]:
    view = View(trace)
    checks = dict(SAFETY)
    checks.update(LIVENESS)
    checks.update(OPTIONAL)
    out = []
    for name, fn in checks.items():
        verdict = fn(view)
        if verdict.status == FAIL and name in SAFETY:
            verdict.counterexample = minimize(trace, fn)
        out.append(verdict)
    return out


def gated(verdicts, strict_prefix: bool = False) -> bool:
    """True when every gated verdict passes. ``prefix_strict`` gates only on request."""
    for verdict in verdicts:
        if verdict.name == "prefix_strict" and not strict_prefix:
            continue
        if verdict.status == FAIL:
            return False
    return True


# ---------------------------------------------------------------------------
# measurements


@dataclass
class LatencyRow:
    txn: str
    client: str
    start: int
    end: int | None
    outcome: str | None
    rtt: int

    @property
    def ticks(self) -> int | None:
        return None if self.end is None else self.end - self.start

    @property
    def rtts(self) -> float | None:
        return None if self.end is None else self.ticks / self.rtt

    @property
    def extra(self) -> int | None:
        """Ticks beyond the gracious uncontended 2.5 RTT."""
        return None if self.end is None else self.ticks - 5 * self.rtt // 2

    def to_json(self) -> dict:
        return {"txn": self.txn, "client": self.client, "start": self.start, "end": self.end,
                "ticks": self.ticks, "rtt": self.rtts, "extra": self.extra,
                "outcome": self.outcome}


def measure_latency(trace) -> list[LatencyRow]:
    v = _view(trace)
    rtt = 2 * v.d
    done = {e.detail["txn"]: e for e in v.events("CLIENT_DONE")}
    rows = []
    for e in v.events("CLIENT_START"):
        txn = e.detail["txn"]
        end = done.get(txn)
        rows.append(LatencyRow(txn, e.node, e.tick, end.tick if end else None,
                               end.detail["outcome"] if end else None, rtt))
    return rows


def latency(trace, txn: str) -> int | None:
    for row in measure_latency(trace):
        if row.txn == txn:
            return row.ticks
    return None


def summarize_latency(rows) -> dict:
    ticks = [r.ticks for r in rows if r.ticks is not None]
    if not ticks:
        return {"count": 0}
    rtt = rows[0].rtt
    return {"count": len(ticks), "min": min(ticks), "median": statistics.median(ticks),
            "max": max(ticks), "min_rtt": min(ticks) / rtt,
            "median_rtt": statistics.median(ticks) / rtt, "max_rtt": max(ticks) / rtt}


def message_counts(trace) -> dict:
    end = _view(trace).trace.first("END")
    if end is None:
        return {}
    return dict(end.detail["messages"])


def consensus_rounds(trace) -> dict:
    v = _view(trace)
    rounds = defaultdict(int)
    paths = defaultdict(int)
    for e in v.events("DECIDE"):
        if e.node in v.correct:
            rounds[e.detail["round"]] += 1
            paths[e.detail["path"]] += 1
    r = [k for k in rounds]
    return {"max_round": max(r) if r else 0, "by_round": dict(sorted(rounds.items())),
            "by_path": dict(sorted(paths.items()))}


@dataclass
class Report:
    name: str
    seed: int
    status: str
    verdicts: list = field(default_factory=list)
    latency: list = field(default_factory=list)
    messages: dict = field(default_factory=dict)
    consensus: dict = field(default_factory=dict)
    strict_prefix: bool = False

    @property
    def passed(self) -> bool:
        return gated(self.verdicts, self.strict_prefix)

    def to_json(self) -> dict:
        return {
            "name": self.name, "seed": self.seed, "status": self.status,
            "passed": self.passed, "strict_prefix": self.strict_prefix,
            "verdicts": [v.to_json() for v in self.verdicts],
            "latency": [r.to_json() for r in self.latency],
            "latency_summary": summarize_latency(self.latency),
            "messages": self.messages, "total_messages": sum(self.messages.values()),
            "consensus": self.consensus,
        }

    def render(self) -> str:
        lines = [f"scenario {self.name} seed {self.seed} trace {self.status}", ""]
        lines.append("latency (RTT = 2d ticks)")
        for r in self.latency:
            if r.ticks is None:
                lines.append(f"  {r.txn:<10} {r.client:<4} start {r.start:<6} no outcome")
            else:
                lines.append(f"  {r.txn:<10} {r.client:<4} start {r.start:<6} {r.outcome:<3} "
                             f"{r.ticks:>6} ticks {r.rtts:>6.2f} RTT  extra {r.extra}")
        s = summarize_latency(self.latency)
        if s["count"]:
            lines.append(f"  min {s['min_rtt']:.2f} median {s['median_rtt']:.2f} "
                         f"max {s['max_rtt']:.2f} RTT")
        lines.append("")
        total = sum(self.messages.values())
        lines.append(f"messages {total}: " + " ".join(f"{k}={v}" for k, v in self.messages.items()))
        lines.append(f"consensus max round {self.consensus.get('max_round', 0)} "
                     f"paths {self.consensus.get('by_path', {})}")
        lines.append("")
        lines += [v.line() for v in self.verdicts]
        lines.append(f"RESULT {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines) + "\n"


def report(trace: Trace, strict_prefix: bool = False) -> Report:
    cfg = trace.config
    return Report(name=cfg.get("name", "?"), seed=cfg.get("seed", 0), status=trace.status,
                  verdicts=check_all(trace, strict_prefix), latency=measure_latency(trace),
                  messages=message_counts(trace), consensus=consensus_rounds(trace),
                  strict_prefix=strict_prefix)
