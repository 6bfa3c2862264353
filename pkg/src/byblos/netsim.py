"""Deterministic discrete-event network.

Time is integer ticks. Events run in ``(at, seq)`` order, where ``seq`` is
a global scheduling counter, so a run is a pure function of its
configuration and seed. Channels are FIFO per ordered pair, which is
enforced by clamping each delivery to be no earlier than the previous one on
the same channel. Processing takes zero time.

Nodes never send directly. Handlers return actions and the simulator executes
them under the identity of the node that produced them, so a node cannot put
another node's name on a message.
"""
from __future__ import annotations

import heapq
import random
from collections import Counter
from typing import Iterable

from .client import Client
from .config import ALWAYS, ScenarioConfig
from .consensus import common_coin
from .core import Authority
from .messages import Note, Send, SetTimer, message_kind, message_txn
from .server import BYZANTINE_CLASSES, DELAY, Server
from .trace import COMPLETE, INCOMPLETE, Trace

DELIVER = "DELIVER"
TIMER = "TIMER"
CALL = "CALL"


class ForgedSender(Exception):
    """A node tried to send under an identity other than its own."""


class Simulator:
    def __init__(self, config: ScenarioConfig, trace: Trace | None = None):
        self.config = config
        self.rng = random.Random(f"net:{config.seed}")
        self.trace = trace if trace is not None else Trace()
        self.nodes: dict = {}
        self.crashed: set = set()
        self.now = 0
        self.actor: str | None = None
        self._queue: list = []
        self._seq = 0
        self._msg_id = 0
        self._last_delivery: dict = {}
        self.sent = Counter()
        self.deliveries: list = []  # (src, dst, id) in delivery order

    # -- scheduling -----------------------------------------------------

    def _push(self, at: int, kind: str, payload) -> None:
        heapq.heappush(self._queue, (at, self._seq, kind, payload))
        self._seq += 1

    def add_node(self, node_id: str, node) -> None:
        self.nodes[node_id] = node

    def call_at(self, at: int, node_id: str, fn, *args) -> None:
        """Run ``fn(*args, now)`` as ``node_id`` at tick ``at``."""
        self._push(at, CALL, (node_id, fn, args))

    # -- delays ---------------------------------------------------------

    def in_sync(self, t: int) -> bool:
        w = self.config.synchrony_windows
        if w == ALWAYS:
            return True
        return any(a <= t < b for a, b in w)

    def _next_window(self, t: int) -> int | None:
        w = self.config.synchrony_windows
        starts = [a for a, _ in w if a > t]
        return min(starts) if starts else None

    def _base_delay(self) -> int:
        cfg = self.config
        if cfg.delay == "fixed":
            return cfg.d
        return self.rng.randint(cfg.min_delay, cfg.d)

    def draw_delay(self, src: str, dst: str, msg, now: int) -> int:
        cfg = self.config
        kind = message_kind(msg)
        txn = str(message_txn(msg))
        for o in cfg.overrides:
            if o.matches(src, dst, kind, txn):
                delay = o.delay
                break
        else:
            delay = self._base_delay()
            if not self.in_sync(now):
                nxt = self._next_window(now)
                async_max = cfg.async_max or 10 * cfg.d
                if nxt is not None:
                    delay = (nxt - now) + delay
                else:
                    delay = self.rng.randint(cfg.d, max(cfg.d, async_max))
        node = self.nodes.get(src)
        delay += getattr(node, "extra_delay", 0)
        return delay

    # -- sending --------------------------------------------------------

    def inject(self, msg, src: str, dst: str, now: int | None = None) -> int:
        """Enqueue a delivery of ``msg`` from ``src`` to ``dst``; returns its tick."""
        if self.actor is not None and src != self.actor:
            raise ForgedSender(f"{self.actor} tried to send as {src}")
        now = self.now if now is None else now
        at = max(now + self.draw_delay(src, dst, msg, now), self._last_delivery.get((src, dst), 0))
        self._last_delivery[(src, dst)] = at
        mid = self._msg_id
        self._msg_id += 1
        self.sent[message_kind(msg)] += 1
        if self.config.trace_messages:
            self.trace.record(now, "SEND", src, msg=msg, extra={"id": mid, "dst": dst, "at": at})
        self._push(at, DELIVER, (src, dst, msg, mid))
        return at

    def execute(self, node_id: str, actions: Iterable) -> None:
        prev, self.actor = self.actor, node_id
        try:
            for a in actions:
                if isinstance(a, Send):
                    self.inject(a.msg, node_id, a.dst, self.now)
                elif isinstance(a, SetTimer):
                    self._push(max(a.at, self.now), TIMER, (node_id, a.key))
                elif isinstance(a, Note):
                    self.trace.record(self.now, a.kind, node_id, a.detail)
                else:
                    raise TypeError(f"unknown action {a!r}")
        finally:
            self.actor = prev

    def crash(self, node_id: str) -> None:
        self.crashed.add(node_id)

    # -- main loop ------------------------------------------------------

    def run(self, horizon: int | None = None) -> str:
        horizon = self.config.horizon if horizon is None else horizon
        while self._queue:
            at = self._queue[0][0]
            if at > horizon:
                return INCOMPLETE
            at, _, kind, payload = heapq.heappop(self._queue)
            self.now = at
            if kind == DELIVER:
                src, dst, msg, mid = payload
                node = self.nodes.get(dst)
                if node is None or dst in self.crashed or getattr(node, "crashed", False):
                    if self.config.trace_messages:
                        self.trace.record(at, "DROP", dst, {"id": mid, "src": src,
                                                            "reason": "crashed"})
                    continue
                if self.config.trace_messages:
                    self.trace.record(at, "DELIVER", dst, msg=msg, extra={"id": mid, "src": src})
                self.deliveries.append((src, dst, mid))
                self.execute(dst, node.on_message(src, msg, at))
            elif kind == TIMER:
                node_id, key = payload
                if node_id in self.crashed:
                    continue
                self.trace.record(at, "TIMER", node_id, {"key": [str(k) for k in key]})
                self.execute(node_id, self.nodes[node_id].on_timer(key, at))
            elif kind == CALL:
                node_id, fn, args = payload
                self.execute(node_id, fn(*args, at))
        return COMPLETE


# ---------------------------------------------------------------------------


def build(config: ScenarioConfig) -> Simulator:
    """Wire servers and clients for ``config`` without running anything."""
    config.validate()
    sim = Simulator(config)
    authority = Authority(config.seed)
    servers = config.servers

    def coin(instance, rnd):
        return common_coin(config.seed, instance, rnd)

    byz = config.fault_schedule.byzantine_servers
    for sid in servers:
        kwargs = dict(fast_path_grace=config.fast_path_grace,
                      cancel_join_timeout=config.effective_cancel_join_timeout)
        spec = byz.get(sid)
        cls = Server if spec is None else BYZANTINE_CLASSES[spec.behavior]
        if spec is not None and spec.behavior == DELAY:
            kwargs["extra_delay"] = spec.extra_delay
        sim.add_node(sid, cls(sid, servers, config.f, config.delta, authority.signer(sid),
                              authority, coin, **kwargs))
    for cid in config.clients:
        sim.add_node(cid, Client(cid, servers, config.f, authority.signer(cid),
                                 crash=config.fault_schedule.client_crashes.get(cid),
                                 retry_on_cancel=config.retry_on_cancel))
    sim.trace.record(0, "CONFIG", "-", {
        "name": config.name, "n": config.n, "f": config.f, "d": config.d,
        "delta": config.delta, "seed": config.seed, "servers": list(servers),
        "clients": list(config.clients),
        "byzantine": {s: str(b) for s, b in sorted(byz.items())},
        "crashes": {c: str(p) for c, p in sorted(config.fault_schedule.client_crashes.items())},
        "delay": config.delay, "horizon": config.horizon,
    })
    for item in config.workload:
        client = sim.nodes[item.client]
        sim.call_at(item.start, item.client, client.submit, item.read_set, item.write_set,
                    item.payload)
    return sim


def run(config: ScenarioConfig) -> Trace:
    """Execute ``config`` to quiescence or its horizon and return the trace."""
    sim = build(config)
    status = sim.run()
    finish(sim, status)
    return sim.trace


def finish(sim: Simulator, status: str) -> None:
    byz = sim.config.fault_schedule.byzantine_servers
    for sid in sim.config.servers:
        node = sim.nodes[sid]
        summary = node.summary()
        summary["correct"] = sid not in byz
        sim.trace.record(sim.now, "FINAL", sid, summary)
    sim.trace.record(sim.now, "END", "-", {
        "status": status,
        "messages": dict(sorted(sim.sent.items())),
        "total_messages": sum(sim.sent.values()),
    })
