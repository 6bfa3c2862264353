"""Replayable record of a simulation run.

One event per line::

    <tick> <seq> <kind> <node> <json detail>

``seq`` is the event's position in the trace. The JSON detail has sorted
keys and no whitespace, so equal traces are equal byte for byte.

Kinds and their detail fields:

========================  =====================================================
CONFIG                    n, f, d, delta, seed, servers, clients, byzantine
CLIENT_START              txn, def (read, write, payload, digest)
CHOSEN                    txn, ts, acks
CLIENT_DONE               txn, outcome (OK|BOT), result, ts
CRASH                     point, txn
SEND                      id, dst, at, msg
DELIVER                   id, src, msg
DROP                      id, src, reason
CONFIRM                   txn, ts, via (client or forwarding server)
INVALID_CONFIRM           txn, ts, src
PENDING                   t, members, witnesses, deadline
TIMER_EXPIRED             t
RESOLVE_START             txn, code, ts, reason
DECIDE                    txn, value, round, path
APPLY                     txn, disposition, ts, result, index
FLAG                      what, ... (equivocation, unjustified commit start)
FINAL                     clock, log, committed, cancelled, state, undecided
END                       status (COMPLETE|INCOMPLETE), events, messages
========================  =====================================================
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .messages import describe

COMPLETE = "COMPLETE"
INCOMPLETE = "INCOMPLETE"


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


@dataclass
class Event:
    tick: int
    seq: int
    kind: str
    node: str
    _detail: dict | None = None
    _msg: object = field(default=None, repr=False)
    _extra: dict | None = field(default=None, repr=False)

    @property
    def detail(self) -> dict:
        if self._detail is None:
            d = dict(self._extra or {})
            d["msg"] = describe(self._msg)
            self._detail = d
        return self._detail

    def line(self) -> str:
        return f"{self.tick} {self.seq} {self.kind} {self.node} {_dumps(self.detail)}"

    @classmethod
    def parse(cls, line: str) -> "Event":
        tick, seq, kind, node, detail = line.rstrip("\n").split(" ", 4)
        return cls(int(tick), int(seq), kind, node, json.loads(detail))


class Trace:
    def __init__(self, events: Iterable[Event] = ()):
        self.events: list[Event] = list(events)

    def __iter__(self) -> Iterator[Event]:
        return iter(self.events)

    def __len__(self) -> int:
        return len(self.events)

    def record(self, tick: int, kind: str, node: str, detail: dict | None = None,
               msg=None, extra: dict | None = None) -> Event:
        ev = Event(tick, len(self.events), kind, node, detail, msg, extra)
        self.events.append(ev)
        return ev

    def of_kind(self, *kinds: str) -> list[Event]:
        return [e for e in self.events if e.kind in kinds]

    def first(self, kind: str) -> Event | None:
        for e in self.events:
            if e.kind == kind:
                return e
        return None

    @property
    def config(self) -> dict:
        ev = self.first("CONFIG")
        return ev.detail if ev else {}

    @property
    def status(self) -> str:
        ev = self.first("END")
        return ev.detail["status"] if ev else INCOMPLETE

    @property
    def complete(self) -> bool:
        return self.status == COMPLETE

    def prefix(self, length: int) -> "Trace":
        """The first ``length`` events, marked incomplete."""
        evs = [e for e in self.events[:length] if e.kind != "END"]
        t = Trace(evs)
        return t

    def dumps(self) -> str:
        return "".join(e.line() + "\n" for e in self.events)

    @classmethod
    def loads(cls, text: str) -> "Trace":
        return cls(Event.parse(line) for line in text.splitlines() if line.strip())

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for e in self.events:
                fh.write(e.line())
                fh.write("\n")

    @classmethod
    def read(cls, path) -> "Trace":
        with open(path, encoding="utf-8") as fh:
            return cls.loads(fh.read())
