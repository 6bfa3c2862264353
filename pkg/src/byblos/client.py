"""Client side: obtain a non-skipping timestamp, confirm it, await the result."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .core import (COMMIT, ClientId, Result, ServerId, Signer, Transaction,
                   order_statistic, txn_content)
from .messages import Ack, Confirm, Note, Propose, ProposeAck, ResolveAck, Send, TimestampProof

PROPOSING = "PROPOSING"
CONFIRMING = "CONFIRMING"
DONE = "DONE"

OUTCOME_OK = "OK"
OUTCOME_BOT = "BOT"

# crash points
NO_CRASH = "NONE"
AFTER_PROPOSE = "AFTER_PROPOSE"
AFTER_PARTIAL_CONFIRM = "AFTER_PARTIAL_CONFIRM"


@dataclass(frozen=True)
class CrashPoint:
    kind: str = NO_CRASH
    servers: int = 0  # how many servers receive the Confirm before the crash
    targets: tuple = ()  # explicit recipients; overrides ``servers``

    def __str__(self) -> str:
        if self.kind == AFTER_PARTIAL_CONFIRM:
            return f"{self.kind}({','.join(self.targets) if self.targets else self.servers})"
        return self.kind


@dataclass
class ClientState:
    txn: Transaction
    phase: str = PROPOSING
    timestamp_by_server: dict = field(default_factory=dict)
    tokens: dict = field(default_factory=dict)
    chosen_ts: int | None = None
    resolve_votes: dict = field(default_factory=dict)
    voted: dict = field(default_factory=dict)  # server -> (code, result)
    outcome: tuple | None = None
    started_at: int | None = None
    is_retry: bool = False


def choose_timestamp(acks: dict, n: int, f: int) -> int:
    """(f+1)-st largest ack over all ``n`` slots (absent = 0), plus one."""
    return order_statistic(acks.values(), n, f + 1) + 1


class Client:
    """Sequential client: at most one outstanding transaction."""

    def __init__(self, cid: ClientId, servers: Sequence[ServerId], f: int, signer: Signer,
                 crash: CrashPoint | None = None, retry_on_cancel: bool = False):
        self.id = cid
        self.servers = tuple(servers)
        self.n = len(self.servers)
        self.f = f
        self.signer = signer
        self.crash = crash or CrashPoint()
        self.retry_on_cancel = retry_on_cancel
        self.crashed = False
        self.state: ClientState | None = None
        self.history: list[ClientState] = []
        self.queue: list[tuple] = []  # (read, write, payload)
        self._seq = 0

    @property
    def busy(self) -> bool:
        return self.state is not None and self.state.phase != DONE

    # -- workload management -------------------------------------------------

    def submit(self, read_set, write_set, payload, now: int) -> list:
        if self.crashed:
            return []
        self.queue.append((frozenset(read_set), frozenset(write_set), tuple(payload), False))
        if self.busy:
            return []
        return self._next(now)

    def _next(self, now: int) -> list:
        if not self.queue or self.crashed:
            return []
        r, w, p, is_retry = self.queue.pop(0)
        txn = Transaction.create(self.id, self._seq, r, w, p)
        self._seq += 1
        out = self.start(txn, now)
        self.state.is_retry = is_retry
        return out

    # -- protocol ------------------------------------------------------------

    def start(self, txn: Transaction, now: int = 0) -> list:
        if self.busy:
            raise RuntimeError(f"{self.id} already has a transaction in flight")
        self.state = ClientState(txn=txn, started_at=now)
        self.history.append(self.state)
        token = self.signer.sign(txn_content(txn))
        self._client_token = token
        out: list = [Note("CLIENT_START", {"txn": str(txn.id), "def": txn.to_json()})]
        out += [Send(s, Propose(txn, token)) for s in self.servers]
        if self.crash.kind == AFTER_PROPOSE and not self.crashed:
            out += self._die()
        return out

    def _die(self) -> list:
        self.crashed = True
        return [Note("CRASH", {"point": str(self.crash),
                               "txn": str(self.state.txn.id) if self.state else None})]

    def on_message(self, src: ServerId, msg, now: int = 0) -> list:
        if self.crashed or self.state is None:
            return []
        if isinstance(msg, ProposeAck):
            return self.on_propose_ack(src, msg.ts, msg.token, msg.txn_id)
        if isinstance(msg, ResolveAck):
            if msg.txn_id != self.state.txn.id:
                return []
            outcome = self.on_resolve_ack(src, msg.code, msg.result)
            if outcome is None:
                return []
            return self._finish(now)
        return []

    def on_propose_ack(self, src: ServerId, ts: int, token, txn_id=None) -> list:
        st = self.state
        if st is None or st.phase != PROPOSING or src not in self.servers:
            return []
        if txn_id is not None and txn_id != st.txn.id:
            return []
        # latest ack per server wins
        st.timestamp_by_server[src] = ts
        st.tokens[src] = token
        if len(st.timestamp_by_server) < self.n - self.f:
            return []
        st.chosen_ts = choose_timestamp(st.timestamp_by_server, self.n, self.f)
        st.phase = CONFIRMING
        proof = TimestampProof(tuple(Ack(s, st.timestamp_by_server[s], st.tokens[s])
                                     for s in sorted(st.timestamp_by_server)))
        confirm = Confirm(st.txn, self._client_token, st.chosen_ts, proof)
        out: list = [Note("CHOSEN", {"txn": str(st.txn.id), "ts": st.chosen_ts,
                                     "acks": {s: st.timestamp_by_server[s]
                                              for s in sorted(st.timestamp_by_server)}})]
        targets = self.servers
        if self.crash.kind == AFTER_PARTIAL_CONFIRM and not self.crashed:
            targets = self.crash.targets or self.servers[:self.crash.servers]
            out += [Send(s, confirm) for s in targets]
            return out + self._die()
        return out + [Send(s, confirm) for s in targets]

    def on_resolve_ack(self, src: ServerId, code: str, result: Result | None):
        """Tally one server's answer; returns the outcome once decided."""
        st = self.state
        if st is None or st.phase != CONFIRMING or src not in self.servers:
            return None
        if src in st.voted:
            return None  # keep the first answer from each server
        pair = (code, result)
        st.voted[src] = pair
        st.resolve_votes.setdefault(pair, set()).add(src)
        if len(st.resolve_votes[pair]) >= self.f + 1:
            st.outcome = (OUTCOME_OK, result) if code == COMMIT else (OUTCOME_BOT, None)
            st.phase = DONE
            return st.outcome
        return None

    def _finish(self, now: int) -> list:
        st = self.state
        kind, result = st.outcome
        out: list = [Note("CLIENT_DONE", {"txn": str(st.txn.id), "outcome": kind,
                                          "result": result.to_json() if result else None,
                                          "ts": st.chosen_ts})]
        if kind == OUTCOME_BOT and self.retry_on_cancel and not st.is_retry:
            self.queue.insert(0, (st.txn.read_set, st.txn.write_set, st.txn.payload, True))
        return out + self._next(now)
