"""Replica state machine.

A server hands out its clock on ``Propose``, gossips proposals, computes
``pending[t]`` once ``n - f`` servers have witnessed a confirm for ``t``,
resolves every transaction through binary consensus (COMMIT when confirmed,
CANCEL when a pending timer expires) and applies committed transactions once
no conflicting pending transaction could still be ordered before them.

Handlers return lists of actions (``Send``, ``SetTimer``, ``Note``); they
never touch the network directly.
"""
from __future__ import annotations

import math
from collections import defaultdict
from typing import Callable, Sequence

from . import core
from .consensus import BinaryConsensus
from .core import (CANCEL, COMMIT, Authority, LedgerState, LogEntry, ServerId, Signer,
                   Transaction, TxnId, ack_content, conflict, order_statistic, txn_content)
from .messages import (CONSENSUS_TYPES, Confirm, Note, Propose, ProposeAck, Proposed,
                       ResolveAck, Send, SetTimer, StartResolution, TimestampProof)

PENDING_TIMER = "pending"
GRACE_TIMER = "grace"
CANCEL_JOIN_TIMER = "cancel_join"


class Server:
    def __init__(self, sid: ServerId, servers: Sequence[ServerId], f: int, delta: int,
                 signer: Signer, authority: Authority, coin: Callable[[TxnId, int], int],
                 fast_path_grace: int = 0, cancel_join_timeout: int | None = None):
        if signer.node != sid:
            raise ValueError("a server signs only as itself")
        self.id = sid
        self.servers = tuple(servers)
        self.peers = tuple(s for s in self.servers if s != sid)
        self.n = len(self.servers)
        self.f = f
        self.delta = delta
        self.signer = signer
        self.authority = authority
        self.coin = coin
        self.fast_path_grace = fast_path_grace
        self.cancel_join_timeout = cancel_join_timeout

        self.state = LedgerState()
        self.clock = 0
        self.proposed: dict[ServerId, dict[TxnId, set]] = defaultdict(dict)
        self.pending: dict[int, frozenset] = {}
        self.confirmed: dict[int, set] = defaultdict(set)
        self.committed: set = set()
        self.cancelled: set = set()
        self.resolving: set = set()
        self.log: list[LogEntry] = []
        self.in_log: set = set()
        self.timer: dict[int, float] = defaultdict(lambda: math.inf)
        self.timer_fired: set = set()
        self.confirm_witness: dict[TxnId, set] = defaultdict(set)
        self.cancel_witness: dict[TxnId, set] = defaultdict(set)
        self.confirm_forwarded: set = set()
        self.txn_store: dict[TxnId, Transaction] = {}
        self.client_tokens: dict = {}
        self.confirm_ts: dict[TxnId, int] = {}
        self.confirms: dict[TxnId, Confirm] = {}
        self.acked: dict[TxnId, int] = {}
        self.instances: dict[TxnId, BinaryConsensus] = {}
        self._grace_scheduled: set = set()
        self._cancel_join_scheduled: set = set()
        self.now = 0
        self._applied_at: tuple | None = None

    # ------------------------------------------------------------------ dispatch

    def is_server(self, node) -> bool:
        return node in self.servers

    def on_message(self, src, msg, now: int = 0) -> list:
        self.now = now
        clock_before = self.clock
        if isinstance(msg, Propose):
            out = self.handle_propose(src, msg.txn, msg.client_token)
        elif isinstance(msg, Proposed):
            out = self.handle_proposed(src, msg.txn, msg.clock, msg.client_token)
        elif isinstance(msg, Confirm):
            out = self.handle_confirm(src, msg)
        elif isinstance(msg, StartResolution):
            out = self.handle_start_resolution(src, msg)
        elif isinstance(msg, CONSENSUS_TYPES):
            out = self.handle_consensus(src, msg)
        else:
            out = []
        out += self.apply_resolved()
        assert self.clock >= clock_before, "clock went backwards"
        return out

    def on_timer(self, key: tuple, now: int = 0) -> list:
        self.now = now
        kind = key[0]
        if kind == PENDING_TIMER:
            out = self.handle_timer_expiry()
        elif kind == GRACE_TIMER:
            inst = self.instances.get(key[1])
            out = self._after_instance(inst, inst.on_grace()) if inst else []
        elif kind == CANCEL_JOIN_TIMER:
            txn_id = key[1]
            out = []
            if txn_id not in self.resolving:
                out = self.start_resolution(txn_id, None, CANCEL, reason="cancel-join timeout")
        else:
            out = []
        return out + self.apply_resolved()

    # ------------------------------------------------------------------ proposals

    def _valid_client_token(self, txn: Transaction, token) -> bool:
        return self.authority.verify(token, txn_content(txn), signer=txn.id.client)

    def handle_propose(self, src, txn: Transaction, token) -> list:
        if src != txn.id.client or not self._valid_client_token(txn, token):
            return [Note("DROP_PROPOSE", {"txn": str(txn.id), "src": src})]
        if txn.id in self.acked:
            ts = self.acked[txn.id]
            return [Send(src, ProposeAck(txn.id, self._ack_ts(txn, ts),
                                         self.signer.sign(ack_content(txn.id, self._ack_ts(txn, ts)))))]
        clock = self.clock
        self.acked[txn.id] = clock
        self.txn_store.setdefault(txn.id, txn)
        self.client_tokens.setdefault(txn.id, token)
        self.proposed[self.id].setdefault(txn.id, set()).add(clock)
        out = self._proposed_sends(txn, token, clock)
        ack = self._ack_ts(txn, clock)
        out.append(Send(src, ProposeAck(txn.id, ack, self.signer.sign(ack_content(txn.id, ack)))))
        return out + self._on_new_txn(txn)

    def _proposed_sends(self, txn, token, clock) -> list:
        return [Send(s, Proposed(txn, token, clock)) for s in self.peers]

    def _ack_ts(self, txn, clock) -> int:
        return clock

    def _on_new_txn(self, txn) -> list:
        return []

    def handle_proposed(self, src, txn: Transaction, k: int, token=None) -> list:
        if not self.is_server(src) or src == self.id:
            return []
        if token is not None and not self._valid_client_token(txn, token):
            return [Note("DROP_PROPOSED", {"txn": str(txn.id), "src": src})]
        new = txn.id not in self.txn_store
        self.txn_store.setdefault(txn.id, txn)
        if token is not None:
            self.client_tokens.setdefault(txn.id, token)
        self.proposed[src].setdefault(txn.id, set()).add(k)
        return self._on_new_txn(txn) if new else []

    # ------------------------------------------------------------------ confirms

    def validate_confirm(self, txn_id: TxnId, ts: int, proof: TimestampProof) -> bool:
        if not isinstance(proof, TimestampProof):
            return False
        acks = {}
        for ack in proof.acks:
            if ack.server not in self.servers or ack.server in acks:
                return False
            if not self.authority.verify(ack.token, ack_content(txn_id, ack.ts), signer=ack.server):
                return False
            acks[ack.server] = ack.ts
        if len(acks) < self.n - self.f:
            return False
        return ts == order_statistic(acks.values(), self.n, self.f + 1) + 1

    def handle_confirm(self, src, confirm: Confirm) -> list:
        txn = confirm.txn
        t_hat = confirm.ts
        if not (self._valid_client_token(txn, confirm.client_token)
                and self.validate_confirm(txn.id, t_hat, confirm.proof)):
            return [Note("INVALID_CONFIRM", {"txn": str(txn.id), "ts": t_hat, "src": src})]
        from_server = self.is_server(src) and src != self.id
        out: list = []
        prev = self.confirm_ts.get(txn.id)
        if prev is not None and prev != t_hat:
            return [Note("FLAG", {"what": "conflicting-confirm", "txn": str(txn.id),
                                  "ts": t_hat, "known": prev, "src": src})]
        self.clock = max(self.clock, t_hat)
        self.txn_store.setdefault(txn.id, txn)
        self.client_tokens.setdefault(txn.id, confirm.client_token)
        if prev is None:
            self.confirm_ts[txn.id] = t_hat
            self.confirms[txn.id] = confirm
            self.confirmed[t_hat].add(txn.id)
            out.append(Note("CONFIRM", {"txn": str(txn.id), "ts": t_hat,
                                        "via": src if from_server else "client"}))
        if txn.id not in self.confirm_forwarded:
            self.confirm_forwarded.add(txn.id)
            out += [Send(s, confirm) for s in self.peers]
        witnesses = self.confirm_witness[txn.id]
        witnesses.add(self.id)
        if from_server:
            witnesses.add(src)
        if t_hat not in self.pending and len(witnesses) >= self.n - self.f:
            out += self._compute_pending(t_hat, witnesses)
        if txn.id not in self.resolving:
            self.resolving.add(txn.id)
            out += self.start_resolution(txn.id, t_hat, COMMIT, confirm=confirm)
        return out

    def _compute_pending(self, t_hat: int, witnesses) -> list:
        members = set()
        for s in witnesses:
            for tid, ks in self.proposed[s].items():
                if min(ks) <= t_hat:
                    members.add(tid)
        self.pending[t_hat] = frozenset(members)
        deadline = self.now + self.delta
        self.timer[t_hat] = deadline
        return [Note("PENDING", {"t": t_hat, "members": sorted(str(m) for m in members),
                                 "witnesses": sorted(witnesses), "deadline": deadline}),
                SetTimer((PENDING_TIMER, t_hat), deadline)]

    # ------------------------------------------------------------------ resolution

    def start_resolution(self, txn_id: TxnId, ts, code: str, confirm: Confirm | None = None,
                         reason: str = "") -> list:
        """Fork a resolve attempt: announce it, then propose to consensus."""
        self.resolving.add(txn_id)
        out: list = [Note("RESOLVE_START", {"txn": str(txn_id), "code": code, "ts": ts,
                                            "reason": reason})]
        out += [Send(s, StartResolution(txn_id, ts, code, confirm)) for s in self.peers]
        inst = self._instance(txn_id)
        out += self._after_instance(inst, inst.propose(1 if code == COMMIT else 0))
        return out

    def handle_start_resolution(self, src, msg: StartResolution) -> list:
        if not self.is_server(src) or src == self.id:
            return []
        out: list = []
        if msg.code == COMMIT:
            c = msg.confirm
            if c is None or c.txn.id != msg.txn_id or c.ts != msg.ts:
                return [Note("FLAG", {"what": "unjustified-commit", "txn": str(msg.txn_id),
                                      "src": src})]
            if msg.txn_id not in self.confirm_ts or msg.txn_id not in self.resolving:
                # treated as a forwarded confirm: validates, records and joins
                out += self.handle_confirm(src, c)
            if msg.txn_id not in self.resolving and msg.txn_id in self.confirm_ts:
                out += self.start_resolution(msg.txn_id, msg.ts, COMMIT, confirm=c)
            return out
        if msg.code == CANCEL and msg.txn_id not in self.resolving:
            self.cancel_witness[msg.txn_id].add(src)
            if len(self.cancel_witness[msg.txn_id]) >= self.f + 1:
                out += self.start_resolution(msg.txn_id, None, CANCEL, reason="cancel witnesses")
            elif (self.cancel_join_timeout is not None
                  and msg.txn_id not in self._cancel_join_scheduled):
                self._cancel_join_scheduled.add(msg.txn_id)
                out.append(SetTimer((CANCEL_JOIN_TIMER, msg.txn_id),
                                    self.now + self.cancel_join_timeout))
        return out

    def handle_timer_expiry(self) -> list:
        out: list = []
        for t in sorted(self.pending):
            if t in self.timer_fired or self.timer[t] > self.now:
                continue
            self.timer_fired.add(t)
            out.append(Note("TIMER_EXPIRED", {"t": t}))
            for txn_id in sorted(self.pending[t]):
                if txn_id not in self.resolving:
                    out += self.start_resolution(txn_id, None, CANCEL, reason=f"timer {t}")
        return out

    # ------------------------------------------------------------------ consensus glue

    def _instance(self, txn_id: TxnId) -> BinaryConsensus:
        inst = self.instances.get(txn_id)
        if inst is None:
            inst = BinaryConsensus(txn_id, self.id, self.servers, self.f, self.coin)
            self.instances[txn_id] = inst
        return inst

    def handle_consensus(self, src, msg) -> list:
        if not self.is_server(src) or src == self.id:
            return []
        inst = self._instance(msg.instance)
        return self._after_instance(inst, inst.on_message(src, msg))

    def _after_instance(self, inst: BinaryConsensus, msgs: list) -> list:
        decided_before = getattr(inst, "_reported", False)
        out = [Send(s, m) for m in msgs for s in self.peers]
        while inst.flags:
            who, what, detail = inst.flags.pop(0)
            out.append(Note("FLAG", {"what": what, "src": who, "txn": str(inst.instance_id),
                                     "detail": detail}))
        if inst.grace_requested and inst.instance_id not in self._grace_scheduled:
            self._grace_scheduled.add(inst.instance_id)
            out.append(SetTimer((GRACE_TIMER, inst.instance_id), self.now + self.fast_path_grace))
        if inst.decision is not None and not decided_before:
            inst._reported = True
            out += self.on_resolution_decided(inst.instance_id, inst.decision)
        return out

    def on_resolution_decided(self, txn_id: TxnId, decision: int) -> list:
        inst = self.instances.get(txn_id)
        self.resolving.add(txn_id)
        if decision == 1:
            assert txn_id not in self.cancelled
            self.committed.add(txn_id)
        else:
            assert txn_id not in self.committed
            self.cancelled.add(txn_id)
        return [Note("DECIDE", {"txn": str(txn_id), "value": decision,
                                "round": inst.decided_round if inst else None,
                                "path": inst.path if inst else None})]

    # ------------------------------------------------------------------ application

    def order_before(self, a: TxnId, b: TxnId) -> bool:
        ta = self.confirm_ts.get(a)
        tb = self.confirm_ts.get(b)
        if ta is None or tb is None:
            return False
        return ta < tb or (ta == tb and a < b)

    def _can_apply(self, txn_id: TxnId) -> bool:
        t = self.confirm_ts.get(txn_id)
        if t is None or t not in self.pending:
            return False
        txn = self.txn_store[txn_id]
        for other in self.pending[t]:
            if other == txn_id:
                continue
            if (other in self.cancelled or other in self.in_log
                    or not conflict(txn, self.txn_store[other])
                    or self.order_before(txn_id, other)):
                continue
            return False
        return True

    def _apply_inputs(self) -> tuple:
        # every input of the apply loop only grows, so sizes detect change
        return (len(self.pending), len(self.committed), len(self.cancelled),
                len(self.confirm_ts), len(self.in_log))

    def apply_resolved(self) -> list:
        if self._apply_inputs() == self._applied_at:
            return []
        out: list = []
        while True:
            progressed = False
            for txn_id in sorted(self.cancelled - self.in_log):
                entry = LogEntry(txn_id, CANCEL, self.confirm_ts.get(txn_id))
                self._append(entry)
                out.append(Note("APPLY", {"txn": str(txn_id), "disposition": CANCEL,
                                          "ts": entry.assigned_ts, "result": None,
                                          "index": len(self.log) - 1}))
                out.append(Send(txn_id.client, ResolveAck(txn_id, CANCEL, None)))
                progressed = True
            eligible = [t for t in self.committed - self.in_log if self._can_apply(t)]
            if eligible:
                txn_id = min(eligible, key=lambda t: core.canonical_key(t, self.confirm_ts[t]))
                txn = self.txn_store[txn_id]
                self.state, result = core.apply(txn, self.state)
                entry = LogEntry(txn_id, COMMIT, self.confirm_ts[txn_id], result)
                self._append(entry)
                out.append(Note("APPLY", {"txn": str(txn_id), "disposition": COMMIT,
                                          "ts": entry.assigned_ts, "result": result.to_json(),
                                          "index": len(self.log) - 1}))
                out.append(Send(txn_id.client, ResolveAck(txn_id, COMMIT, result)))
                progressed = True
            if not progressed:
                self._applied_at = self._apply_inputs()
                return out

    def _append(self, entry: LogEntry) -> None:
        assert entry.txn not in self.in_log
        assert entry.txn in self.committed or entry.txn in self.cancelled
        self.log.append(entry)
        self.in_log.add(entry.txn)

    def summary(self) -> dict:
        return {
            "clock": self.clock,
            "log": len(self.log),
            "committed": len(self.committed),
            "cancelled": len(self.cancelled),
            "state": self.state.to_json(),
            "undecided": sorted(str(t) for t, i in self.instances.items()
                                if i.decision is None and i.proposed),
        }


# ---------------------------------------------------------------------------
# Byzantine variants. They sign only as themselves; the network enforces it.

SILENT = "SILENT"
DELAY = "DELAY"
EQUIVOCATE_PROPOSED = "EQUIVOCATE_PROPOSED"
WRONG_CLOCK = "WRONG_CLOCK"
SPAM_CANCEL = "SPAM_CANCEL"

BEHAVIORS = (SILENT, DELAY, EQUIVOCATE_PROPOSED, WRONG_CLOCK, SPAM_CANCEL)


class SilentServer(Server):
    behavior = SILENT

    def on_message(self, src, msg, now=0):
        return []

    def on_timer(self, key, now=0):
        return []


class DelayServer(Server):
    """Follows the protocol; the network adds ``extra_delay`` to every send."""

    behavior = DELAY

    def __init__(self, *args, extra_delay: int = 0, **kw):
        super().__init__(*args, **kw)
        self.extra_delay = extra_delay


class EquivocatingServer(Server):
    """Tells different peers different things about the clock it proposed at."""

    behavior = EQUIVOCATE_PROPOSED

    def _proposed_sends(self, txn, token, clock):
        out = []
        for i, s in enumerate(self.peers):
            if i % 3 == 0:
                out.append(Send(s, Proposed(txn, token, clock)))
                out.append(Send(s, Proposed(txn, token, clock + 3)))
            elif i % 3 == 1:
                out.append(Send(s, Proposed(txn, token, 0)))
            # i % 3 == 2: says nothing
        return out


class WrongClockServer(Server):
    """Reports wildly wrong clocks, inflated or zero, under its own name."""

    behavior = WRONG_CLOCK
    offset = 1000

    def _ack_ts(self, txn, clock):
        return clock + self.offset if txn.id.digest % 2 == 0 else 0

    def _proposed_sends(self, txn, token, clock):
        k = self._ack_ts(txn, clock)
        return [Send(s, Proposed(txn, token, k)) for s in self.peers]


class SpamCancelServer(Server):
    """Tries to cancel every transaction the moment it hears about it."""

    behavior = SPAM_CANCEL

    def _on_new_txn(self, txn):
        if txn.id in self.resolving:
            return []
        return self.start_resolution(txn.id, None, CANCEL, reason="spam")


BYZANTINE_CLASSES = {
    SILENT: SilentServer,
    DELAY: DelayServer,
    EQUIVOCATE_PROPOSED: EquivocatingServer,
    WRONG_CLOCK: WrongClockServer,
    SPAM_CANCEL: SpamCancelServer,
}
