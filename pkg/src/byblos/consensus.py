"""Binary Byzantine consensus used to resolve each transaction.

One instance per transaction, keyed by its ``TxnId``. The reference protocol:

* a vote exchange: every participant broadcasts its initial value. A node that
  sees more than ``(n + 3f) / 2`` identical votes decides at once (one message
  delay). After ``n - f`` votes and a zero-length grace period, the node adopts
  the strict majority of what it saw, or keeps its own input on a tie.
* rounds of binary-value broadcast (``Est``), an auxiliary exchange (``Aux``)
  and a common coin, in the style of Mostefaoui, Moumen and Raynal. Both
  quorums are ``n - f``. The round-1 coin is fixed at 1; later rounds use the
  shared pseudo-random coin.

A decided node broadcasts ``Decide`` and stops. Its ``Decide`` counts as its
``Est``/``Aux`` in every later round, so nodes still running keep their
quorums. Nodes that decided on the fast path only send ``Decide`` once
someone else starts the slow rounds, which keeps gracious runs at one
exchange.
"""
from __future__ import annotations

import hashlib
from collections import defaultdict
from typing import Callable, Sequence

from .core import NodeId, TxnId
from .messages import Aux, Decide, Est, Vote

FAST = "fast"
SLOW = "slow"
RELAY = "relay"


def common_coin(seed: int, instance: TxnId, rnd: int) -> int:
    h = hashlib.blake2b(f"coin:{seed}:{instance.client}:{instance.seq}:{instance.digest}:{rnd}".encode(),
                        digest_size=8).digest()
    return h[0] & 1


class BinaryConsensus:
    """State machine for one consensus instance at one node.

    Methods return the messages to broadcast to every *other* participant;
    the node's own contribution is recorded locally. After each call the
    owner checks ``decision`` and ``grace_requested``.
    """

    def __init__(self, instance_id: TxnId, me: NodeId, participants: Sequence[NodeId], f: int,
                 coin: Callable[[TxnId, int], int]):
        self.instance_id = instance_id
        self.me = me
        self.participants = tuple(participants)
        self.n = len(self.participants)
        self.f = f
        self.coin = coin

        self.proposed = False
        self.my_value: int | None = None
        self.est: int | None = None
        self.round = 0  # 0 is the vote exchange
        self.decision: int | None = None
        self.decided_round: int | None = None
        self.path: str | None = None
        self.halted = False
        self.decide_sent = False
        self.grace_requested = False
        self._grace_done = False

        self.votes: dict[NodeId, int] = {}
        self.est_from: dict[int, dict[int, set]] = defaultdict(lambda: {0: set(), 1: set()})
        self.est_sent: dict[int, set] = defaultdict(set)
        self.bin_values: dict[int, list] = defaultdict(list)
        self.aux: dict[int, dict[NodeId, int]] = defaultdict(dict)
        self.decides: dict[NodeId, tuple[int, int]] = {}
        self.flags: list[tuple] = []

    # Agreement only needs every node to see the same coin; it need not be
    # random in every round. A commit-biased first coin lets an undisputed
    # COMMIT finish in round 1 when the vote exchange fell short of unanimity.
    first_coin: int | None = 1

    def coin_value(self, rnd: int) -> int:
        if rnd == 1 and self.first_coin is not None:
            return self.first_coin
        return self.coin(self.instance_id, rnd)

    @property
    def quorum(self) -> int:
        return self.n - self.f

    # -- tallies ---------------------------------------------------------

    def _virtual(self, rnd: int):
        for src, (value, from_round) in self.decides.items():
            if from_round <= rnd:
                yield src, value

    def _est_support(self, rnd: int, value: int) -> int:
        senders = set(self.est_from[rnd][value])
        senders.update(src for src, v in self._virtual(rnd) if v == value)
        return len(senders)

    def _aux_values(self, rnd: int) -> dict:
        vals = dict(self.aux[rnd])
        for src, v in self._virtual(rnd):
            vals.setdefault(src, v)
        return vals

    def _all_votes(self) -> dict:
        vals = dict(self.votes)
        for src, (v, _) in self.decides.items():
            vals.setdefault(src, v)
        return vals

    # -- entry points ----------------------------------------------------

    def propose(self, value: int) -> list:
        if value not in (0, 1):
            raise ValueError("binary consensus takes 0 or 1")
        if self.proposed:
            return []
        self.proposed = True
        self.my_value = value
        if self.decision is not None:
            return []
        self.votes[self.me] = value
        return [Vote(self.instance_id, value)] + self._progress()

    def on_message(self, src: NodeId, msg) -> list:
        if src not in self.participants:
            self.flags.append((src, "outsider", type(msg).__name__))
            return []
        if isinstance(msg, Vote):
            self._record_first(self.votes, src, msg.value, "vote")
        elif isinstance(msg, Est):
            if msg.value in (0, 1) and msg.round >= 1:
                self.est_from[msg.round][msg.value].add(src)
        elif isinstance(msg, Aux):
            if msg.value in (0, 1) and msg.round >= 1:
                self._record_first(self.aux[msg.round], src, msg.value, f"aux{msg.round}")
        elif isinstance(msg, Decide):
            if msg.value in (0, 1):
                prev = self.decides.get(src)
                if prev is None:
                    self.decides[src] = (msg.value, max(1, msg.round))
                elif prev[0] != msg.value:
                    self.flags.append((src, "equivocation", "decide"))
        if self.halted:
            return []
        out = []
        if (self.decision is not None and not self.decide_sent
                and isinstance(msg, (Est, Aux))):
            # someone is on the slow path; lend them our decision
            out += self._send_decide(1 if self.path == FAST else self.round)
        return out + self._progress()

    def on_grace(self) -> list:
        self._grace_done = True
        if self.halted:
            return []
        return self._progress()

    # -- internals -------------------------------------------------------

    def _record_first(self, table: dict, src: NodeId, value: int, what: str) -> None:
        if value not in (0, 1):
            return
        if src in table:
            if table[src] != value:
                self.flags.append((src, "equivocation", what))
            return
        table[src] = value

    def _decide(self, value: int, path: str) -> None:
        self.decision = value
        self.decided_round = self.round
        self.path = path
        self.est = value

    def _send_decide(self, from_round: int) -> list:
        self.decide_sent = True
        self.halted = True
        self.decides.setdefault(self.me, (self.decision, max(1, from_round)))
        return [Decide(self.instance_id, max(1, from_round), self.decision)]

    def _progress(self) -> list:
        out: list = []
        if self.decision is None:
            out += self._check_relay()
        if self.decision is None and self.proposed:
            out += self._check_fast()
        if self.decision is not None:
            return out
        if not self.proposed:
            return out
        if self.round == 0:
            votes = self._all_votes()
            if len(votes) < self.quorum:
                return out
            if not self._grace_done:
                self.grace_requested = True
                return out
            ones = sum(votes.values())
            zeros = len(votes) - ones
            if 2 * ones > len(votes):
                self.est = 1
            elif 2 * zeros > len(votes):
                self.est = 0
            else:
                self.est = self.my_value
            out += self._enter_round(1)
        while self.decision is None:
            step = self._round_step()
            if step is None:
                break
            out += step
        return out

    def _check_relay(self) -> list:
        counts = {0: 0, 1: 0}
        for v, _ in self.decides.values():
            counts[v] += 1
        for v in (0, 1):
            if counts[v] >= self.f + 1:
                self._decide(v, RELAY)
                return self._send_decide(max(1, self.round))
        return []

    def _check_fast(self) -> list:
        votes = self._all_votes()
        for v in (0, 1):
            count = sum(1 for x in votes.values() if x == v)
            if 2 * count > self.n + 3 * self.f:
                self._decide(v, FAST)
                if self.round >= 1 or self._slow_path_seen():
                    # others may already be waiting on our round messages
                    return self._send_decide(max(1, self.round))
                return []
        return []

    def _slow_path_seen(self) -> bool:
        for rnd, by_value in self.est_from.items():
            if any(src != self.me for senders in by_value.values() for src in senders):
                return True
        return any(src != self.me for table in self.aux.values() for src in table)

    def _enter_round(self, rnd: int) -> list:
        self.round = rnd
        self.est_sent[rnd].add(self.est)
        self.est_from[rnd][self.est].add(self.me)
        return [Est(self.instance_id, rnd, self.est)]

    def _round_step(self) -> list | None:
        """Advance the current round once; ``None`` when blocked."""
        rnd = self.round
        out: list = []
        changed = False
        for v in (0, 1):
            support = self._est_support(rnd, v)
            if support >= self.f + 1 and v not in self.est_sent[rnd]:
                self.est_sent[rnd].add(v)
                self.est_from[rnd][v].add(self.me)
                out.append(Est(self.instance_id, rnd, v))
                changed = True
                support = self._est_support(rnd, v)
            if support >= 2 * self.f + 1 and v not in self.bin_values[rnd]:
                self.bin_values[rnd].append(v)
                changed = True
        if self.bin_values[rnd] and self.me not in self.aux[rnd]:
            w = self.bin_values[rnd][0]
            self.aux[rnd][self.me] = w
            out.append(Aux(self.instance_id, rnd, w))
            changed = True
        bins = set(self.bin_values[rnd])
        valid = [v for v in self._aux_values(rnd).values() if v in bins]
        if len(valid) >= self.quorum:
            vals = set(valid)
            s = self.coin_value(rnd)
            if len(vals) == 1:
                (v,) = vals
                if v == s:
                    self._decide(v, SLOW)
                    return out + self._send_decide(rnd + 1)
                self.est = v
            else:
                self.est = s
            return out + self._enter_round(rnd + 1)
        return out if changed else None


# ---------------------------------------------------------------------------
# standalone harness


SILENT = "silent"
EQUIVOCATE = "equivocate"
FLIP = "flip"


def _forge(msg, value):
    if isinstance(msg, Vote):
        return Vote(msg.instance, value)
    return type(msg)(msg.instance, msg.round, value)


def simulate(inputs: dict, f: int, seed: int = 0, byzantine: dict | None = None,
             synchronous: bool = False, instance: TxnId | None = None,
             coin_seed: int = 0, max_steps: int = 200_000) -> dict:
    """Run one instance among in-process nodes under a seeded adversary.

    ``inputs`` maps every correct node to its initial value; ``byzantine``
    maps the remaining nodes to ``silent``, ``equivocate`` (a random value
    to each peer, in every message type it sees) or ``flip`` (the opposite
    of whatever it hears). Asynchronous mode delivers one random pending
    message at a time. Synchronous mode delivers in waves: everything sent
    in wave ``k`` arrives, in random order, during wave ``k + 1``; the result
    reports the wave in which each node decided.
    """
    import random

    byzantine = dict(byzantine or {})
    nodes = sorted(set(inputs) | set(byzantine))
    inst_id = instance or TxnId("harness", 0, coin_seed)
    rng = random.Random(f"consensus:{seed}")

    def coin(i, r):
        return common_coin(coin_seed, i, r)

    inst = {s: BinaryConsensus(inst_id, s, nodes, f, coin) for s in inputs}
    pool: list = []  # (src, dst, msg)
    decided_at: dict = {}

    def emit(src, msgs):
        for m in msgs:
            for dst in nodes:
                if dst != src:
                    pool.append((src, dst, m))

    def byz_react(b, msg):
        kind = byzantine[b]
        if kind == SILENT:
            return
        for dst in inputs:
            if kind == EQUIVOCATE:
                pool.append((b, dst, _forge(msg, rng.randint(0, 1))))
            else:
                pool.append((b, dst, _forge(msg, 1 - msg.value)))

    graces: set = set()

    def step_node(s, msgs, wave):
        emit(s, msgs)
        node = inst[s]
        if node.grace_requested and s not in graces:
            graces.add(s)
            pool.append((None, s, None))  # the grace timer, as a pending event
        if node.decision is not None and s not in decided_at:
            decided_at[s] = wave

    for s in inputs:
        step_node(s, inst[s].propose(inputs[s]), 0)
    for b in byzantine:
        if byzantine[b] != SILENT:
            for dst in inputs:
                pool.append((b, dst, Vote(inst_id, rng.randint(0, 1))))

    steps = 0
    wave = 0
    seen_by_byz = set()
    while pool and steps < max_steps and len(decided_at) < len(inputs):
        if synchronous:
            batch, pool[:] = pool[:], []
            rng.shuffle(batch)
            wave += 1
        else:
            batch = [pool.pop(rng.randrange(len(pool)))]
        for src, dst, msg in batch:
            steps += 1
            if src is None:
                step_node(dst, inst[dst].on_grace(), wave)
                continue
            if dst in byzantine:
                key = (type(msg).__name__, getattr(msg, "round", 0))
                if key not in seen_by_byz:
                    seen_by_byz.add(key)
                    for b in byzantine:
                        byz_react(b, msg)
                continue
            step_node(dst, inst[dst].on_message(src, msg), wave)
        if synchronous:
            # zero-length timers set during this wave fire before the next one
            while any(item[0] is None for item in pool):
                fired = [item for item in pool if item[0] is None]
                pool[:] = [item for item in pool if item[0] is not None]
                for _, dst, _ in fired:
                    step_node(dst, inst[dst].on_grace(), wave)
    decisions = {s: n.decision for s, n in inst.items()}
    return {
        "decisions": decisions,
        "agreement": len({v for v in decisions.values() if v is not None}) <= 1,
        "all_decided": all(v is not None for v in decisions.values()),
        "rounds": {s: n.decided_round for s, n in inst.items()},
        "paths": {s: n.path for s, n in inst.items()},
        "waves": decided_at,
        "steps": steps,
        "flags": {s: list(n.flags) for s, n in inst.items() if n.flags},
    }
