"""Wire messages exchanged by clients and servers.

Every message is an immutable value. The sender is never part of the
message body: the network attaches the authenticated sender on delivery.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

from .core import AuthToken, Result, ServerId, Transaction, TxnId


@dataclass(frozen=True)
class Propose:
    txn: Transaction
    client_token: AuthToken


@dataclass(frozen=True)
class ProposeAck:
    txn_id: TxnId
    ts: int
    token: AuthToken


@dataclass(frozen=True)
class Proposed:
    txn: Transaction
    client_token: AuthToken
    clock: int


@dataclass(frozen=True)
class Ack:
    """One signed timestamp inside a proof."""

    server: ServerId
    ts: int
    token: AuthToken


@dataclass(frozen=True)
class TimestampProof:
    acks: tuple  # of Ack, sorted by server


@dataclass(frozen=True)
class Confirm:
    txn: Transaction
    client_token: AuthToken
    ts: int
    proof: TimestampProof


@dataclass(frozen=True)
class StartResolution:
    txn_id: TxnId
    ts: int | None
    code: str
    # COMMIT attempts carry the confirm that justified them
    confirm: Confirm | None = None


@dataclass(frozen=True)
class ResolveAck:
    txn_id: TxnId
    code: str
    result: Result | None


# consensus-internal; ``instance`` is the TxnId being resolved


@dataclass(frozen=True)
class Vote:
    instance: TxnId
    value: int


@dataclass(frozen=True)
class Est:
    instance: TxnId
    round: int
    value: int


@dataclass(frozen=True)
class Aux:
    instance: TxnId
    round: int
    value: int


@dataclass(frozen=True)
class Decide:
    instance: TxnId
    round: int
    value: int


ConsensusMessage = Union[Vote, Est, Aux, Decide]
CONSENSUS_TYPES = (Vote, Est, Aux, Decide)

Message = Union[Propose, ProposeAck, Proposed, Confirm, StartResolution, ResolveAck,
                Vote, Est, Aux, Decide]


def message_kind(msg) -> str:
    return type(msg).__name__


def message_txn(msg) -> TxnId:
    if isinstance(msg, (Propose, Proposed, Confirm)):
        return msg.txn.id
    if isinstance(msg, (ProposeAck, StartResolution, ResolveAck)):
        return msg.txn_id
    return msg.instance


def describe(msg) -> dict:
    """Compact JSON-ready summary used in trace lines."""
    d: dict = {"type": message_kind(msg), "txn": str(message_txn(msg))}
    if isinstance(msg, ProposeAck):
        d["ts"] = msg.ts
    elif isinstance(msg, Proposed):
        d["clock"] = msg.clock
    elif isinstance(msg, Confirm):
        d["ts"] = msg.ts
    elif isinstance(msg, StartResolution):
        d["ts"] = msg.ts
        d["code"] = msg.code
    elif isinstance(msg, ResolveAck):
        d["code"] = msg.code
        d["result"] = msg.result.to_json() if msg.result is not None else None
    elif isinstance(msg, (Est, Aux, Decide)):
        d["round"] = msg.round
        d["value"] = msg.value
    elif isinstance(msg, Vote):
        d["value"] = msg.value
    return d


# ---------------------------------------------------------------------------
# actions returned by node handlers; the simulator executes them on behalf
# of the node that produced them


@dataclass(frozen=True)
class Send:
    dst: str
    msg: object


@dataclass(frozen=True)
class SetTimer:
    key: tuple
    at: int


@dataclass(frozen=True)
class Note:
    """A trace-only record."""

    kind: str
    detail: dict
