"""Domain types shared by every component.

Transactions declare read and write sets up front; the ledger is a key-value
store whose values are integers (absent keys read as ``DEFAULT_VALUE``).
Payloads are programs in a small deterministic instruction set so that
``apply`` stays a pure function.
"""
from __future__ import annotations

import functools
import hashlib
import hmac
import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, NamedTuple, Sequence, Union

Key = str
Value = int
NodeId = str
ClientId = str
ServerId = str

DEFAULT_VALUE: Value = 0

COMMIT = "COMMIT"
CANCEL = "CANCEL"

OK = "OK"
REJECTED = "REJECTED"


def digest64(data: bytes) -> int:
    return int.from_bytes(hashlib.blake2b(data, digest_size=8).digest(), "big")


def key_order(key: Key) -> bytes:
    # bytewise order of the utf-8 encoding
    return key.encode("utf-8")


# ---------------------------------------------------------------------------
# payload instruction set


@dataclass(frozen=True)
class Get:
    key: Key


@dataclass(frozen=True)
class Put:
    key: Key
    value: Value


@dataclass(frozen=True)
class Add:
    key: Key
    delta: Value


@dataclass(frozen=True)
class IfAtLeast:
    """Run ``then`` when ``key`` holds at least ``threshold``, else ``orelse``."""

    key: Key
    threshold: Value
    then: tuple = ()
    orelse: tuple = ()


Instruction = Union[Get, Put, Add, IfAtLeast]
Payload = tuple


def payload_to_json(payload: Sequence[Instruction]) -> list:
    out = []
    for ins in payload:
        if isinstance(ins, Get):
            out.append(["GET", ins.key])
        elif isinstance(ins, Put):
            out.append(["PUT", ins.key, ins.value])
        elif isinstance(ins, Add):
            out.append(["ADD", ins.key, ins.delta])
        elif isinstance(ins, IfAtLeast):
            out.append(["IFGE", ins.key, ins.threshold,
                        payload_to_json(ins.then), payload_to_json(ins.orelse)])
        else:
            raise TypeError(f"not an instruction: {ins!r}")
    return out


def payload_from_json(data: Iterable) -> Payload:
    out = []
    for item in data:
        op, *args = item
        op = op.upper()
        if op == "GET":
            out.append(Get(str(args[0])))
        elif op == "PUT":
            out.append(Put(str(args[0]), int(args[1])))
        elif op == "ADD":
            out.append(Add(str(args[0]), int(args[1])))
        elif op == "IFGE":
            then = args[2] if len(args) > 2 else []
            orelse = args[3] if len(args) > 3 else []
            out.append(IfAtLeast(str(args[0]), int(args[1]),
                                 payload_from_json(then), payload_from_json(orelse)))
        else:
            raise ValueError(f"unknown instruction {op!r}")
    return tuple(out)


def transfer(src: Key, dst: Key, amount: Value) -> Payload:
    """Move ``amount`` from ``src`` to ``dst`` if the balance allows it."""
    return (IfAtLeast(src, amount, (Add(src, -amount), Add(dst, amount)), ()),)


def increment(key: Key, delta: Value = 1) -> Payload:
    return (Add(key, delta), Get(key))


# ---------------------------------------------------------------------------
# transactions


@dataclass(frozen=True, order=False)
class TxnId:
    client: ClientId
    seq: int
    digest: int

    def __str__(self) -> str:
        return f"{self.client}:{self.seq}"

    def __hash__(self) -> int:
        # the digest already covers client and seq; equality still compares all fields
        return hash(self.digest)

    def sort_key(self) -> tuple:
        return (self.digest, self.client.encode("utf-8"), self.seq)

    def __lt__(self, other: "TxnId") -> bool:
        return self.sort_key() < other.sort_key()


def make_txn_id(client: ClientId, seq: int, payload: Sequence[Instruction]) -> TxnId:
    if seq < 0:
        raise ValueError("seq must be non-negative")
    blob = json.dumps([client, seq, payload_to_json(payload)], separators=(",", ":"))
    return TxnId(client, seq, digest64(blob.encode("utf-8")))


@dataclass(frozen=True)
class Transaction:
    id: TxnId
    read_set: frozenset
    write_set: frozenset
    payload: Payload

    @classmethod
    def create(cls, client: ClientId, seq: int, read_set: Iterable[Key],
               write_set: Iterable[Key], payload: Sequence[Instruction]) -> "Transaction":
        payload = tuple(payload)
        return cls(make_txn_id(client, seq, payload), frozenset(read_set),
                   frozenset(write_set), payload)

    def to_json(self) -> dict:
        return {
            "id": str(self.id),
            "digest": f"{self.id.digest:016x}",
            "read": sorted(self.read_set, key=key_order),
            "write": sorted(self.write_set, key=key_order),
            "payload": payload_to_json(self.payload),
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "Transaction":
        client, seq = data["id"].rsplit(":", 1)
        txn = cls.create(client, int(seq), data["read"], data["write"],
                         payload_from_json(data["payload"]))
        if "digest" in data and f"{txn.id.digest:016x}" != data["digest"]:
            raise ValueError(f"digest mismatch for {data['id']}")
        return txn


def conflict(a: Transaction, b: Transaction) -> bool:
    return bool(a.write_set & b.write_set
                or a.write_set & b.read_set
                or b.write_set & a.read_set)


def canonical_key(txn_id: TxnId, ts: int) -> tuple:
    return (ts,) + txn_id.sort_key()


def canonical_compare(a: tuple, b: tuple) -> int:
    """Compare two ``(TxnId, timestamp)`` pairs; returns -1, 0 or 1."""
    ka, kb = canonical_key(*a), canonical_key(*b)
    return (ka > kb) - (ka < kb)


# ---------------------------------------------------------------------------
# ledger


class LedgerState(Mapping):
    """Immutable key-value map; absent keys read as ``DEFAULT_VALUE``."""

    __slots__ = ("_data",)

    def __init__(self, data: Mapping[Key, Value] | None = None):
        self._data = dict(data or {})

    def __getitem__(self, key: Key) -> Value:
        return self._data[key]

    def __iter__(self) -> Iterator[Key]:
        return iter(sorted(self._data, key=key_order))

    def __len__(self) -> int:
        return len(self._data)

    def read(self, key: Key) -> Value:
        return self._data.get(key, DEFAULT_VALUE)

    def __eq__(self, other) -> bool:
        if isinstance(other, LedgerState):
            return self._data == other._data
        return NotImplemented

    def __hash__(self) -> int:
        return hash(frozenset(self._data.items()))

    def __repr__(self) -> str:
        return f"LedgerState({dict(self.items())!r})"

    def to_json(self) -> dict:
        return {k: self._data[k] for k in self}


class Result(NamedTuple):
    status: str
    values: tuple = ()

    def to_json(self) -> list:
        return [self.status, list(self.values)]

    @classmethod
    def from_json(cls, data) -> "Result | None":
        if data is None:
            return None
        return cls(data[0], tuple(data[1]))


class _DeclarationViolation(Exception):
    pass


def _run(prog, txn: Transaction, state: dict, out: list) -> None:
    for ins in prog:
        if isinstance(ins, Get):
            if ins.key not in txn.read_set:
                raise _DeclarationViolation(ins.key)
            out.append(state.get(ins.key, DEFAULT_VALUE))
        elif isinstance(ins, Put):
            if ins.key not in txn.write_set:
                raise _DeclarationViolation(ins.key)
            state[ins.key] = ins.value
        elif isinstance(ins, Add):
            if ins.key not in txn.read_set or ins.key not in txn.write_set:
                raise _DeclarationViolation(ins.key)
            state[ins.key] = state.get(ins.key, DEFAULT_VALUE) + ins.delta
        elif isinstance(ins, IfAtLeast):
            if ins.key not in txn.read_set:
                raise _DeclarationViolation(ins.key)
            branch = ins.then if state.get(ins.key, DEFAULT_VALUE) >= ins.threshold else ins.orelse
            _run(branch, txn, state, out)
        else:
            raise TypeError(f"not an instruction: {ins!r}")


def apply(txn: Transaction, state: LedgerState) -> tuple[LedgerState, Result]:
    """Execute ``txn`` against ``state``.

    A payload touching an undeclared key leaves the state unchanged and
    yields ``Result(REJECTED)``; this is a normal return, not an error.
    """
    scratch = dict(state.items())
    out: list = []
    try:
        _run(txn.payload, txn, scratch, out)
    except _DeclarationViolation:
        return state, Result(REJECTED)
    return LedgerState(scratch), Result(OK, tuple(out))


# ---------------------------------------------------------------------------
# log entries


@dataclass(frozen=True)
class LogEntry:
    txn: TxnId
    disposition: str
    assigned_ts: int | None = None
    result: Result | None = None

    def __post_init__(self):
        if self.disposition not in (COMMIT, CANCEL):
            raise ValueError(self.disposition)
        if self.assigned_ts is None and self.disposition == COMMIT:
            raise ValueError("committed entries need a timestamp")


# ---------------------------------------------------------------------------
# authentication


@functools.lru_cache(maxsize=1 << 16)
def content_digest(content: tuple) -> int:
    return digest64(repr(content).encode("utf-8"))


@dataclass(frozen=True)
class AuthToken:
    signer: NodeId
    content_digest: int
    tag: bytes = field(repr=False, default=b"")


class Signer:
    """Mints tokens for exactly one identity."""

    def __init__(self, node: NodeId, secret: bytes):
        self.node = node
        self._secret = secret

    def sign(self, content: tuple) -> AuthToken:
        cd = content_digest(content)
        return AuthToken(self.node, cd, _tag(self._secret, cd))


def _tag(secret: bytes, cd: int) -> bytes:
    return hmac.new(secret, cd.to_bytes(8, "big"), "blake2b").digest()[:16]


class Authority:
    """Holds every node's secret; stands in for a PKI.

    Nodes only ever receive their own ``Signer`` so a Byzantine node can sign
    anything under its own name and nothing under anyone else's.
    """

    def __init__(self, seed: int = 0):
        self._root = hashlib.blake2b(f"authority:{seed}".encode(), digest_size=32).digest()
        self._secrets: dict[NodeId, bytes] = {}
        self._tags: dict = {}  # (node, digest) -> tag

    def _secret(self, node: NodeId) -> bytes:
        if node not in self._secrets:
            self._secrets[node] = hmac.new(self._root, node.encode(), "blake2b").digest()
        return self._secrets[node]

    def signer(self, node: NodeId) -> Signer:
        return Signer(node, self._secret(node))

    def verify(self, token: AuthToken, content: tuple, signer: NodeId | None = None) -> bool:
        if not isinstance(token, AuthToken):
            return False
        if signer is not None and token.signer != signer:
            return False
        if token.content_digest != content_digest(content):
            return False
        key = (token.signer, token.content_digest)
        expected = self._tags.get(key)
        if expected is None:
            expected = self._tags[key] = _tag(self._secret(token.signer), token.content_digest)
        return hmac.compare_digest(expected, token.tag)


def ack_content(txn_id: TxnId, ts: int) -> tuple:
    return ("ack", txn_id.client, txn_id.seq, txn_id.digest, ts)


def txn_content(txn: Transaction) -> tuple:
    return ("txn", txn.id.client, txn.id.seq, txn.id.digest)


def order_statistic(values: Iterable[int], n: int, rank: int) -> int:
    """``rank``-th largest (1-based) over ``n`` slots, missing slots count as 0."""
    vals = sorted(values, reverse=True)
    vals += [0] * (n - len(vals))
    return vals[rank - 1]
