import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from byblos import core
from byblos.core import (OK, REJECTED, Authority, LedgerState, LogEntry, Result, Transaction,
                         TxnId, apply, canonical_compare, conflict, order_statistic,
                         payload_from_json, payload_to_json, transfer)

keys = st.sampled_from(["a", "b", "c", "d", "x", "y"])
key_sets = st.frozensets(keys, max_size=4)


def mk(read, write, client="c", seq=0):
    return Transaction.create(client, seq, read, write, ())


# conflict

def test_conflict_write_read_overlap():
    assert conflict(mk({"x"}, {"y"}), mk({"y"}, {"z"}))


def test_disjoint_writes_do_not_conflict():
    assert not conflict(mk({"x"}, {"y"}), mk({"x"}, {"z"}))


def test_writer_conflicts_with_itself():
    a = mk({"x"}, {"y"})
    assert conflict(a, a)


def test_readers_never_conflict():
    assert not conflict(mk({"x", "y"}, ()), mk({"x", "y"}, ()))


@given(key_sets, key_sets, key_sets, key_sets)
def test_conflict_symmetric(r1, w1, r2, w2):
    a, b = mk(r1, w1), mk(r2, w2, seq=1)
    assert conflict(a, b) == conflict(b, a)


@given(key_sets, key_sets.filter(bool))
def test_conflict_reflexive_for_writers(r, w):
    a = mk(r, w)
    assert conflict(a, a)


@given(key_sets, key_sets, key_sets, key_sets)
def test_conflict_matches_definition(r1, w1, r2, w2):
    want = bool(w1 & w2) or bool(w1 & r2) or bool(w2 & r1)
    assert conflict(mk(r1, w1), mk(r2, w2, seq=1)) == want


# canonical order

def tid(digest, client="c", seq=0):
    return TxnId(client, seq, digest)


def test_timestamp_dominates():
    assert canonical_compare((tid(9), 2), (tid(1), 3)) == -1


def test_digest_breaks_ties():
    assert canonical_compare((tid(5, "a"), 2), (tid(9, "b"), 2)) == -1
    assert canonical_compare((tid(9, "a"), 2), (tid(5, "b"), 2)) == 1


def test_equal_ids_compare_equal():
    assert canonical_compare((tid(5), 2), (tid(5), 2)) == 0


def test_full_id_breaks_digest_collisions():
    assert canonical_compare((tid(5, "a"), 1), (tid(5, "b"), 1)) == -1
    assert canonical_compare((tid(5, "a", 2), 1), (tid(5, "a", 1), 1)) == 1


pairs = st.tuples(st.builds(TxnId, st.sampled_from(["a", "b", "c"]), st.integers(0, 3),
                            st.integers(0, 3)), st.integers(1, 3))


@given(pairs, pairs)
def test_canonical_antisymmetric(a, b):
    assert canonical_compare(a, b) == -canonical_compare(b, a)
    assert (canonical_compare(a, b) == 0) == (a == b)


@given(pairs, pairs, pairs)
def test_canonical_transitive(a, b, c):
    if canonical_compare(a, b) <= 0 and canonical_compare(b, c) <= 0:
        assert canonical_compare(a, c) <= 0


@given(st.lists(pairs, max_size=6))
def test_canonical_total_order_sorts_consistently(xs):
    import functools
    s1 = sorted(xs, key=functools.cmp_to_key(canonical_compare))
    s2 = sorted(reversed(xs), key=functools.cmp_to_key(canonical_compare))
    assert s1 == s2


# apply

def test_transfer_moves_value():
    t = Transaction.create("c", 0, {"x", "y"}, {"x", "y"}, transfer("x", "y", 5))
    state, res = apply(t, LedgerState({"x": 10, "y": 0}))
    assert state.to_json() == {"x": 5, "y": 5}
    assert res.status == OK


def test_undeclared_write_is_rejected():
    t = Transaction.create("c", 0, {"x"}, {"x"}, transfer("x", "y", 5))
    before = LedgerState({"x": 10, "y": 0})
    state, res = apply(t, before)
    assert state == before
    assert res == Result(REJECTED)


def test_read_of_absent_key_gives_default():
    t = Transaction.create("c", 0, {"x"}, (), payload_from_json([["GET", "x"]]))
    state, res = apply(t, LedgerState())
    assert res == Result(OK, (core.DEFAULT_VALUE,))
    assert state.to_json() == {}


def test_conditional_branches():
    prog = payload_from_json([["IFGE", "x", 5, [["ADD", "x", -5], ["GET", "x"]], [["GET", "x"]]]])
    t = Transaction.create("c", 0, {"x"}, {"x"}, prog)
    assert apply(t, LedgerState({"x": 7}))[1] == Result(OK, (2,))
    assert apply(t, LedgerState({"x": 3}))[1] == Result(OK, (3,))


def test_rejection_inside_untaken_branch_is_not_triggered():
    prog = payload_from_json([["IFGE", "x", 100, [["PUT", "z", 1]], [["GET", "x"]]]])
    t = Transaction.create("c", 0, {"x"}, (), prog)
    assert apply(t, LedgerState({"x": 1}))[1].status == OK


programs = st.lists(st.one_of(
    st.tuples(st.just("GET"), keys),
    st.tuples(st.just("PUT"), keys, st.integers(-5, 5)),
    st.tuples(st.just("ADD"), keys, st.integers(-5, 5)),
), max_size=6).map(lambda xs: [list(x) for x in xs])
states = st.dictionaries(keys, st.integers(-10, 10), max_size=4)


@given(key_sets, key_sets, programs, states)
def test_apply_is_deterministic(r, w, prog, state):
    t = Transaction.create("c", 0, r, w, payload_from_json(prog))
    s = LedgerState(state)
    assert apply(t, s) == apply(t, s)
    # the input state is never mutated
    assert dict(s.items()) == state


@given(programs)
def test_payload_json_round_trip(prog):
    p = payload_from_json(prog)
    assert payload_from_json(payload_to_json(p)) == p


def test_bad_payload_rejected_at_parse():
    with pytest.raises(ValueError):
        payload_from_json([["JUMP", "x"]])


# identities and authentication

def test_txn_id_digest_is_pure_and_distinct():
    a = core.make_txn_id("c1", 0, transfer("x", "y", 1))
    assert a == core.make_txn_id("c1", 0, transfer("x", "y", 1))
    assert a != core.make_txn_id("c1", 1, transfer("x", "y", 1))
    assert a != core.make_txn_id("c2", 0, transfer("x", "y", 1))
    assert 0 <= a.digest < 2 ** 64


def test_transaction_json_round_trip():
    t = Transaction.create("c9", 3, {"x", "y"}, {"y"}, transfer("x", "y", 2))
    assert Transaction.from_json(t.to_json()) == t


def test_tokens_verify_only_for_their_signer():
    auth = Authority(1)
    s1, s2 = auth.signer("s1"), auth.signer("s2")
    content = core.ack_content(core.make_txn_id("c", 0, ()), 4)
    tok = s1.sign(content)
    assert auth.verify(tok, content, signer="s1")
    assert not auth.verify(tok, content, signer="s2")
    assert not auth.verify(tok, core.ack_content(core.make_txn_id("c", 0, ()), 5))
    # s2 relabelling s1's token as its own does not verify
    assert not auth.verify(core.AuthToken("s2", tok.content_digest, tok.tag), content, signer="s2")
    assert auth.verify(s2.sign(content), content, signer="s2")


def test_authorities_with_other_seeds_do_not_accept_tokens():
    content = ("x",)
    tok = Authority(1).signer("s1").sign(content)
    assert not Authority(2).verify(tok, content, signer="s1")


def test_commit_entry_needs_timestamp():
    t = core.make_txn_id("c", 0, ())
    with pytest.raises(ValueError):
        LogEntry(t, core.COMMIT, None)
    assert LogEntry(t, core.CANCEL, None).assigned_ts is None


@settings(max_examples=200)
@given(st.lists(st.integers(0, 20), max_size=5), st.integers(1, 5))
def test_order_statistic_matches_sort_oracle(vals, rank):
    n = 5
    padded = sorted(vals + [0] * (n - len(vals)), reverse=True)
    assert order_statistic(vals, n, rank) == padded[rank - 1]


def test_order_statistic_over_permutations():
    vals = [3, 5, 5, 7]
    for perm in itertools.permutations(vals):
        assert order_statistic(perm, 5, 2) == 5
