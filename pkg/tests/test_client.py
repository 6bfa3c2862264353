import itertools

from hypothesis import given
from hypothesis import strategies as st

from byblos.client import (AFTER_PARTIAL_CONFIRM, AFTER_PROPOSE, CONFIRMING, DONE, OUTCOME_BOT,
                           OUTCOME_OK, PROPOSING, Client, CrashPoint, choose_timestamp)
from byblos.core import CANCEL, COMMIT, OK, Authority, Result, ack_content
from byblos.messages import Confirm, Note, Propose, Send

from conftest import txn


def servers(n):
    return tuple(f"s{i}" for i in range(1, n + 1))


def make_client(n=5, f=1, crash=None, retry=False, auth=None):
    auth = auth or Authority(3)
    return Client("c1", servers(n), f, auth.signer("c1"), crash=crash, retry_on_cancel=retry), auth


def sends(out, kind=None):
    return [a for a in out if isinstance(a, Send) and (kind is None or isinstance(a.msg, kind))]


def ack(client, auth, server, ts):
    tok = auth.signer(server).sign(ack_content(client.state.txn.id, ts))
    return client.on_propose_ack(server, ts, tok)


def test_start_fans_out_to_every_server():
    for n, f in ((5, 1), (9, 2)):
        c, _ = make_client(n, f)
        out = c.start(txn())
        props = sends(out, Propose)
        assert len(props) == n
        assert {s.dst for s in props} == set(servers(n))
        assert c.state.phase == PROPOSING


def brute_force_ts(acks, n, f):
    # every ordering of the n slots gives the same (f+1)-st largest
    slots = list(acks.values()) + [0] * (n - len(acks))
    answers = {sorted(p, reverse=True)[f] + 1 for p in itertools.permutations(slots)}
    assert len(answers) == 1
    return answers.pop()


def test_timestamp_choice_examples():
    acks = {"s1": 3, "s2": 5, "s3": 5, "s4": 7}
    assert brute_force_ts(acks, 5, 1) == 6
    assert choose_timestamp(acks, 5, 1) == 6
    assert choose_timestamp({s: 0 for s in servers(5)}, 5, 1) == 1
    assert choose_timestamp({"s1": 2, "s2": 2, "s3": 2, "s4": 9}, 5, 1) == 3


def test_confirm_after_n_minus_f_acks():
    c, auth = make_client()
    c.start(txn())
    for s, ts in (("s1", 3), ("s2", 5), ("s3", 5)):
        assert sends(ack(c, auth, s, ts)) == []
    out = ack(c, auth, "s4", 7)
    confirms = sends(out, Confirm)
    assert len(confirms) == 5
    assert c.state.chosen_ts == 6 and c.state.phase == CONFIRMING
    proof = confirms[0].msg.proof
    assert sorted((a.server, a.ts) for a in proof.acks) == [("s1", 3), ("s2", 5), ("s3", 5), ("s4", 7)]


def test_duplicate_ack_overwrites_without_double_count():
    c, auth = make_client()
    c.start(txn())
    ack(c, auth, "s1", 1)
    ack(c, auth, "s1", 4)
    ack(c, auth, "s2", 0)
    assert sends(ack(c, auth, "s2", 0)) == []
    assert c.state.timestamp_by_server == {"s1": 4, "s2": 0}
    assert c.state.phase == PROPOSING


def test_chosen_ts_set_once():
    c, auth = make_client()
    c.start(txn())
    for s in servers(4):
        ack(c, auth, s, 0)
    assert c.state.chosen_ts == 1
    assert ack(c, auth, "s5", 50) == []
    assert c.state.chosen_ts == 1


@given(st.dictionaries(st.sampled_from(servers(5)), st.integers(0, 30), min_size=4, max_size=5))
def test_chosen_ts_exceeds_anything_f_plus_one_servers_reported(acks):
    ts = choose_timestamp(acks, 5, 1)
    slots = sorted(list(acks.values()) + [0] * (5 - len(acks)), reverse=True)
    assert ts == slots[1] + 1
    # no value below ts is reported by more than f servers above it
    assert sum(1 for v in acks.values() if v >= ts) <= 1


def confirming_client(**kw):
    c, auth = make_client(**kw)
    c.start(txn())
    for s in servers(4):
        ack(c, auth, s, 0)
    return c


def test_two_matching_commits_decide():
    c = confirming_client()
    r = Result(OK, (5,))
    assert c.on_resolve_ack("s1", COMMIT, r) is None
    assert c.on_resolve_ack("s2", COMMIT, r) == (OUTCOME_OK, r)
    assert c.state.phase == DONE


def test_split_answers_do_not_decide():
    c = confirming_client()
    assert c.on_resolve_ack("s1", COMMIT, Result(OK, (5,))) is None
    assert c.on_resolve_ack("s2", CANCEL, None) is None
    assert c.state.phase == CONFIRMING


def test_two_cancels_give_bottom():
    c = confirming_client()
    c.on_resolve_ack("s1", CANCEL, None)
    assert c.on_resolve_ack("s2", CANCEL, None) == (OUTCOME_BOT, None)


def test_conflicting_answers_from_one_server_keep_first():
    c = confirming_client()
    c.on_resolve_ack("s1", COMMIT, Result(OK, (1,)))
    c.on_resolve_ack("s1", CANCEL, None)
    assert c.on_resolve_ack("s2", CANCEL, None) is None
    assert c.on_resolve_ack("s3", COMMIT, Result(OK, (1,))) == (OUTCOME_OK, Result(OK, (1,)))


def test_differing_results_do_not_combine():
    c = confirming_client()
    c.on_resolve_ack("s1", COMMIT, Result(OK, (1,)))
    assert c.on_resolve_ack("s2", COMMIT, Result(OK, (2,))) is None


def test_retry_after_bottom_uses_fresh_id():
    from byblos.messages import ResolveAck
    c, auth = make_client(retry=True)
    c.submit({"x"}, {"x"}, txn().payload, 0)
    first = c.state.txn.id
    for s in servers(4):
        ack(c, auth, s, 0)
    c.on_message("s1", ResolveAck(first, CANCEL, None), 10)
    out = c.on_message("s2", ResolveAck(first, CANCEL, None), 10)
    props = sends(out, Propose)
    assert len(props) == 5
    assert c.state.txn.id != first and c.state.txn.id.seq == first.seq + 1
    assert c.state.is_retry
    assert any(isinstance(a, Note) and a.kind == "CLIENT_DONE" for a in out)


def test_queue_runs_one_at_a_time():
    c, auth = make_client()
    c.submit({"x"}, {"x"}, txn().payload, 0)
    assert c.submit({"y"}, {"y"}, txn().payload, 1) == []
    assert len(c.queue) == 1


def test_crash_after_propose_still_sends_proposes():
    c, _ = make_client(crash=CrashPoint(AFTER_PROPOSE))
    out = c.start(txn())
    assert len(sends(out, Propose)) == 5
    assert c.crashed
    assert c.on_message("s1", None) == []


def test_partial_confirm_reaches_only_targets():
    c, auth = make_client(crash=CrashPoint(AFTER_PARTIAL_CONFIRM, servers=2))
    c.start(txn())
    out = []
    for s in servers(4):
        out = ack(c, auth, s, 0)
    assert [s.dst for s in sends(out, Confirm)] == ["s1", "s2"]
    assert c.crashed
    c2, auth2 = make_client(crash=CrashPoint(AFTER_PARTIAL_CONFIRM, targets=("s5",)), auth=Authority(4))
    c2.start(txn())
    for s in servers(4):
        out = ack(c2, auth2, s, 0)
    assert [s.dst for s in sends(out, Confirm)] == ["s5"]
