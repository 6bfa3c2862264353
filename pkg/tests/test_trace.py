from byblos import netsim
from byblos.trace import COMPLETE, INCOMPLETE, Event, Trace

from conftest import scenario, work


def test_line_format():
    t = Trace()
    ev = t.record(3, "CHOSEN", "c1", {"ts": 2, "txn": "c1:0", "acks": {}})
    assert ev.line() == '3 0 CHOSEN c1 {"acks":{},"ts":2,"txn":"c1:0"}'
    assert Event.parse(ev.line()).detail == ev.detail


def test_round_trip_is_exact(tmp_path):
    t = netsim.run(scenario(work("c1", 0, "x"), work("c2", 3, "x")))
    text = t.dumps()
    assert Trace.loads(text).dumps() == text
    path = tmp_path / "run.trace"
    t.write(path)
    assert path.read_text() == text
    assert Trace.read(path).dumps() == text


def test_status_and_prefix():
    t = netsim.run(scenario(work("c1", 0, "x")))
    assert t.status == COMPLETE and t.complete
    cut = t.prefix(10)
    assert len(cut) == 10 and cut.status == INCOMPLETE
    assert t.config["n"] == 5


def test_messages_are_described():
    t = netsim.run(scenario(work("c1", 0, "x")))
    send = t.first("SEND")
    assert send.detail["msg"]["type"] == "Propose"
    assert {"id", "dst", "at"} <= set(send.detail)
