import pytest

from byblos.client import AFTER_PARTIAL_CONFIRM, AFTER_PROPOSE
from byblos.config import (ALWAYS, ConfigError, generate_workload, loads_config, parse_byzantine,
                           parse_crash)

BASE = """
[scenario]
name = "t"
n = 5
f = 1
"""


def test_minimal_defaults():
    cfg = loads_config(BASE)
    assert (cfg.d, cfg.delta, cfg.seed) == (10, 21, 0)
    assert cfg.synchrony_windows == ALWAYS
    assert cfg.effective_cancel_join_timeout == 42
    assert cfg.servers == ("s1", "s2", "s3", "s4", "s5")


def test_full_file():
    cfg = loads_config(BASE + """
d = 4
delta = 9
[network]
delay = "uniform"
synchrony = [[0, 50], [80, 1000]]
[[network.override]]
src = "c1"
type = "Propose"
delay = 0
[[workload]]
client = "c1"
start = 3
transfer = { from = "a", to = "b", amount = 2 }
[[workload]]
client = "c2"
read = ["x"]
write = ["x"]
payload = [["PUT", "x", 4]]
[faults]
byzantine = { s2 = "DELAY:15" }
client_crashes = { c2 = "AFTER_PARTIAL_CONFIRM:s1,s3" }
""", seed=7)
    assert cfg.seed == 7 and cfg.d == 4 and cfg.delta == 9
    assert cfg.synchrony_windows == ((0, 50), (80, 1000))
    assert cfg.overrides[0].matches("c1", "s4", "Propose", "c1:0")
    assert not cfg.overrides[0].matches("c2", "s4", "Propose", "c2:0")
    assert cfg.workload[0].read_set == {"a", "b"}
    assert cfg.clients == ("c1", "c2")
    assert str(cfg.fault_schedule.byzantine_servers["s2"]) == "DELAY:15"
    crash = cfg.fault_schedule.client_crashes["c2"]
    assert crash.kind == AFTER_PARTIAL_CONFIRM and crash.targets == ("s1", "s3")


@pytest.mark.parametrize("text,where", [
    ("[scenario]\nn = 4\nf = 1\n", "scenario.n"),
    ("[scenario]\nn = 5\n", "scenario.f"),
    ("[scenario]\nn = 5\nf = 1\nd = 0\n", "scenario.d"),
    ("[scenario]\nn = 5\nf = 'one'\n", "scenario.f"),
    (BASE + "[network]\ndelay = 'gauss'\n", "network.delay"),
    (BASE + "[network]\nsynchrony = 'SOMETIMES'\n", "network.synchrony"),
    (BASE + "[network]\nsynchrony = [[5, 2]]\n", "network.synchrony[0]"),
    (BASE + "[faults]\nbyzantine = { s9 = 'SILENT' }\n", "faults.byzantine"),
    (BASE + "[faults]\nbyzantine = { s1 = 'SILENT', s2 = 'SILENT' }\n", "faults.byzantine"),
    (BASE + "[faults]\nbyzantine = { s1 = 'LOUD' }\n", "faults.byzantine.s1"),
    (BASE + "[faults]\nclient_crashes = { c1 = 'AFTER_PROPOSE' }\n", "faults.client_crashes"),
    (BASE + "[[workload]]\nstart = 1\n", "workload[0].client"),
    (BASE + "[[workload]]\nclient = 'c1'\npayload = [['MUL', 'x', 2]]\n", "workload[0].payload"),
    ("[scenario\n", "<string>"),
])
def test_rejections_name_the_field(text, where):
    with pytest.raises(ConfigError) as exc:
        loads_config(text)
    assert exc.value.where == where


def test_invalid_quorum_allowed_explicitly():
    cfg = loads_config("[scenario]\nn = 4\nf = 1\nallow_invalid_quorum = true\n")
    assert cfg.n == 4


def test_parse_helpers():
    assert parse_crash("after_propose", "x").kind == AFTER_PROPOSE
    assert parse_crash("AFTER_PARTIAL_CONFIRM:2", "x").servers == 2
    with pytest.raises(ConfigError):
        parse_crash("AFTER_PARTIAL_CONFIRM", "x")
    with pytest.raises(ConfigError):
        parse_byzantine("DELAY", "x")
    assert parse_byzantine("equivocate_proposed", "x").behavior == "EQUIVOCATE_PROPOSED"


def test_generated_workload_is_seeded():
    spec = {"clients": 3, "txns": 2}
    assert generate_workload(spec, 1) == generate_workload(spec, 1)
    assert generate_workload(spec, 1) != generate_workload(spec, 2)
    items = generate_workload(spec, 1)
    assert len(items) == 6
    assert [w.start for w in items] == sorted(w.start for w in items)
