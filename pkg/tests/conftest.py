import pytest

from byblos.config import FaultSchedule, ScenarioConfig, WorkItem
from byblos.core import Authority, Transaction, increment


def work(client, start, key, delta=1):
    keys = frozenset({key})
    return WorkItem(client, start, keys, keys, increment(key, delta))


def scenario(*items, **kw):
    faults = kw.pop("faults", None)
    crashes = kw.pop("crashes", None)
    byz = kw.pop("byzantine", None)
    if faults is None:
        faults = FaultSchedule(dict(byz or {}), dict(crashes or {}))
    return ScenarioConfig(workload=tuple(items), fault_schedule=faults, **kw)


@pytest.fixture
def authority():
    return Authority(7)


@pytest.fixture
def servers():
    return tuple(f"s{i}" for i in range(1, 6))


def txn(client="c1", seq=0, read=("x",), write=("x",), payload=None):
    return Transaction.create(client, seq, read, write, payload or increment("x"))


# criterion lines printed by test_acceptance, repeated in the terminal summary
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
