"""Scenario configuration: dataclasses plus a TOML loader.

Example::

    [scenario]
    name = "gracious_nocontention"
    n = 5
    f = 1
    d = 10            # synchronous one-way delay bound, in ticks
    delta = 21        # pending timer
    seed = 1
    horizon = 100000

    [network]
    delay = "fixed"   # or "uniform": integer in [min_delay, d]
    synchrony = "ALWAYS"   # or [[start, end], ...]

    [[network.override]]   # optional per-message delays
    src = "c2"
    type = "Propose"
    delay = 0

    [[workload]]
    client = "c1"
    start = 0
    read = ["x"]
    write = ["x"]
    payload = [["ADD", "x", 1], ["GET", "x"]]

    [faults]
    byzantine = { s5 = "SILENT" }        # DELAY:<ticks> for DELAY
    client_crashes = { c2 = "AFTER_PROPOSE" }   # AFTER_PARTIAL_CONFIRM:<k or ids>
"""
from __future__ import annotations

import dataclasses
import random
from dataclasses import dataclass, field
from typing import Any, Mapping

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .client import AFTER_PARTIAL_CONFIRM, AFTER_PROPOSE, NO_CRASH, CrashPoint
from .core import payload_from_json, transfer
from .server import BEHAVIORS, DELAY

ALWAYS = "ALWAYS"


class ConfigError(ValueError):
    def __init__(self, where: str, message: str):
        super().__init__(f"{where}: {message}")
        self.where = where
        self.message = message


@dataclass(frozen=True)
class WorkItem:
    client: str
    start: int
    read_set: frozenset
    write_set: frozenset
    payload: tuple


@dataclass(frozen=True)
class ByzantineSpec:
    behavior: str
    extra_delay: int = 0

    def __str__(self) -> str:
        return f"{self.behavior}:{self.extra_delay}" if self.behavior == DELAY else self.behavior


@dataclass(frozen=True)
class DelayOverride:
    delay: int
    src: str | None = None
    dst: str | None = None
    type: str | None = None
    txn: str | None = None  # "client:seq"

    def matches(self, src, dst, kind, txn) -> bool:
        return ((self.src is None or self.src == src)
                and (self.dst is None or self.dst == dst)
                and (self.type is None or self.type == kind)
                and (self.txn is None or self.txn == txn))


@dataclass
class FaultSchedule:
    byzantine_servers: dict = field(default_factory=dict)  # ServerId -> ByzantineSpec
    client_crashes: dict = field(default_factory=dict)  # ClientId -> CrashPoint


@dataclass
class ScenarioConfig:
    n: int = 5
    f: int = 1
    d: int = 10
    delta: int = 21
    seed: int = 0
    horizon: int = 1_000_000
    name: str = "scenario"
    delay: str = "fixed"
    min_delay: int = 1
    synchrony_windows: Any = ALWAYS
    async_max: int = 0  # 0 means 10 * d
    overrides: tuple = ()
    workload: tuple = ()
    fault_schedule: FaultSchedule = field(default_factory=FaultSchedule)
    strict_prefix: bool = False
    allow_invalid_quorum: bool = False
    fast_path_grace: int = 0
    cancel_join_timeout: int | None = -1  # -1: default of 2 * delta
    retry_on_cancel: bool = False
    trace_messages: bool = True

    @property
    def servers(self) -> tuple:
        return tuple(f"s{i}" for i in range(1, self.n + 1))

    @property
    def clients(self) -> tuple:
        seen = []
        for w in self.workload:
            if w.client not in seen:
                seen.append(w.client)
        return tuple(seen)

    @property
    def rtt(self) -> int:
        return 2 * self.d

    @property
    def effective_cancel_join_timeout(self) -> int | None:
        if self.cancel_join_timeout == -1:
            return 2 * self.delta
        return self.cancel_join_timeout

    def replace(self, **kw) -> "ScenarioConfig":
        return dataclasses.replace(self, **kw)

    def validate(self) -> "ScenarioConfig":
        if self.f < 0:
            raise ConfigError("scenario.f", "must be non-negative")
        if self.n != 4 * self.f + 1 and not self.allow_invalid_quorum:
            raise ConfigError("scenario.n", f"n must equal 4f+1 = {4 * self.f + 1} (got {self.n})")
        if self.n < 1:
            raise ConfigError("scenario.n", "need at least one server")
        if self.d <= 0:
            raise ConfigError("scenario.d", "must be positive")
        if self.delta <= 0:
            raise ConfigError("scenario.delta", "must be positive")
        if self.delay not in ("fixed", "uniform"):
            raise ConfigError("network.delay", f"unknown delay model {self.delay!r}")
        if self.delay == "uniform" and not 0 <= self.min_delay <= self.d:
            raise ConfigError("network.min_delay", "must lie in [0, d]")
        byz = self.fault_schedule.byzantine_servers
        if len(byz) > self.f and not self.allow_invalid_quorum:
            raise ConfigError("faults.byzantine", f"at most f={self.f} Byzantine servers")
        for s in byz:
            if s not in self.servers:
                raise ConfigError("faults.byzantine", f"unknown server {s!r}")
        for c in self.fault_schedule.client_crashes:
            if c not in self.clients:
                raise ConfigError("faults.client_crashes", f"unknown client {c!r}")
        if self.synchrony_windows != ALWAYS:
            for i, (a, b) in enumerate(self.synchrony_windows):
                if not 0 <= a < b:
                    raise ConfigError(f"network.synchrony[{i}]", "need 0 <= start < end")
        return self


# ---------------------------------------------------------------------------
# parsing


def _int(data: Mapping, key: str, where: str, default=None):
    if key not in data:
        if default is None:
            raise ConfigError(f"{where}.{key}", "missing")
        return default
    v = data[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{where}.{key}", f"expected integer, got {v!r}")
    return v


def parse_crash(text: str, where: str) -> CrashPoint:
    kind, _, arg = str(text).partition(":")
    kind = kind.strip().upper()
    if kind in (NO_CRASH, ""):
        return CrashPoint()
    if kind == AFTER_PROPOSE:
        return CrashPoint(AFTER_PROPOSE)
    if kind == AFTER_PARTIAL_CONFIRM:
        arg = arg.strip()
        if arg.isdigit():
            return CrashPoint(AFTER_PARTIAL_CONFIRM, servers=int(arg))
        if arg:
            return CrashPoint(AFTER_PARTIAL_CONFIRM, targets=tuple(a.strip() for a in arg.split(",")))
        raise ConfigError(where, "AFTER_PARTIAL_CONFIRM needs :<k> or :<server ids>")
    raise ConfigError(where, f"unknown crash point {text!r}")


def parse_byzantine(text: str, where: str) -> ByzantineSpec:
    kind, _, arg = str(text).partition(":")
    kind = kind.strip().upper()
    if kind not in BEHAVIORS:
        raise ConfigError(where, f"unknown behavior {text!r}; choose from {', '.join(BEHAVIORS)}")
    if kind == DELAY:
        if not arg.strip().isdigit():
            raise ConfigError(where, "DELAY needs :<ticks>")
        return ByzantineSpec(DELAY, int(arg))
    return ByzantineSpec(kind)


def _work_item(item: Mapping, where: str) -> WorkItem:
    if "client" not in item:
        raise ConfigError(f"{where}.client", "missing")
    start = _int(item, "start", where, 0)
    if "transfer" in item:
        t = item["transfer"]
        payload = transfer(t["from"], t["to"], int(t["amount"]))
        keys = {t["from"], t["to"]}
        read = set(item.get("read", keys))
        write = set(item.get("write", keys))
    else:
        try:
            payload = payload_from_json(item.get("payload", []))
        except (ValueError, IndexError, TypeError) as exc:
            raise ConfigError(f"{where}.payload", str(exc)) from None
        read = set(item.get("read", []))
        write = set(item.get("write", []))
    return WorkItem(str(item["client"]), start, frozenset(read), frozenset(write), payload)


def generate_workload(spec: Mapping, seed: int) -> tuple:
    """Random workload: ``clients`` clients, ``txns`` each, over ``keys`` keys."""
    rng = random.Random(f"workload:{seed}")
    n_clients = int(spec.get("clients", 4))
    n_txns = int(spec.get("txns", 1))
    n_keys = int(spec.get("keys", 3))
    start_max = int(spec.get("start_max", 50))
    keys = [f"k{i}" for i in range(n_keys)]
    items = []
    for c in range(1, n_clients + 1):
        t = rng.randint(0, start_max)
        for _ in range(n_txns):
            a, b = rng.sample(keys, 2) if n_keys > 1 else (keys[0], keys[0])
            kind = rng.random()
            if kind < 0.5:
                payload = transfer(a, b, rng.randint(1, 3))
                read = write = {a, b}
            elif kind < 0.8:
                payload = (payload_from_json([["ADD", a, rng.randint(1, 5)], ["GET", a]]))
                read = write = {a}
            else:
                payload = payload_from_json([["GET", a], ["GET", b]])
                read, write = {a, b}, set()
            items.append(WorkItem(f"c{c}", t, frozenset(read), frozenset(write), payload))
            t += rng.randint(0, start_max)
    return tuple(sorted(items, key=lambda w: (w.start, w.client)))


def config_from_dict(data: Mapping, seed: int | None = None) -> ScenarioConfig:
    sc = data.get("scenario", {})
    net = data.get("network", {})
    faults = data.get("faults", {})
    cfg = ScenarioConfig()
    cfg.name = str(sc.get("name", cfg.name))
    cfg.n = _int(sc, "n", "scenario")
    cfg.f = _int(sc, "f", "scenario")
    cfg.d = _int(sc, "d", "scenario", cfg.d)
    cfg.delta = _int(sc, "delta", "scenario", 2 * cfg.d + 1)
    cfg.seed = _int(sc, "seed", "scenario", 0) if seed is None else seed
    cfg.horizon = _int(sc, "horizon", "scenario", cfg.horizon)
    cfg.strict_prefix = bool(sc.get("strict_prefix", False))
    cfg.allow_invalid_quorum = bool(sc.get("allow_invalid_quorum", False))
    cfg.fast_path_grace = _int(sc, "fast_path_grace", "scenario", 0)
    cjt = sc.get("cancel_join_timeout", -1)
    cfg.cancel_join_timeout = None if cjt in ("none", False) else int(cjt)
    cfg.retry_on_cancel = bool(sc.get("retry_on_cancel", False))

    cfg.delay = str(net.get("delay", "fixed"))
    cfg.min_delay = _int(net, "min_delay", "network", 1)
    sync = net.get("synchrony", ALWAYS)
    if isinstance(sync, str):
        if sync.upper() != ALWAYS:
            raise ConfigError("network.synchrony", "expected ALWAYS or a list of [start, end]")
        cfg.synchrony_windows = ALWAYS
    else:
        try:
            cfg.synchrony_windows = tuple((int(a), int(b)) for a, b in sync)
        except (TypeError, ValueError):
            raise ConfigError("network.synchrony", "expected a list of [start, end] pairs") from None
    cfg.async_max = _int(net, "async_max", "network", 0)
    overrides = []
    for i, o in enumerate(net.get("override", [])):
        where = f"network.override[{i}]"
        overrides.append(DelayOverride(_int(o, "delay", where), o.get("src"), o.get("dst"),
                                       o.get("type"), o.get("txn")))
    cfg.overrides = tuple(overrides)

    items = [_work_item(item, f"workload[{i}]") for i, item in enumerate(data.get("workload", []))]
    if "workload_gen" in data:
        items += generate_workload(data["workload_gen"], cfg.seed)
    cfg.workload = tuple(items)

    byz = {s: parse_byzantine(v, f"faults.byzantine.{s}")
           for s, v in faults.get("byzantine", {}).items()}
    crashes = {c: parse_crash(v, f"faults.client_crashes.{c}")
               for c, v in faults.get("client_crashes", {}).items()}
    cfg.fault_schedule = FaultSchedule(byz, crashes)
    return cfg.validate()


def load_config(path, seed: int | None = None) -> ScenarioConfig:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(str(path), f"malformed TOML: {exc}") from None
    return config_from_dict(data, seed=seed)


def loads_config(text: str, seed: int | None = None) -> ScenarioConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("<string>", f"malformed TOML: {exc}") from None
    return config_from_dict(data, seed=seed)
