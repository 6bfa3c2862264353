"""Byblos: leaderless Byzantine fault-tolerant generalized consensus.

Client and server state machines, a binary consensus used to resolve each
transaction, a deterministic network simulator and post-hoc checkers.
"""
from .config import ScenarioConfig, load_config, loads_config
from .core import Transaction, TxnId, apply, canonical_compare, conflict
from .netsim import run

__all__ = [
    "ScenarioConfig", "load_config", "loads_config",
    "Transaction", "TxnId", "apply", "canonical_compare", "conflict",
    "run",
]
__version__ = "0.1.0"
