"""
Simulated Layer-1 chain for l2sim.

Classes:
    ChainParams: Block-space and gas parameters, loadable from presets
    L1Chain: Accounts, mempool and deterministic block production
    EventLoop: Rational-time discrete-event scheduler shared with L2 engines
    KeyRing: Simulated per-party signing secrets
    MerkleProof: Inclusion proof over a binary merkle tree
"""

from .clock import EventLoop, Timer
from .keys import KeyRing
from .ledger import Block, L1Chain, L1Transaction, TxKind
from .merkle import MerkleProof, merkle_prove, merkle_root, merkle_verify
from .params import (
    SAT_PER_BTC,
    SECONDS_PER_DAY,
    WEI_PER_ETH,
    WEI_PER_GWEI,
    Capacity,
    ChainParams,
    available_presets,
    byte_fee,
    check_relay_constraint,
    gas_fee,
    gwei,
    improvement_ratio,
    load_chain_params,
    to_fraction,
    to_native,
    tps_capacity,
)

__all__ = [
    "Block",
    "Capacity",
    "ChainParams",
    "EventLoop",
    "KeyRing",
    "L1Chain",
    "L1Transaction",
    "MerkleProof",
    "SAT_PER_BTC",
    "SECONDS_PER_DAY",
    "Timer",
    "TxKind",
    "WEI_PER_ETH",
    "WEI_PER_GWEI",
    "available_presets",
    "byte_fee",
    "check_relay_constraint",
    "gas_fee",
    "gwei",
    "improvement_ratio",
    "load_chain_params",
    "merkle_prove",
    "merkle_root",
    "merkle_verify",
    "to_fraction",
    "to_native",
    "tps_capacity",
]
