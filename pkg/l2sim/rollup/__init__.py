"""
Rollups in zk and optimistic modes.

Classes:
    RollupContract: Batch ledger, deposits, withdrawals and challenges on L1
    RollupOperator: Off-chain aggregator and batch publisher
    RollupParams: Mode, record size, proof gas, windows and fees
    AccountState: Account balances with a merkle state root
    TrustedSetup: Authorizes provers and verifies validity attestations
"""

from .batch import (
    BatchStatus,
    Prover,
    RollupBatch,
    TrustedSetup,
    ValidityAttestation,
    batch_digest,
    build_batch,
    prove_batch,
    replay_root,
)
from .capacity import batch_fee_split, mean_onchain_cost_per_tx
from .codec import decode_batch, encode_batch, is_representable
from .contract import ChallengeOutcome, RollupContract, reconstruct_state
from .operator import Receipt, RollupOperator
from .params import RollupMode, RollupParams, rollup_throughput
from .state import AccountState, DepositRecord, RollupTx, RollupTxKind, apply_sequence

__all__ = [
    "AccountState",
    "BatchStatus",
    "ChallengeOutcome",
    "DepositRecord",
    "Prover",
    "Receipt",
    "RollupBatch",
    "RollupContract",
    "RollupMode",
    "RollupOperator",
    "RollupParams",
    "RollupTx",
    "RollupTxKind",
    "TrustedSetup",
    "ValidityAttestation",
    "apply_sequence",
    "batch_digest",
    "batch_fee_split",
    "build_batch",
    "decode_batch",
    "encode_batch",
    "is_representable",
    "mean_onchain_cost_per_tx",
    "prove_batch",
    "reconstruct_state",
    "replay_root",
    "rollup_throughput",
]
