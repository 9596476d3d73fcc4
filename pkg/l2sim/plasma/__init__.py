"""
Plasma child chains.

Classes:
    PlasmaChain: Operator-run UTXO chain with deposits, exits, fraud proofs,
        fast withdrawals and mass exits
    PlasmaContract: Root-chain commitments and the bonded exit game
    PlasmaConfig: Block timing, bonds, windows and gas figures
    UtxoSet: Unspent outputs and transaction validation
"""

from .capacity import plasma_throughput_estimate
from .chain import (
    FastWithdrawal,
    MassExitReport,
    OperatorBehavior,
    PlasmaBlock,
    PlasmaChain,
    PlasmaConfig,
    SwapStatus,
)
from .contract import ExitRequest, ExitStatus, InclusionProof, Meit, MeitStatus, PlasmaContract, pack_bitmap
from .utxo import Outpoint, PlasmaTx, PlasmaTxKind, TxInput, TxOutput, Utxo, UtxoSet

__all__ = [
    "ExitRequest",
    "ExitStatus",
    "FastWithdrawal",
    "InclusionProof",
    "MassExitReport",
    "Meit",
    "MeitStatus",
    "OperatorBehavior",
    "Outpoint",
    "PlasmaBlock",
    "PlasmaChain",
    "PlasmaConfig",
    "PlasmaContract",
    "PlasmaTx",
    "PlasmaTxKind",
    "SwapStatus",
    "TxInput",
    "TxOutput",
    "Utxo",
    "UtxoSet",
    "pack_bitmap",
    "plasma_throughput_estimate",
]
