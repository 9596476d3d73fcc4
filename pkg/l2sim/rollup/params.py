"""
Rollup parameters and the block-space throughput calculator.

A rollup batch fills an L1 block with compressed transactions; whatever gas
the validity proof needs is not available for data. With ``G`` gas per
block, ``P`` gas for the proof and ``g`` gas per calldata byte a block
carries ``(G - P) / g`` bytes, i.e. ``(G - P) / g / s`` transactions of
``s`` bytes.
"""

import logging
from dataclasses import dataclass, replace
from enum import Enum
from fractions import Fraction
from typing import Any, Dict, Optional

from ..chain.params import SECONDS_PER_DAY, WEI_PER_ETH, ChainParams, gas_fee, gwei, to_fraction
from ..errors import InvalidParamsError, ProofExceedsGasLimitError

logger = logging.getLogger(__name__)

ZK_TX_SIZE_BYTES = 12
OPTIMISTIC_TX_SIZE_BYTES = 72
ZK_PROOF_GAS = 1_000_000


class RollupMode(str, Enum):
    ZK = "zk"
    OPTIMISTIC = "optimistic"


@dataclass(frozen=True)
class RollupParams:
    """
    Configuration of one rollup instance.

    ``tx_size_bytes`` defaults to 12 bytes for zk and six times that for
    optimistic rollups; ``proof_gas`` defaults to 1,000,000 for zk and 0 for
    optimistic. Fees are in wei: a transfer costs 0.00001084 ETH off-chain
    (ten bundled transfers cost 0.0001084 ETH), a withdrawal 0.0029 ETH, and
    a deposit 62,500 gas at 27 Gwei on L1.

    Example:
        >>> RollupParams(mode="optimistic").tx_size_bytes
        72
        >>> RollupParams().withdrawal_latency_s
        Fraction(600, 1)
    """

    mode: RollupMode = RollupMode.ZK
    tx_size_bytes: Optional[int] = None
    proof_gas: Optional[int] = None
    challenge_period_s: Fraction = Fraction(7 * SECONDS_PER_DAY)
    batch_interval_s: Fraction = Fraction(600)
    max_batch_txs: int = 2_000
    max_authors: int = 10
    batch_base_gas: int = 21_000
    l1_gas_price: int = gwei(27)
    deposit_gas: int = 62_500
    transfer_fee: int = 10_840_000_000_000
    withdrawal_fee: int = 2_900_000_000_000_000
    publisher_bond: int = WEI_PER_ETH
    challenger_bond: int = WEI_PER_ETH // 10

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", RollupMode(self.mode))
        if self.tx_size_bytes is None:
            size = ZK_TX_SIZE_BYTES if self.mode == RollupMode.ZK else OPTIMISTIC_TX_SIZE_BYTES
            object.__setattr__(self, "tx_size_bytes", size)
        if self.proof_gas is None:
            object.__setattr__(self, "proof_gas", ZK_PROOF_GAS if self.mode == RollupMode.ZK else 0)
        for name in ("challenge_period_s", "batch_interval_s"):
            object.__setattr__(self, name, to_fraction(getattr(self, name), name))

        if self.tx_size_bytes <= 0:
            raise InvalidParamsError("tx_size_bytes must be positive")
        if self.mode == RollupMode.OPTIMISTIC and self.tx_size_bytes < ZK_TX_SIZE_BYTES:
            raise InvalidParamsError(
                f"optimistic transactions cannot be smaller than the {ZK_TX_SIZE_BYTES}-byte compressed record"
            )
        if self.proof_gas < 0:
            raise InvalidParamsError("proof_gas must be non-negative")
        if self.challenge_period_s <= 0 or self.batch_interval_s <= 0:
            raise InvalidParamsError("challenge_period_s and batch_interval_s must be positive")
        if self.max_authors < 1 or self.max_batch_txs < 1:
            raise InvalidParamsError("max_authors and max_batch_txs must be positive")

    @property
    def is_zk(self) -> bool:
        return self.mode == RollupMode.ZK

    @property
    def withdrawal_latency_s(self) -> Fraction:
        """Time from batch inclusion to an L1 credit: one batch for zk, the challenge period otherwise."""
        return self.batch_interval_s if self.is_zk else self.challenge_period_s

    @property
    def deposit_fee(self) -> int:
        return gas_fee(self.deposit_gas, self.l1_gas_price)

    def batch_gas(self, n_txs: int, gas_per_byte: int = 16) -> int:
        """L1 gas of publishing *n_txs* compressed transactions."""
        return self.batch_base_gas + self.proof_gas + n_txs * self.tx_size_bytes * gas_per_byte

    def replace(self, **changes: Any) -> "RollupParams":
        return replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "mode": self.mode.value,
            "tx_size_bytes": self.tx_size_bytes,
            "proof_gas": self.proof_gas,
            "challenge_period_s": str(self.challenge_period_s),
            "batch_interval_s": str(self.batch_interval_s),
            "max_batch_txs": self.max_batch_txs,
            "max_authors": self.max_authors,
            "transfer_fee": self.transfer_fee,
            "withdrawal_fee": self.withdrawal_fee,
            "deposit_fee": self.deposit_fee,
        }


def rollup_throughput(l1: ChainParams, params: RollupParams) -> Dict[str, Fraction]:
    """
    Theoretical rollup throughput when whole L1 blocks carry batches.

    Args:
        l1: Root-chain parameters (gas limit, gas per byte, block time).
        params: Rollup transaction size and proof gas.

    Returns:
        ``{"block_bytes", "tx_per_block", "tps"}`` as exact fractions.

    Raises:
        ProofExceedsGasLimitError: If the proof alone uses the whole block.

    Example:
        >>> from l2sim.chain import load_chain_params
        >>> r = rollup_throughput(load_chain_params("ethereum-2021"), RollupParams())
        >>> r["block_bytes"], round(float(r["tps"]))
        (Fraction(718750, 1), 4607)
    """
    if params.proof_gas >= l1.gas_limit_per_block:
        raise ProofExceedsGasLimitError(
            f"proof gas {params.proof_gas} does not fit in a {l1.gas_limit_per_block}-gas block"
        )
    block_bytes = Fraction(l1.gas_limit_per_block - params.proof_gas, l1.gas_per_byte)
    tx_per_block = block_bytes / params.tx_size_bytes
    tps = tx_per_block / l1.avg_block_time_s
    logger.debug("Rollup throughput (%s): %s bytes, %s tx/block", params.mode.value, block_bytes, tx_per_block)
    return {"block_bytes": block_bytes, "tx_per_block": tx_per_block, "tps": tps}

