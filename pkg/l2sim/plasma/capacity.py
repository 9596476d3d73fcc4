"""Throughput estimate of a Plasma chain from L1 usage statistics."""

import logging
from fractions import Fraction
from typing import Dict, Union

from ..chain.params import SECONDS_PER_DAY, improvement_ratio, to_fraction
from ..errors import InvalidParamsError

logger = logging.getLogger(__name__)

Number = Union[int, str, Fraction]


def plasma_throughput_estimate(
    l2_gas_limit: Number,
    l1_gas_limit: Number,
    l1_txs_per_day: Number,
    l1_blocks_per_day: Number,
    l2_block_time_s: Number,
    floor_tx_per_block: bool = True,
) -> Dict[str, Fraction]:
    """
    Estimate child-chain TPS from the gas an average L1 transaction uses.

    ``avg_tx_per_block = txs / blocks`` (floored to whole transactions by
    default), ``avg_gas_per_tx = l1_gas_limit / avg_tx_per_block`` and
    ``tps = l2_gas_limit / avg_gas_per_tx / l2_block_time_s``.

    Args:
        l2_gas_limit: Child-chain block gas limit.
        l1_gas_limit: Root-chain block gas limit.
        l1_txs_per_day: Observed L1 transactions per day.
        l1_blocks_per_day: Observed L1 blocks per day.
        l2_block_time_s: Child-chain block time in seconds.
        floor_tx_per_block: Round the average transactions per block down.

    Returns:
        Dict with ``avg_tx_per_block``, ``avg_gas_per_tx``, ``tps``,
        ``l1_tps`` (``txs_per_day / 86400``) and ``improvement``
        (``tps / l1_tps``), all exact fractions.

    Raises:
        InvalidParamsError: If any input is not strictly positive.

    Example:
        >>> r = plasma_throughput_estimate(20_000_000, 12_500_000, 1_500_000, 6_500, "2.1")
        >>> r["avg_tx_per_block"], round(float(r["tps"]), 2)
        (Fraction(230, 1), 175.24)
    """
    values = {
        "l2_gas_limit": to_fraction(l2_gas_limit, "l2_gas_limit"),
        "l1_gas_limit": to_fraction(l1_gas_limit, "l1_gas_limit"),
        "l1_txs_per_day": to_fraction(l1_txs_per_day, "l1_txs_per_day"),
        "l1_blocks_per_day": to_fraction(l1_blocks_per_day, "l1_blocks_per_day"),
        "l2_block_time_s": to_fraction(l2_block_time_s, "l2_block_time_s"),
    }
    for name, value in values.items():
        if value <= 0:
            raise InvalidParamsError(f"{name} must be strictly positive, got {value}")

    tx_per_block = values["l1_txs_per_day"] / values["l1_blocks_per_day"]
    if floor_tx_per_block:
        tx_per_block = Fraction(int(tx_per_block))
        if tx_per_block == 0:
            raise InvalidParamsError("fewer than one L1 transaction per block")
    gas_per_tx = values["l1_gas_limit"] / tx_per_block
    tps = values["l2_gas_limit"] / gas_per_tx / values["l2_block_time_s"]
    l1_tps = values["l1_txs_per_day"] / SECONDS_PER_DAY
    logger.debug("Plasma estimate: %s gas/tx, %s TPS", gas_per_tx, tps)
    return {
        "avg_tx_per_block": tx_per_block,
        "avg_gas_per_tx": gas_per_tx,
        "tps": tps,
        "l1_tps": l1_tps,
        "improvement": improvement_ratio(tps, l1_tps),
    }
