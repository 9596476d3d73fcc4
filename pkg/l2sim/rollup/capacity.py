"""Per-transaction share of on-chain batch costs."""

import logging
from fractions import Fraction
from typing import Iterable, Tuple, Union

from ..errors import EmptyBatchError, EmptyResultsError
from .batch import RollupBatch
from .params import rollup_throughput

logger = logging.getLogger(__name__)

BatchCost = Union[RollupBatch, Tuple[int, int]]


def batch_fee_split(l1_batch_cost: int, n_txs: int) -> Tuple[int, int]:
    """
    Split an L1 batch cost across its transactions.

    Args:
        l1_batch_cost: Fee paid for the batch transaction, in wei.
        n_txs: Transactions in the batch.

    Returns:
        ``(per_tx, remainder)``; the remainder is borne by the publisher.

    Raises:
        EmptyBatchError: If *n_txs* is not positive.

    Example:
        >>> batch_fee_split(1_000, 3)
        (333, 1)
    """
    if n_txs <= 0:
        raise EmptyBatchError("cannot split a batch cost over zero transactions")
    if l1_batch_cost < 0:
        raise ValueError("batch cost must be non-negative")
    return divmod(l1_batch_cost, n_txs)


def mean_onchain_cost_per_tx(batches: Iterable[BatchCost]) -> Fraction:
    """
    Mean over batches of each batch's per-transaction cost.

    Args:
        batches: :class:`RollupBatch` objects or ``(l1_cost, n_txs)`` pairs.
            Batches without transactions are skipped.

    Returns:
        Exact mean of ``l1_cost / n_txs`` in wei.

    Raises:
        EmptyResultsError: If no batch carries transactions.

    Example:
        >>> mean_onchain_cost_per_tx([(100, 2), (300, 3)])
        Fraction(75, 1)
    """
    shares = []
    for item in batches:
        cost, n = (item.l1_cost, item.n_txs) if isinstance(item, RollupBatch) else item
        if n > 0:
            shares.append(Fraction(cost, n))
    if not shares:
        raise EmptyResultsError("no batch with transactions")
    mean = sum(shares, Fraction(0)) / len(shares)
    logger.debug("Mean on-chain cost over %d batches: %s wei", len(shares), mean)
    return mean


__all__ = ["batch_fee_split", "mean_onchain_cost_per_tx", "rollup_throughput"]
