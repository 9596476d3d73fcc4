"""
Off-chain side of a rollup: the operator that aggregates transactions and
publishes batches.
"""

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple, Union

from ..chain._hashing import sha256
from ..chain.clock import Timer
from ..errors import (
    FeePayerInsolventError,
    InsufficientRollupBalanceError,
    InvalidTxError,
    L2SimError,
    TooManyAuthorsError,
    describe,
)
from .batch import BatchStatus, Prover, RollupBatch, build_batch, prove_batch
from .codec import encode_batch
from .contract import RollupContract, reconstruct_state
from .state import AccountState, RollupTx, apply_sequence

logger = logging.getLogger(__name__)

_MODULE = "rollup"

TransferLike = Union[RollupTx, Tuple[str, str, int]]


@dataclass
class Receipt:
    """Lifecycle timestamps of one accepted operation."""

    tx: RollupTx
    submitted_at: Fraction
    batch: Optional[int] = None
    sealed_at: Optional[Fraction] = None
    included_at: Optional[Fraction] = None
    finalized_at: Optional[Fraction] = None
    dropped: bool = False

    @property
    def inclusion_latency(self) -> Optional[Fraction]:
        return None if self.included_at is None else self.included_at - self.submitted_at

    @property
    def finality_latency(self) -> Optional[Fraction]:
        return None if self.finalized_at is None else self.finalized_at - self.submitted_at


class RollupOperator:
    """
    Aggregator and publisher of one rollup.

    Operations are validated against a pending state (the last submitted
    state plus queued deposits plus the pool) when they arrive, so a sealed
    batch never contains an overdraft.

    Args:
        contract: Rollup contract on L1.
        publisher: Publisher account; must be staked before sealing.
        prover: Prover handle, required for zk rollups.
        fraud_batches: Batch indices on which the operator publishes a wrong
            new root.

    Example:
        >>> from l2sim.chain import L1Chain, load_chain_params
        >>> chain = L1Chain(load_chain_params("ethereum-2021"))
        >>> for who in ("alice", "op"):
        ...     chain.fund(who, 10**19)
        >>> contract = RollupContract(chain)
        >>> contract.stake("op")
        >>> operator = RollupOperator(contract, "op", contract.setup.authorize("op"))
        >>> _ = contract.deposit("alice", 10**18)
        >>> _ = operator.submit_transfer("alice", "bob", 10**17)
        >>> batch = operator.seal_batch()
        >>> _ = chain.produce_block()
        >>> batch.status.value, operator.state.balance("bob")
        ('finalized', 100000000000000000)
    """

    def __init__(
        self,
        contract: RollupContract,
        publisher: str,
        prover: Optional[Prover] = None,
        fraud_batches: Optional[Iterable[int]] = None,
    ):
        self.contract = contract
        self.params = contract.params
        self.chain = contract.chain
        self.publisher = publisher
        self.prover = prover
        self.fraud_batches: Set[int] = set(fraud_batches or ())

        self.state = reconstruct_state(contract)
        self._pending = self.state.copy()
        self._synced_deposits = 0
        self._pool: List[Receipt] = []
        self.receipts: List[Receipt] = []
        self._sealed: Dict[int, List[Receipt]] = {}
        self._stale = False
        self._timer: Optional[Timer] = None
        contract.register_account(publisher)
        contract.add_listener(self._on_batch_event)

    # -- pool ---------------------------------------------------------------

    @property
    def pool_size(self) -> int:
        return len(self._pool)

    def pending_balance(self, account: str) -> int:
        self._sync_deposits()
        return self._pending.balance(account)

    def _sync_deposits(self) -> None:
        log = self.contract.deposit_log
        for record in log[self._synced_deposits :]:
            self._pending.deposit(record.account, record.amount)
        self._synced_deposits = len(log)

    def _admit(self, txs: Sequence[RollupTx]) -> List[Receipt]:
        """Validate *txs* together against the pending state and queue them."""
        self._sync_deposits()
        for tx in txs:
            for account in (tx.sender, tx.recipient):
                if account is not None:
                    self.contract.register_account(account)
        encode_batch(txs, self.contract.accounts)
        new_pending, _ = apply_sequence(self._pending, txs, self.publisher)
        self._pending = new_pending
        now = self.chain.now
        receipts = [Receipt(tx, now) for tx in txs]
        self._pool.extend(receipts)
        self.receipts.extend(receipts)
        return receipts

    def submit(self, tx: RollupTx) -> Receipt:
        """
        Queue one operation.

        Raises:
            InsufficientRollupBalanceError: If the sender cannot cover amount plus fee.
            InvalidTxError: If the amount or fee cannot be compressed.
        """
        try:
            return self._admit([tx])[0]
        except InvalidTxError as e:
            if isinstance(e.__cause__, InsufficientRollupBalanceError):
                raise e.__cause__ from None
            raise

    def submit_transfer(self, sender: str, recipient: str, amount: int, fee: Optional[int] = None) -> Receipt:
        fee = self.params.transfer_fee if fee is None else fee
        return self.submit(RollupTx.transfer(sender, recipient, amount, fee))

    def request_withdrawal(self, user: str, amount: int, fee: Optional[int] = None) -> Receipt:
        """
        Queue a withdrawal to *user*'s L1 account.

        The L1 credit happens when the containing batch finalizes: at
        inclusion for zk rollups, after the challenge period otherwise.

        Raises:
            InsufficientRollupBalanceError: If *user* cannot cover amount plus fee.
        """
        fee = self.params.withdrawal_fee if fee is None else fee
        return self.submit(RollupTx.withdraw(user, amount, fee))

    def batched_transfer(self, fee_payer: str, transfers: Sequence[TransferLike]) -> List[Receipt]:
        """
        Queue up to ``max_authors`` transfers whose fees one account pays.

        Every transfer carries no fee of its own; a final zero-amount transfer
        from *fee_payer* to the publisher carries ``len(transfers) *
        transfer_fee``. Either all transfers are queued or none.

        Args:
            fee_payer: Account debited the total fee.
            transfers: ``RollupTx`` transfers or ``(sender, recipient, amount)`` tuples.

        Returns:
            Receipts of the transfers followed by that of the fee transfer.

        Raises:
            TooManyAuthorsError: If the transfers have more distinct senders than allowed.
            FeePayerInsolventError: If *fee_payer* cannot cover the total fee.
            InvalidTxError: With the index of the first invalid transfer, or of
                the fee transfer when the total fee cannot be compressed.
        """
        txs = [
            RollupTx.transfer(t.sender, t.recipient, t.amount) if isinstance(t, RollupTx) else RollupTx.transfer(*t)
            for t in transfers
        ]
        if not txs:
            raise ValueError("batched_transfer needs at least one transfer")
        authors = {tx.sender for tx in txs}
        if len(authors) > self.params.max_authors:
            raise TooManyAuthorsError(f"{len(authors)} authors, at most {self.params.max_authors} per bundle")
        total_fee = len(txs) * self.params.transfer_fee
        txs.append(RollupTx.transfer(fee_payer, self.publisher, 0, total_fee))
        try:
            receipts = self._admit(txs)
        except InvalidTxError as e:
            if e.index == len(txs) - 1 and isinstance(e.__cause__, InsufficientRollupBalanceError):
                raise FeePayerInsolventError(f"{fee_payer} cannot pay the bundle fee of {total_fee}") from e
            raise
        self.chain.events.emit(
            _MODULE, "bundle_accepted", fee_payer=fee_payer, transfers=len(txs) - 1, authors=len(authors), fee=total_fee
        )
        return receipts

    # -- sealing ------------------------------------------------------------

    def seal_batch(self, allow_empty: bool = False) -> Optional[RollupBatch]:
        """
        Build, prove if needed, and submit the next batch.

        Returns ``None`` when there is nothing to publish. The pool is only
        consumed once the contract accepts the batch.

        Raises:
            NotStakedError, StaleRootError, MissingProofError, InvalidProofError:
                Propagated from the contract.
        """
        if self._stale:
            self.resync()
        deposits = self.contract.queued_deposits()
        entries = self._pool[: self.params.max_batch_txs]
        if not entries and not deposits and not allow_empty:
            return None
        txs = [r.tx for r in entries]
        index = len(self.contract.batches)
        batch = build_batch(self.state, txs, self.params, self.publisher, self.contract.accounts, deposits, index)
        honest_state, _ = apply_sequence(self.state, txs, self.publisher, deposits)
        batch.prev_root = self.contract.current_root

        fraud = index in self.fraud_batches
        if fraud:
            batch.new_root = sha256(b"l2sim/forged-root" + batch.new_root)
        if self.params.is_zk and self.prover is not None:
            if fraud:
                # a rejected forgery is attempted once; the next seal is honest
                self.fraud_batches.discard(index)
                batch.proof = self.prover.forge(batch)
            else:
                batch.proof = prove_batch(batch, self.prover, self.state)

        self.contract.submit_batch(batch)
        self.state = honest_state
        del self._pool[: len(entries)]
        for receipt in entries:
            receipt.batch = batch.index
            receipt.sealed_at = batch.submitted_at
        self._sealed[batch.index] = entries
        if fraud:
            logger.info("Operator %s published a forged root in batch %d", self.publisher, batch.index)
        return batch

    def _tick(self) -> None:
        try:
            self.seal_batch()
        except L2SimError as e:
            logger.warning("Sealing failed: %s", describe(e))
            self.chain.events.emit(_MODULE, "seal_failed", publisher=self.publisher, error=describe(e))

    def start(self, interval: Optional[Fraction] = None) -> Timer:
        """Seal a batch every *interval* seconds (``batch_interval_s`` by default)."""
        if self._timer is not None:
            self._timer.cancel()
        interval = self.params.batch_interval_s if interval is None else Fraction(interval)
        self._timer = self.chain.loop.schedule_every(interval, self._tick, label=f"rollup-seal:{self.publisher}")
        return self._timer

    def stop(self) -> None:
        if self._timer is not None:
            self._timer.cancel()
            self._timer = None

    # -- reverts ------------------------------------------------------------

    def _on_batch_event(self, event: str, batch: RollupBatch) -> None:
        entries = self._sealed.get(batch.index, ())
        if event == "included":
            for receipt in entries:
                receipt.included_at = batch.included_at
        elif event == "finalized":
            for receipt in entries:
                receipt.finalized_at = batch.finalized_at
        elif event == "reverted":
            self._stale = True

    def resync(self) -> List[Receipt]:
        """
        Rebuild the operator's view from on-chain data after a revert.

        Operations of reverted batches go back to the front of the pool in
        their original order; any that no longer apply are dropped.

        Returns:
            The dropped receipts.
        """
        self.state = reconstruct_state(self.contract)
        requeue: List[Receipt] = []
        for index in sorted(self._sealed):
            if self.contract.batches[index].status == BatchStatus.REVERTED:
                requeue.extend(self._sealed.pop(index))
        candidates = requeue + self._pool
        self._pending = self.state.copy()
        for record in self.contract.queued_deposits():
            self._pending.deposit(record.account, record.amount)
        self._synced_deposits = len(self.contract.deposit_log)

        self._pool, dropped = [], []
        for receipt in candidates:
            receipt.batch = receipt.sealed_at = receipt.included_at = receipt.finalized_at = None
            try:
                self._pending.apply(receipt.tx, self.publisher)
            except InsufficientRollupBalanceError:
                receipt.dropped = True
                dropped.append(receipt)
                continue
            self._pool.append(receipt)
        self._stale = False
        if dropped:
            logger.warning("Resync dropped %d operations that no longer apply", len(dropped))
        self.chain.events.emit(
            _MODULE, "operator_resynced", publisher=self.publisher, requeued=len(requeue), dropped=len(dropped)
        )
        return dropped

    # -- reporting ----------------------------------------------------------

    def latencies(self, withdrawals: Optional[bool] = None, final: bool = True) -> List[Fraction]:
        """Finality (or inclusion) latencies of completed operations, optionally filtered by kind."""
        out = []
        for receipt in self.receipts:
            if withdrawals is not None and receipt.tx.is_withdrawal != withdrawals:
                continue
            value = receipt.finality_latency if final else receipt.inclusion_latency
            if value is not None:
                out.append(value)
        return out

    def pending_state(self) -> AccountState:
        self._sync_deposits()
        return self._pending.copy()
