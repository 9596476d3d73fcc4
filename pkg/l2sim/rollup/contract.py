"""
Root-chain side of a rollup: the batch ledger, deposits, withdrawals and
the challenge game.

The contract only tracks roots. A batch is accepted when its ``prev_root``
equals the current root; a zk batch must also carry an attestation that
verifies, and is final as soon as its L1 transaction is mined. An
optimistic batch stays pending until ``challenge_period_s`` has passed
since inclusion; during that window anyone can have the contract replay it
from the published calldata. A batch that does not replay to its claimed
root is reverted together with every batch built on top of it, and the
publisher's bond goes to the challenger.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

from ..chain._hashing import EMPTY_ROOT
from ..chain.ledger import Block, L1Chain, L1Transaction, TxKind
from ..errors import (
    InvalidProofError,
    InvalidTxError,
    MissingProofError,
    NoSuchBatchError,
    NotStakedError,
    StaleRootError,
    WindowClosedError,
)
from ..events import EventLog
from .batch import BatchStatus, RollupBatch, TrustedSetup, replay_root
from .codec import decode_batch
from .params import RollupParams
from .state import AccountState, DepositRecord, apply_sequence

logger = logging.getLogger(__name__)

_MODULE = "rollup"

BatchListener = Callable[[str, RollupBatch], None]


@dataclass(frozen=True)
class ChallengeOutcome:
    batch_index: int
    challenger: str
    fraud: bool
    reverted: Tuple[int, ...] = ()
    slashed: int = 0
    penalty: int = 0
    correct_root: Optional[bytes] = None


class RollupContract:
    """
    Batch ledger of one rollup instance on an :class:`L1Chain`.

    Args:
        chain: Root chain the contract lives on.
        params: Rollup parameters.
        setup: Trusted setup whose provers may attest zk batches.
        events: Event log; the chain's log is used when omitted.
        account: L1 account holding deposits and bonds.

    Example:
        >>> from l2sim.chain import L1Chain, load_chain_params
        >>> chain = L1Chain(load_chain_params("ethereum-2021"))
        >>> chain.fund("alice", 10**18)
        >>> contract = RollupContract(chain, RollupParams())
        >>> _ = contract.deposit("alice", 10**17)
        >>> [d.amount for d in contract.queued_deposits()]
        [100000000000000000]
    """

    def __init__(
        self,
        chain: L1Chain,
        params: Optional[RollupParams] = None,
        setup: Optional[TrustedSetup] = None,
        events: Optional[EventLog] = None,
        account: str = "rollup:contract",
    ):
        self.chain = chain
        self.params = params if params is not None else RollupParams()
        self.setup = setup if setup is not None else TrustedSetup()
        self.events = events if events is not None else chain.events
        self.account = account

        self.accounts: List[str] = []
        self._index: Dict[str, int] = {}
        self.stakes: Dict[str, int] = {}
        self.deposit_log: List[DepositRecord] = []
        self._consumed = 0
        self.batches: List[RollupBatch] = []
        self.current_root = EMPTY_ROOT
        self.finalized_root = EMPTY_ROOT
        self.total_withdrawn = 0
        self.withdrawals_credited: List[Tuple[int, str, int]] = []
        self._listeners: List[BatchListener] = []
        chain.subscribe(self._on_block)

    # -- registry and bonds -------------------------------------------------

    def register_account(self, name: str) -> int:
        """Index of *name* in the on-chain account registry, assigning one if new."""
        if name not in self._index:
            self._index[name] = len(self.accounts)
            self.accounts.append(name)
            self.events.emit(_MODULE, "account_registered", account=name, index=self._index[name])
        return self._index[name]

    def is_staked(self, publisher: str) -> bool:
        return self.stakes.get(publisher, 0) >= self.params.publisher_bond

    def stake(self, publisher: str, amount: Optional[int] = None) -> None:
        """
        Lock a publisher bond in the contract.

        Raises:
            InsufficientFundsError: If *publisher* cannot cover the bond on L1.
        """
        amount = self.params.publisher_bond if amount is None else amount
        self.chain.settle(publisher, self.account, amount, reason="rollup publisher bond")
        self.stakes[publisher] = self.stakes.get(publisher, 0) + amount
        self.register_account(publisher)
        self.events.emit(_MODULE, "stake", publisher=publisher, amount=amount)

    def add_listener(self, listener: BatchListener) -> None:
        """Call ``listener(event, batch)`` on ``included``, ``finalized`` and ``reverted``."""
        self._listeners.append(listener)

    def _notify(self, event: str, batch: RollupBatch) -> None:
        for listener in list(self._listeners):
            listener(event, batch)

    # -- deposits -----------------------------------------------------------

    def deposit(
        self,
        user: str,
        amount: int,
        on_included: Optional[Callable[[L1Transaction, Block], None]] = None,
    ) -> L1Transaction:
        """
        Lock *amount* on L1 and queue it for the next batch.

        Raises:
            InsufficientFundsError: If *user* cannot pay amount plus fee.
        """
        if amount <= 0:
            raise ValueError("deposit amount must be positive")
        tx = self.chain.make_tx(
            user,
            self.account,
            amount,
            kind=TxKind.ROLLUP_DEPOSIT,
            gas_used=self.params.deposit_gas,
            gas_price=self.params.l1_gas_price,
        )
        self.chain.submit_tx(tx, on_included)
        self.register_account(user)
        record = DepositRecord(len(self.deposit_log), user, amount)
        self.deposit_log.append(record)
        self.events.emit(_MODULE, "deposit_queued", seq=record.seq, user=user, amount=amount, fee=tx.fee)
        return tx

    def queued_deposits(self) -> Tuple[DepositRecord, ...]:
        return tuple(self.deposit_log[self._consumed :])

    @property
    def total_deposited(self) -> int:
        return sum(d.amount for d in self.deposit_log)

    # -- batches ------------------------------------------------------------

    @property
    def live_batches(self) -> List[RollupBatch]:
        return [b for b in self.batches if b.status != BatchStatus.REVERTED]

    def batch(self, index: int) -> RollupBatch:
        if not 0 <= index < len(self.batches):
            raise NoSuchBatchError(f"no batch {index}; {len(self.batches)} submitted")
        return self.batches[index]

    def submit_batch(self, batch: RollupBatch) -> RollupBatch:
        """
        Accept *batch* and publish its calldata in an L1 transaction.

        Raises:
            NotStakedError: If the publisher has no bond locked.
            StaleRootError: If ``batch.prev_root`` is not the current root.
            ValueError: If the batch's deposits are not the head of the queue.
            MissingProofError: zk batch without an attestation.
            InvalidProofError: zk attestation that does not verify.
            InsufficientFundsError: If the publisher cannot pay the L1 fee.
        """
        if not self.is_staked(batch.publisher):
            raise NotStakedError(f"{batch.publisher} has no publisher bond")
        if batch.prev_root != self.current_root:
            raise StaleRootError(
                f"batch from {batch.publisher} builds on {batch.prev_root.hex()[:12]}, "
                f"current root is {self.current_root.hex()[:12]}"
            )
        queue = self.queued_deposits()
        if batch.deposits != queue[: len(batch.deposits)]:
            raise ValueError("batch deposits must be the head of the deposit queue")
        if self.params.is_zk:
            if batch.proof is None:
                raise MissingProofError("zk batches must carry a validity attestation")
            if not self.setup.verify(batch.proof, batch):
                raise InvalidProofError(f"attestation by {batch.proof.attestor} does not verify")

        gas = self.params.batch_gas(batch.n_txs, self.chain.params.gas_per_byte)
        tx = self.chain.make_tx(
            batch.publisher,
            self.account,
            0,
            kind=TxKind.ROLLUP_BATCH,
            size_bytes=max(1, batch.compressed_size),
            gas_used=gas,
            gas_price=self.params.l1_gas_price,
        )
        self.chain.submit_tx(tx, self._on_batch_included)

        batch.index = len(self.batches)
        batch.status = BatchStatus.PENDING
        batch.submitted_at = self.chain.now
        batch.l1_tx = tx.id
        batch.l1_cost = tx.fee
        self.batches.append(batch)
        self._consumed += len(batch.deposits)
        self.current_root = batch.new_root
        self.events.emit(
            _MODULE,
            "batch_submitted",
            batch=batch.index,
            publisher=batch.publisher,
            txs=batch.n_txs,
            deposits=len(batch.deposits),
            bytes=batch.compressed_size,
            l1_cost=tx.fee,
            new_root=batch.new_root,
        )
        return batch

    def _on_batch_included(self, tx: L1Transaction, block: Block) -> None:
        batch = next((b for b in self.batches if b.l1_tx == tx.id), None)
        if batch is None or batch.status == BatchStatus.REVERTED:
            return
        batch.included_at = block.timestamp_s
        self.events.emit(_MODULE, "batch_included", t=block.timestamp_s, batch=batch.index, height=block.height)
        self._notify("included", batch)

    def _on_block(self, block: Block) -> None:
        self.finalize_ready()

    def _window_open(self, batch: RollupBatch) -> bool:
        if batch.included_at is None:
            return True
        return self.chain.now < batch.included_at + self.params.challenge_period_s

    def finalize_ready(self) -> List[RollupBatch]:
        """Finalize pending batches in index order while their conditions hold."""
        done = []
        for batch in self.batches:
            if batch.status in (BatchStatus.FINALIZED, BatchStatus.REVERTED):
                continue
            if batch.included_at is None:
                break
            if not self.params.is_zk and self._window_open(batch):
                break
            self._finalize(batch)
            done.append(batch)
        return done

    def _finalize(self, batch: RollupBatch) -> None:
        batch.status = BatchStatus.FINALIZED
        batch.finalized_at = self.chain.now
        self.finalized_root = batch.new_root
        for tx in decode_batch(batch.calldata, self.accounts, self.params.tx_size_bytes):
            if tx.is_withdrawal:
                self.chain.settle(self.account, tx.sender, tx.amount, reason=f"rollup withdrawal, batch {batch.index}")
                self.total_withdrawn += tx.amount
                self.withdrawals_credited.append((batch.index, tx.sender, tx.amount))
        self.events.emit(_MODULE, "batch_finalized", batch=batch.index, root=batch.new_root)
        self._notify("finalized", batch)

    # -- challenges ---------------------------------------------------------

    def state_before(self, index: int) -> AccountState:
        """Account state at batch *index*'s previous root, rebuilt from on-chain data."""
        return reconstruct_state(self, through=index - 1)

    def challenge_batch(
        self, index: int, challenger: str, claimed_correct_root: Optional[bytes] = None
    ) -> ChallengeOutcome:
        """
        Have the contract replay batch *index* from its published data.

        The challenger posts ``challenger_bond``. If the replay disagrees with
        the claimed root, the batch and every later batch revert, their
        deposits return to the queue and the publisher's bond goes to the
        challenger along with the returned challenger bond. Otherwise the
        challenger bond goes to the publisher.

        Raises:
            NoSuchBatchError: If *index* was never submitted.
            WindowClosedError: For zk rollups, decided batches, or after the window.
            InsufficientFundsError: If the challenger cannot post the bond.
        """
        batch = self.batch(index)
        if self.params.is_zk:
            raise WindowClosedError("zk batches are final once their attestation verifies")
        if batch.status != BatchStatus.PENDING or not self._window_open(batch):
            raise WindowClosedError(f"challenge window of batch {index} is closed")

        bond = self.params.challenger_bond
        self.chain.settle(challenger, self.account, bond, reason=f"challenge of batch {index}")
        correct = replay_root(self.state_before(index), _published(self, batch))
        if correct == batch.new_root:
            self.chain.settle(self.account, batch.publisher, bond, reason=f"failed challenge of batch {index}")
            self.events.emit(_MODULE, "challenge_rejected", batch=index, challenger=challenger, penalty=bond)
            logger.warning("Challenge of honest batch %d by %s rejected", index, challenger)
            return ChallengeOutcome(index, challenger, fraud=False, penalty=bond, correct_root=correct)

        reverted = self._revert_from(index)
        slashed, self.stakes[batch.publisher] = self.stakes.get(batch.publisher, 0), 0
        self.chain.settle(self.account, challenger, slashed + bond, reason=f"fraud proof on batch {index}")
        self.events.emit(
            _MODULE,
            "fraud_proven",
            batch=index,
            challenger=challenger,
            publisher=batch.publisher,
            slashed=slashed,
            reverted=list(reverted),
            claimed_correct_root=claimed_correct_root,
        )
        logger.info("Batch %d proven fraudulent by %s; %d batches reverted", index, challenger, len(reverted))
        return ChallengeOutcome(index, challenger, True, reverted, slashed, 0, correct)

    def _revert_from(self, index: int) -> Tuple[int, ...]:
        reverted = []
        for batch in self.batches[index:]:
            if batch.status == BatchStatus.REVERTED:
                continue
            batch.status = BatchStatus.REVERTED
            self._consumed -= len(batch.deposits)
            reverted.append(batch.index)
            self.events.emit(_MODULE, "batch_reverted", batch=batch.index)
            self._notify("reverted", batch)
        self.current_root = self.batches[index].prev_root
        return tuple(reverted)

    # -- invariants ---------------------------------------------------------

    def held_value(self) -> int:
        return self.total_deposited - self.total_withdrawn + sum(self.stakes.values())

    def check_conservation(self) -> bool:
        """
        Rollup balances plus withdrawals (credited or pending) equal deposits,
        and the contract's L1 account holds exactly what it owes.
        """
        state = reconstruct_state(self)
        queued = sum(d.amount for d in self.queued_deposits())
        pending = sum(
            tx.amount
            for b in self.live_batches
            if b.status == BatchStatus.PENDING
            for tx in decode_batch(b.calldata, self.accounts, self.params.tx_size_bytes)
            if tx.is_withdrawal
        )
        rollup_side = state.total() + queued + pending + self.total_withdrawn == self.total_deposited
        return rollup_side and self.chain.balance(self.account) == self.held_value()

    def check_root_chain(self) -> bool:
        """Live batches chain root to root starting from the empty state."""
        root = EMPTY_ROOT
        for batch in self.live_batches:
            if batch.prev_root != root:
                return False
            root = batch.new_root
        return root == self.current_root


def _published(contract: RollupContract, batch: RollupBatch) -> RollupBatch:
    """A copy of *batch* whose transactions come from its calldata only."""
    txs = decode_batch(batch.calldata, contract.accounts, contract.params.tx_size_bytes)
    return RollupBatch(
        index=batch.index,
        prev_root=batch.prev_root,
        new_root=batch.new_root,
        txs=tuple(txs),
        calldata=batch.calldata,
        publisher=batch.publisher,
        deposits=batch.deposits,
    )


def reconstruct_state(
    contract: RollupContract, through: Optional[int] = None, finalized_only: bool = False
) -> AccountState:
    """
    Rebuild the account state from on-chain data alone.

    Applies the deposit records and decoded calldata of every non-reverted
    batch up to and including index *through*. A batch whose published data
    does not apply is skipped, since a replay of it could never have been
    finalized.

    Args:
        contract: Contract whose ledger is replayed.
        through: Last batch index to apply; all batches when ``None``.
        finalized_only: Stop at the first batch that is not finalized.
    """
    state = AccountState()
    for batch in contract.batches:
        if through is not None and batch.index > through:
            break
        if batch.status == BatchStatus.REVERTED:
            continue
        if finalized_only and batch.status != BatchStatus.FINALIZED:
            break
        txs = decode_batch(batch.calldata, contract.accounts, contract.params.tx_size_bytes)
        try:
            state, _ = apply_sequence(state, txs, batch.publisher, batch.deposits)
        except InvalidTxError:
            logger.warning("Published data of batch %d does not apply; skipped", batch.index)
    return state

