"""
Simulated Layer-1 ledger: transactions, blocks, mempool and accounts.

Value model: submitting a transaction debits ``amount + fee`` from the sender
and credits ``amount`` to the receiver at acceptance; the fee is held as
pending until the transaction is mined, when it moves to the fee pot.
Inclusion therefore governs finality timestamps and block-space limits, not
balances. Contracts pay out through :meth:`L1Chain.settle`, an immediate
internal transfer.

Block production is a deterministic timer: block ``h`` is stamped
``timestamp(h-1) + block_interval_s`` and takes mempool transactions by fee
descending, then id ascending, skipping those that no longer fit.
"""

import itertools
import logging
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from functools import cached_property
from typing import Callable, Dict, Iterable, List, Optional, Tuple

from ..errors import DuplicateTransactionError, InsufficientFundsError, InvariantViolation
from ..events import EventLog
from ._hashing import EMPTY_ROOT, ZERO_HASH, digest, sha256
from .clock import EventLoop, TimeLike
from .merkle import merkle_root
from .params import ChainParams, byte_fee, gas_fee

logger = logging.getLogger(__name__)


class TxKind(str, Enum):
    TRANSFER = "transfer"
    CHANNEL_OPEN = "channel_open"
    CHANNEL_CLOSE = "channel_close"
    CHANNEL_WITHDRAW = "channel_withdraw"
    PLASMA_COMMIT = "plasma_commit"
    PLASMA_DEPOSIT = "plasma_deposit"
    PLASMA_EXIT = "plasma_exit"
    ROLLUP_BATCH = "rollup_batch"
    ROLLUP_DEPOSIT = "rollup_deposit"
    CONTRACT_CALL = "contract_call"


@dataclass(frozen=True)
class L1Transaction:
    """
    A Layer-1 transaction. ``id`` is the hash of the canonical serialization
    of every other field; ``nonce`` keeps otherwise identical payments apart.
    """

    sender: str
    receiver: str
    amount: int
    size_bytes: int
    gas_used: int
    fee: int
    kind: TxKind = TxKind.TRANSFER
    nonce: int = 0
    memo: str = ""
    id: bytes = field(init=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", TxKind(self.kind))
        if self.amount < 0:
            raise ValueError("amount must be non-negative")
        if self.fee < 0:
            raise ValueError("fee must be non-negative")
        if self.size_bytes <= 0:
            raise ValueError("size_bytes must be positive")
        if self.gas_used < 0:
            raise ValueError("gas_used must be non-negative")
        object.__setattr__(self, "id", digest(self.canonical()))

    def canonical(self) -> dict:
        return {
            "sender": self.sender,
            "receiver": self.receiver,
            "amount": self.amount,
            "size_bytes": self.size_bytes,
            "gas_used": self.gas_used,
            "fee": self.fee,
            "kind": self.kind.value,
            "nonce": self.nonce,
            "memo": self.memo,
        }


@dataclass(frozen=True)
class Block:
    height: int
    parent_hash: bytes
    tx_root: bytes
    timestamp_s: Fraction
    txs: Tuple[L1Transaction, ...] = ()

    @cached_property
    def hash(self) -> bytes:
        header = f"{self.height}|{self.parent_hash.hex()}|{self.tx_root.hex()}|{self.timestamp_s}"
        return sha256(header.encode("ascii"))

    @property
    def total_bytes(self) -> int:
        return sum(tx.size_bytes for tx in self.txs)

    @property
    def total_gas(self) -> int:
        return sum(tx.gas_used for tx in self.txs)


@dataclass
class _Pending:
    tx: L1Transaction
    submitted_at: Fraction
    on_included: Optional[Callable[[L1Transaction, Block], None]] = None


class L1Chain:
    """
    A parameterized L1 chain driven by an :class:`EventLoop`.

    Args:
        params: Capacity and gas model.
        loop: Shared event loop; a new one starting at 0 is created if omitted.
        events: Event log for block and settlement records.
        name: Module tag used in event records.

    Example:
        >>> from l2sim.chain import load_chain_params
        >>> chain = L1Chain(load_chain_params("bitcoin-2021"))
        >>> chain.fund("alice", 100_000)
        >>> tx = chain.transfer("alice", "bob", 10_000, feerate=10)
        >>> block = chain.produce_block()
        >>> block.height, len(block.txs), chain.balance("bob")
        (1, 1, 10000)
    """

    def __init__(
        self,
        params: ChainParams,
        loop: Optional[EventLoop] = None,
        events: Optional[EventLog] = None,
        name: str = "l1",
    ):
        self.params = params
        self.loop = loop if loop is not None else EventLoop()
        self.events = events if events is not None else EventLog()
        self.events.bind_clock(lambda: self.loop.now)
        self.name = name

        self._balances: Dict[str, int] = {}
        self._mempool: Dict[bytes, _Pending] = {}
        self._seen: set = set()
        self._inclusions: Dict[bytes, Tuple[int, Fraction]] = {}
        self._listeners: List[Callable[[Block], None]] = []
        self._nonces = itertools.count()
        self.total_minted = 0
        self.pending_fees = 0
        self.fees_collected = 0

        genesis = Block(0, ZERO_HASH, EMPTY_ROOT, self.loop.now, ())
        self._blocks: List[Block] = [genesis]

    # -- inspection ---------------------------------------------------------

    @property
    def now(self) -> Fraction:
        return self.loop.now

    @property
    def height(self) -> int:
        return len(self._blocks) - 1

    @property
    def tip(self) -> Block:
        return self._blocks[-1]

    @property
    def blocks(self) -> Tuple[Block, ...]:
        return tuple(self._blocks)

    @property
    def next_block_time(self) -> Fraction:
        return self.tip.timestamp_s + self.params.block_interval_s

    @property
    def mempool_depth(self) -> int:
        return len(self._mempool)

    def mempool(self) -> List[L1Transaction]:
        """Pending transactions in mining order."""
        return [p.tx for p in self._ordered_pending()]

    def balance(self, account: str) -> int:
        return self._balances.get(account, 0)

    spendable = balance

    def balances(self) -> Dict[str, int]:
        return dict(self._balances)

    def inclusion(self, tx_id: bytes) -> Optional[Tuple[int, Fraction]]:
        """``(height, timestamp)`` of the block that mined *tx_id*, if any."""
        return self._inclusions.get(tx_id)

    # -- accounts -----------------------------------------------------------

    def fund(self, account: str, amount: int) -> None:
        """Mint *amount* into *account* (genesis allocation, faucets)."""
        if amount < 0:
            raise ValueError("amount must be non-negative")
        self._balances[account] = self.balance(account) + amount
        self.total_minted += amount
        self.events.emit(self.name, "fund", account=account, amount=amount)

    def settle(self, source: str, destination: str, amount: int, reason: str = "") -> None:
        """
        Move funds immediately between accounts (contract-internal payout).

        Raises:
            InsufficientFundsError: If *source* holds less than *amount*.
        """
        if amount < 0:
            raise ValueError("amount must be non-negative")
        if amount == 0:
            return
        if self.balance(source) < amount:
            raise InsufficientFundsError(
                f"{source} holds {self.balance(source)}, cannot settle {amount} ({reason})"
            )
        self._balances[source] -= amount
        self._balances[destination] = self.balance(destination) + amount
        self.events.emit(
            self.name, "settle", source=source, destination=destination, amount=amount, reason=reason
        )

    # -- transactions -------------------------------------------------------

    def make_tx(
        self,
        sender: str,
        receiver: str,
        amount: int = 0,
        kind: TxKind = TxKind.TRANSFER,
        size_bytes: Optional[int] = None,
        gas_used: Optional[int] = None,
        fee: Optional[int] = None,
        feerate: Optional[int] = None,
        gas_price: Optional[int] = None,
        memo: str = "",
    ) -> L1Transaction:
        """
        Build a transaction, filling size and gas from each other.

        Size defaults to ``avg_tx_size_bytes``; gas defaults to
        ``size_bytes * gas_per_byte``. The fee is explicit, or priced per
        byte (*feerate*) or per gas (*gas_price*), or zero.
        """
        if size_bytes is None and gas_used is None:
            size_bytes = self.params.avg_tx_size_bytes
        if size_bytes is None:
            size_bytes = max(1, -(-gas_used // self.params.gas_per_byte))
        if gas_used is None:
            gas_used = size_bytes * self.params.gas_per_byte
        if fee is None:
            if feerate is not None:
                fee = byte_fee(size_bytes, feerate)
            elif gas_price is not None:
                fee = gas_fee(gas_used, gas_price)
            else:
                fee = 0
        return L1Transaction(
            sender=sender,
            receiver=receiver,
            amount=amount,
            size_bytes=size_bytes,
            gas_used=gas_used,
            fee=fee,
            kind=kind,
            nonce=next(self._nonces),
            memo=memo,
        )

    def submit_tx(
        self,
        tx: L1Transaction,
        on_included: Optional[Callable[[L1Transaction, Block], None]] = None,
    ) -> L1Transaction:
        """
        Accept *tx* into the mempool.

        Raises:
            DuplicateTransactionError: If the id was already submitted.
            InsufficientFundsError: If the sender cannot cover amount + fee.
            ValueError: If the transaction can never fit in a block.
        """
        if tx.id in self._seen:
            raise DuplicateTransactionError(f"transaction {tx.id.hex()[:16]} already submitted")
        if tx.size_bytes > self.params.block_size_bytes or tx.gas_used > self.params.gas_limit_per_block:
            raise ValueError(f"transaction {tx.id.hex()[:16]} exceeds the block limits")
        cost = tx.amount + tx.fee
        if self.balance(tx.sender) < cost:
            raise InsufficientFundsError(
                f"{tx.sender} holds {self.balance(tx.sender)}, needs {cost} for {tx.kind.value}"
            )

        self._balances[tx.sender] -= cost
        self._balances[tx.receiver] = self.balance(tx.receiver) + tx.amount
        self.pending_fees += tx.fee
        self._seen.add(tx.id)
        self._mempool[tx.id] = _Pending(tx, self.loop.now, on_included)
        self.events.emit(
            self.name,
            "submit",
            tx=tx.id,
            kind=tx.kind,
            sender=tx.sender,
            receiver=tx.receiver,
            amount=tx.amount,
            fee=tx.fee,
        )
        return tx

    def transfer(self, sender: str, receiver: str, amount: int, **kwargs) -> L1Transaction:
        """Convenience wrapper: :meth:`make_tx` then :meth:`submit_tx`."""
        on_included = kwargs.pop("on_included", None)
        return self.submit_tx(self.make_tx(sender, receiver, amount, **kwargs), on_included)

    # -- blocks -------------------------------------------------------------

    def subscribe(self, listener: Callable[[Block], None]) -> None:
        """Call *listener* after every produced block."""
        self._listeners.append(listener)

    def _ordered_pending(self) -> List[_Pending]:
        return sorted(self._mempool.values(), key=lambda p: (-p.tx.fee, p.tx.id))

    def produce_block(self) -> Block:
        """
        Mine the next block at ``tip.timestamp + block_interval_s``.

        Scheduled loop events up to that time run first, so L2 activity due
        before the block can still reach the mempool.
        """
        timestamp = self.next_block_time
        self.loop.run_until(timestamp)

        size_left = self.params.block_size_bytes
        gas_left = self.params.gas_limit_per_block
        chosen: List[_Pending] = []
        for pending in self._ordered_pending():
            tx = pending.tx
            if tx.size_bytes <= size_left and tx.gas_used <= gas_left:
                chosen.append(pending)
                size_left -= tx.size_bytes
                gas_left -= tx.gas_used
            if size_left == 0 or gas_left == 0:
                break

        txs = tuple(p.tx for p in chosen)
        tx_root = merkle_root([tx.id for tx in txs]) if txs else EMPTY_ROOT
        block = Block(self.height + 1, self.tip.hash, tx_root, timestamp, txs)
        self._blocks.append(block)

        for pending in chosen:
            tx = pending.tx
            del self._mempool[tx.id]
            self.pending_fees -= tx.fee
            self.fees_collected += tx.fee
            self._inclusions[tx.id] = (block.height, timestamp)
        if txs:
            self.events.emit(
                self.name, "block", t=timestamp, height=block.height, txs=len(txs), deferred=len(self._mempool)
            )
        for pending in chosen:
            if pending.on_included is not None:
                pending.on_included(pending.tx, block)
        for listener in list(self._listeners):
            listener(block)
        return block

    def advance_to(self, until: TimeLike) -> None:
        """Produce every block due up to *until*, then run the loop to it."""
        until = Fraction(until)
        while self.next_block_time <= until:
            self.produce_block()
        self.loop.run_until(until)

    def advance(self, seconds: TimeLike) -> None:
        self.advance_to(self.loop.now + Fraction(seconds))

    def advance_blocks(self, count: int) -> List[Block]:
        return [self.produce_block() for _ in range(count)]

    def drain(self, max_blocks: int = 100_000) -> List[Block]:
        """Mine until the mempool is empty."""
        mined = []
        while self._mempool:
            if len(mined) >= max_blocks:
                raise RuntimeError(f"mempool not drained after {max_blocks} blocks")
            mined.append(self.produce_block())
        return mined

    # -- invariants ---------------------------------------------------------

    def check_conservation(self) -> bool:
        held = sum(self._balances.values())
        return held + self.pending_fees + self.fees_collected == self.total_minted

    def verify_linkage(self) -> bool:
        return all(
            self._blocks[h].parent_hash == self._blocks[h - 1].hash for h in range(1, len(self._blocks))
        )

    def assert_invariants(self) -> None:
        """Raise :class:`InvariantViolation` if the ledger is inconsistent."""
        if not self.check_conservation():
            raise InvariantViolation(f"{self.name}: L1 value not conserved")
        if not self.verify_linkage():
            raise InvariantViolation(f"{self.name}: broken block linkage")
        for block in self._blocks:
            if block.total_bytes > self.params.block_size_bytes or block.total_gas > self.params.gas_limit_per_block:
                raise InvariantViolation(f"{self.name}: block {block.height} exceeds capacity")

    def included_ids(self) -> Iterable[bytes]:
        return self._inclusions.keys()
