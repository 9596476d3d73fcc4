"""
Account state of a rollup.

Balances live in a map from account id to integer; the state root is the
merkle root over one leaf per account, taken in sorted account order. Fees
are credited to the publisher's rollup account, so the sum of balances only
changes through deposits and withdrawals.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Iterable, Iterator, Optional, Tuple

from ..chain._hashing import EMPTY_ROOT, canonical_bytes, hash_leaf
from ..chain.merkle import merkle_root
from ..errors import InsufficientRollupBalanceError, InvalidTxError

logger = logging.getLogger(__name__)


class RollupTxKind(str, Enum):
    TRANSFER = "transfer"
    WITHDRAW = "withdraw"


@dataclass(frozen=True)
class RollupTx:
    """
    An off-chain rollup operation.

    A withdrawal has no recipient: its amount leaves the rollup and is
    credited to the sender's L1 account once the batch is final.
    """

    sender: str
    recipient: Optional[str]
    amount: int
    fee: int = 0
    kind: RollupTxKind = RollupTxKind.TRANSFER

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", RollupTxKind(self.kind))
        if self.amount < 0 or self.fee < 0:
            raise ValueError("amount and fee must be non-negative")
        if self.kind == RollupTxKind.TRANSFER and self.recipient is None:
            raise ValueError("a transfer needs a recipient")
        if self.kind == RollupTxKind.WITHDRAW and self.recipient is not None:
            raise ValueError("a withdrawal has no rollup recipient")

    @property
    def is_withdrawal(self) -> bool:
        return self.kind == RollupTxKind.WITHDRAW

    @classmethod
    def transfer(cls, sender: str, recipient: str, amount: int, fee: int = 0) -> "RollupTx":
        return cls(sender, recipient, amount, fee)

    @classmethod
    def withdraw(cls, sender: str, amount: int, fee: int = 0) -> "RollupTx":
        return cls(sender, None, amount, fee, RollupTxKind.WITHDRAW)


@dataclass(frozen=True)
class DepositRecord:
    """An L1 deposit waiting in (or consumed from) the contract's priority queue."""

    seq: int
    account: str
    amount: int


def account_leaf(account: str, balance: int) -> bytes:
    return hash_leaf(canonical_bytes([account, balance]))


class AccountState:
    """
    Balances with a cached state root.

    Example:
        >>> s = AccountState()
        >>> s.deposit("alice", 10)
        >>> _ = s.apply(RollupTx.transfer("alice", "bob", 4, fee=1), fee_recipient="op")
        >>> s.balances()
        {'alice': 5, 'bob': 4, 'op': 1}
    """

    def __init__(self, balances: Optional[Dict[str, int]] = None):
        self._balances: Dict[str, int] = dict(balances or {})
        self._root: Optional[bytes] = None

    def __contains__(self, account: object) -> bool:
        return account in self._balances

    def __iter__(self) -> Iterator[Tuple[str, int]]:
        return iter(sorted(self._balances.items()))

    def balance(self, account: str) -> int:
        return self._balances.get(account, 0)

    def balances(self) -> Dict[str, int]:
        return dict(sorted(self._balances.items()))

    def total(self) -> int:
        return sum(self._balances.values())

    @property
    def root(self) -> bytes:
        if self._root is None:
            leaves = [account_leaf(a, b) for a, b in sorted(self._balances.items())]
            self._root = merkle_root(leaves) if leaves else EMPTY_ROOT
        return self._root

    def copy(self) -> "AccountState":
        return AccountState(self._balances)

    def _credit(self, account: str, amount: int) -> None:
        self._balances[account] = self._balances.get(account, 0) + amount
        self._root = None

    def deposit(self, account: str, amount: int) -> None:
        if amount < 0:
            raise ValueError("deposit amount must be non-negative")
        self._credit(account, amount)

    def check(self, tx: RollupTx) -> None:
        """
        Raises:
            InsufficientRollupBalanceError: If the sender cannot cover amount plus fee.
        """
        need = tx.amount + tx.fee
        if self.balance(tx.sender) < need:
            raise InsufficientRollupBalanceError(
                f"{tx.sender} holds {self.balance(tx.sender)} on the rollup, needs {need}"
            )

    def apply(self, tx: RollupTx, fee_recipient: str) -> Optional[Tuple[str, int]]:
        """
        Apply *tx*; return ``(account, amount)`` for a withdrawal, else ``None``.

        Raises:
            InsufficientRollupBalanceError: If the sender cannot cover amount plus fee.
        """
        self.check(tx)
        self._balances[tx.sender] -= tx.amount + tx.fee
        self._root = None
        if tx.fee:
            self._credit(fee_recipient, tx.fee)
        if tx.is_withdrawal:
            return tx.sender, tx.amount
        self._credit(tx.recipient, tx.amount)
        return None


def apply_sequence(
    state: AccountState,
    txs: Iterable[RollupTx],
    fee_recipient: str,
    deposits: Iterable[DepositRecord] = (),
) -> Tuple[AccountState, Tuple[Tuple[str, int], ...]]:
    """
    Apply deposits then *txs* in order to a copy of *state*.

    Returns:
        The new state and the withdrawals it produced.

    Raises:
        InvalidTxError: Carrying the position of the first failing transaction.
    """
    new = state.copy()
    for record in deposits:
        new.deposit(record.account, record.amount)
    withdrawals = []
    for index, tx in enumerate(txs):
        try:
            out = new.apply(tx, fee_recipient)
        except InsufficientRollupBalanceError as e:
            raise InvalidTxError(index, str(e)) from e
        if out is not None:
            withdrawals.append(out)
    return new, tuple(withdrawals)
