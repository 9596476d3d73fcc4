"""
UTXO model of the Plasma child chain.

Every transaction consumes whole outputs and creates new ones; the sum of
the inputs equals the sum of the outputs plus the operator fee. A
transaction id is the hash of its body without signatures, and each input
carries its owner's signature over that id.

Deposit outputs start *unacknowledged*: the depositor must spend them with an
acknowledgment transaction (same owner, same amount) before the value can be
transferred.
"""

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, Iterable, Iterator, List, NamedTuple, Optional, Tuple

from ..chain._hashing import digest
from ..chain.keys import KeyRing
from ..errors import (
    BadAuthorizationError,
    DoubleSpendError,
    UnacknowledgedDepositError,
    UnknownOutputError,
    ValueMismatchError,
)

logger = logging.getLogger(__name__)


class Outpoint(NamedTuple):
    tx_id: bytes
    index: int

    def label(self) -> str:
        return f"{self.tx_id.hex()[:12]}:{self.index}"


@dataclass(frozen=True)
class TxOutput:
    owner: str
    amount: int

    def __post_init__(self) -> None:
        if self.amount <= 0:
            raise ValueError("output amounts must be positive")


@dataclass(frozen=True)
class TxInput:
    outpoint: Outpoint
    signature: Optional[bytes] = field(default=None, compare=False)


@dataclass(frozen=True)
class Utxo:
    outpoint: Outpoint
    owner: str
    amount: int


class PlasmaTxKind(str, Enum):
    DEPOSIT = "deposit"
    ACKNOWLEDGE = "acknowledge"
    TRANSFER = "transfer"
    MINT = "mint"


@dataclass(frozen=True)
class PlasmaTx:
    """
    Child-chain transaction.

    Example:
        >>> tx = PlasmaTx(outputs=(TxOutput("alice", 10),), kind=PlasmaTxKind.DEPOSIT, nonce=1)
        >>> tx.output(0).amount
        10
    """

    inputs: Tuple[TxInput, ...] = ()
    outputs: Tuple[TxOutput, ...] = ()
    fee: int = 0
    kind: PlasmaTxKind = PlasmaTxKind.TRANSFER
    nonce: int = 0
    id: bytes = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.fee < 0:
            raise ValueError("fee must be non-negative")
        object.__setattr__(self, "kind", PlasmaTxKind(self.kind))
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "outputs", tuple(self.outputs))
        object.__setattr__(self, "id", digest(self.body()))

    def body(self) -> dict:
        return {
            "inputs": [[i.outpoint.tx_id, i.outpoint.index] for i in self.inputs],
            "outputs": [[o.owner, o.amount] for o in self.outputs],
            "fee": self.fee,
            "kind": self.kind.value,
            "nonce": self.nonce,
        }

    def output(self, index: int) -> Utxo:
        out = self.outputs[index]
        return Utxo(Outpoint(self.id, index), out.owner, out.amount)

    def created(self) -> List[Utxo]:
        return [self.output(i) for i in range(len(self.outputs))]

    def spends(self, outpoint: Outpoint) -> Optional[TxInput]:
        return next((i for i in self.inputs if i.outpoint == outpoint), None)

    def signed(self, keys: KeyRing, owners: Iterable[str]) -> "PlasmaTx":
        """Copy of this transaction with each input signed by the matching owner."""
        owners = list(owners)
        if len(owners) != len(self.inputs):
            raise ValueError("one owner is needed per input")
        inputs = tuple(
            TxInput(i.outpoint, keys.sign(owner, self.id)) for i, owner in zip(self.inputs, owners)
        )
        return replace(self, inputs=inputs)


class UtxoSet:
    """
    Unspent outputs with validation of spends against them.

    Example:
        >>> s = UtxoSet()
        >>> deposit = PlasmaTx(outputs=(TxOutput("alice", 10),), kind="deposit")
        >>> _ = s.apply(deposit, acknowledged=True)
        >>> s.balance("alice"), len(s)
        (10, 1)
    """

    def __init__(self) -> None:
        self._utxos: Dict[Outpoint, Utxo] = {}
        self._unacknowledged: set = set()
        self.spent_by: Dict[Outpoint, bytes] = {}

    def __contains__(self, outpoint: object) -> bool:
        return outpoint in self._utxos

    def __len__(self) -> int:
        return len(self._utxos)

    def __iter__(self) -> Iterator[Utxo]:
        return iter([self._utxos[k] for k in sorted(self._utxos)])

    def get(self, outpoint: Outpoint) -> Utxo:
        if outpoint not in self._utxos:
            if outpoint in self.spent_by:
                raise DoubleSpendError(f"output {outpoint.label()} already spent")
            raise UnknownOutputError(f"unknown output {outpoint.label()}")
        return self._utxos[outpoint]

    def is_acknowledged(self, outpoint: Outpoint) -> bool:
        return outpoint in self._utxos and outpoint not in self._unacknowledged

    def total(self) -> int:
        return sum(u.amount for u in self._utxos.values())

    def balance(self, owner: str) -> int:
        return sum(u.amount for u in self._utxos.values() if u.owner == owner)

    def owned_by(self, owner: str) -> List[Utxo]:
        return [u for u in self if u.owner == owner]

    def by_owner(self) -> Dict[str, int]:
        out: Dict[str, int] = {}
        for utxo in self._utxos.values():
            out[utxo.owner] = out.get(utxo.owner, 0) + utxo.amount
        return dict(sorted(out.items()))

    def copy(self) -> "UtxoSet":
        clone = UtxoSet()
        clone._utxos = dict(self._utxos)
        clone._unacknowledged = set(self._unacknowledged)
        clone.spent_by = dict(self.spent_by)
        return clone

    def validate(self, tx: PlasmaTx, keys: Optional[KeyRing] = None) -> None:
        """
        Check *tx* against this set without applying it.

        Raises:
            DoubleSpendError: If an input is spent or repeated.
            UnknownOutputError: If an input never existed.
            UnacknowledgedDepositError: If a transfer spends an unacknowledged deposit.
            BadAuthorizationError: If an input signature does not verify.
            ValueMismatchError: If inputs do not equal outputs plus fee.
        """
        if tx.kind in (PlasmaTxKind.DEPOSIT, PlasmaTxKind.MINT):
            if tx.inputs:
                raise ValueMismatchError(f"{tx.kind.value} transactions take no inputs")
            return
        if not tx.inputs:
            raise ValueMismatchError("a transfer needs at least one input")

        seen = set()
        total_in = 0
        for tx_input in tx.inputs:
            if tx_input.outpoint in seen:
                raise DoubleSpendError(f"output {tx_input.outpoint.label()} used twice in one transaction")
            seen.add(tx_input.outpoint)
            utxo = self.get(tx_input.outpoint)
            acknowledged = tx_input.outpoint not in self._unacknowledged
            if tx.kind == PlasmaTxKind.TRANSFER and not acknowledged:
                raise UnacknowledgedDepositError(f"deposit {tx_input.outpoint.label()} is not acknowledged yet")
            if tx.kind == PlasmaTxKind.ACKNOWLEDGE and acknowledged:
                raise ValueMismatchError(f"output {tx_input.outpoint.label()} needs no acknowledgment")
            if keys is not None and not keys.verify(utxo.owner, tx.id, tx_input.signature):
                raise BadAuthorizationError(f"input {tx_input.outpoint.label()} is not signed by {utxo.owner}")
            total_in += utxo.amount

        total_out = sum(o.amount for o in tx.outputs) + tx.fee
        if total_in != total_out:
            raise ValueMismatchError(f"inputs {total_in} != outputs plus fee {total_out}")
        if tx.kind == PlasmaTxKind.ACKNOWLEDGE:
            owner = self._utxos[tx.inputs[0].outpoint].owner
            if len(tx.inputs) != 1 or [o.owner for o in tx.outputs] != [owner] or tx.fee:
                raise ValueMismatchError("an acknowledgment re-creates its deposit unchanged")

    def apply(self, tx: PlasmaTx, keys: Optional[KeyRing] = None, acknowledged: bool = False) -> List[Utxo]:
        """
        Validate and apply *tx*; return the outputs it created.

        Deposit outputs are unacknowledged unless *acknowledged* is set.
        """
        self.validate(tx, keys)
        for tx_input in tx.inputs:
            del self._utxos[tx_input.outpoint]
            self._unacknowledged.discard(tx_input.outpoint)
            self.spent_by[tx_input.outpoint] = tx.id
        created = tx.created()
        for utxo in created:
            self._utxos[utxo.outpoint] = utxo
            if tx.kind == PlasmaTxKind.DEPOSIT and not acknowledged:
                self._unacknowledged.add(utxo.outpoint)
        return created

    def remove(self, outpoint: Outpoint) -> Optional[Utxo]:
        """Drop an output without a child-chain spend (exits, rollbacks)."""
        self._unacknowledged.discard(outpoint)
        return self._utxos.pop(outpoint, None)
