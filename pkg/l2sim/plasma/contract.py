"""
Root-chain side of Plasma: block commitments, bonded exits and mass exits.

The contract keeps the committed block roots by height and never rewrites
one; a root proven fraudulent is only marked invalid. Funds live in a single
L1 account owned by the contract: deposits, exit bonds, the operator stake
and the mass-exit bond. Exits are claims on whole outputs proven by a merkle
path to a committed root and can be cancelled during the challenge window by
a committed, signed spend of the same output.
"""

import itertools
import logging
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Dict, FrozenSet, List, Optional, Tuple

import numpy as np

from ..chain.keys import KeyRing
from ..chain.ledger import L1Chain, L1Transaction, TxKind
from ..chain.merkle import MerkleProof, merkle_verify
from ..errors import (
    AlreadyCancelledError,
    AlreadyFinalizedError,
    BadProofError,
    BondUnavailableError,
    ExitInProgressError,
    InvalidChallengeError,
    NotElapsedError,
    NotOwnerError,
    PartialExitError,
    WindowClosedError,
)
from ..events import EventLog
from .utxo import Outpoint, PlasmaTx, Utxo

logger = logging.getLogger(__name__)

_MODULE = "plasma"


@dataclass(frozen=True)
class InclusionProof:
    """A child transaction, the height of its block and its merkle path."""

    tx: PlasmaTx
    height: int
    proof: MerkleProof


class ExitStatus(str, Enum):
    PENDING = "pending"
    CHALLENGED = "challenged"
    FINALIZED = "finalized"
    CANCELLED = "cancelled"


@dataclass
class ExitRequest:
    exit_id: int
    exiter: str
    utxo: Utxo
    inclusion_proof: InclusionProof
    bond: int
    started_at: Fraction
    challenge_period_s: Fraction
    status: ExitStatus = ExitStatus.PENDING
    challenger: Optional[str] = None
    resolved_at: Optional[Fraction] = None

    @property
    def deadline(self) -> Fraction:
        return self.started_at + self.challenge_period_s


class MeitStatus(str, Enum):
    PENDING = "pending"
    FINALIZED = "finalized"


@dataclass
class Meit:
    """
    Mass exit over a snapshot of the child UTXO set.

    Bit ``i`` of ``bitmap`` covers ``outpoints[i]`` (snapshot order is the
    sorted outpoint order); set bits are the outputs being withdrawn.
    """

    meit_id: int
    exit_operator: str
    snapshot_height: int
    outpoints: Tuple[Outpoint, ...]
    bitmap: bytes
    claims: Dict[int, Utxo]
    bond: int
    participants: FrozenSet[str]
    signatures: Dict[str, bytes]
    started_at: Fraction
    window_s: Fraction
    fee_per_user: int = 0
    tx_id: Optional[bytes] = None
    status: MeitStatus = MeitStatus.PENDING
    cancelled: Dict[int, str] = field(default_factory=dict)
    bond_remaining: int = 0

    @property
    def deadline(self) -> Fraction:
        return self.started_at + self.window_s

    def bits(self) -> np.ndarray:
        """The bitmap unpacked to one 0/1 entry per snapshot outpoint."""
        unpacked = np.unpackbits(np.frombuffer(self.bitmap, dtype=np.uint8))
        return unpacked[: len(self.outpoints)]

    @property
    def live_bits(self) -> List[int]:
        return [i for i in sorted(self.claims) if i not in self.cancelled]


def pack_bitmap(flags: List[bool]) -> bytes:
    """Dense MSB-first bitset over *flags*."""
    if not flags:
        return b""
    return np.packbits(np.asarray(flags, dtype=np.uint8)).tobytes()


class PlasmaContract:
    """
    The Plasma contract living on an :class:`L1Chain`.

    Args:
        chain: Root chain holding the contract account.
        keys: Public key registry used to check spend signatures.
        config: A :class:`~l2sim.plasma.chain.PlasmaConfig`.
        events: Transcript of the exit game.
        account: L1 account of the contract.
    """

    def __init__(self, chain: L1Chain, keys: KeyRing, config, events: EventLog, account: str = "plasma:contract"):
        self.chain = chain
        self.keys = keys
        self.config = config
        self.events = events
        self.account = account
        self.commitments: Dict[int, bytes] = {}
        self.deposit_heights: set = set()
        self.invalid_heights: set = set()
        self.exits: Dict[int, ExitRequest] = {}
        self.meit: Optional[Meit] = None
        self.stake = 0
        self.deposited = 0
        self.paid_out = 0
        self._exit_ids = itertools.count()
        self._meit_ids = itertools.count()

    # -- commitments --------------------------------------------------------

    @property
    def last_committed_height(self) -> int:
        return max(self.commitments) if self.commitments else 0

    def commit(self, height: int, root: bytes, deposit: bool = False) -> None:
        if height <= self.last_committed_height:
            raise ValueError(f"commitment heights must increase: {height} after {self.last_committed_height}")
        self.commitments[height] = root
        if deposit:
            self.deposit_heights.add(height)
        self.events.emit(_MODULE, "commit", height=height, root=root, deposit=deposit)

    def verify_inclusion(self, proof: InclusionProof) -> bool:
        """True iff *proof* places its transaction in a committed, valid block."""
        root = self.commitments.get(proof.height)
        return (
            root is not None
            and proof.height not in self.invalid_heights
            and proof.proof.root == root
            and proof.proof.leaf == proof.tx.id
            and merkle_verify(proof.proof)
        )

    def bond_for(self, amount: int) -> int:
        bond = Fraction(amount) * self.config.exit_bond_ratio
        return max(self.config.exit_bond_floor, int(bond))

    def held_value(self) -> int:
        """What the contract account must hold: deposits still owed, bonds and stake."""
        bonds = sum(e.bond for e in self.pending_exits())
        meit = self.meit.bond_remaining if self.meit is not None and self.meit.status == MeitStatus.PENDING else 0
        return self.deposited - self.paid_out + bonds + self.stake + meit

    def check_conservation(self) -> bool:
        return self.chain.balance(self.account) == self.held_value()

    # -- operator stake -----------------------------------------------------

    def post_stake(self, operator: str, amount: int) -> None:
        self.chain.settle(operator, self.account, amount, reason="plasma operator stake")
        self.stake += amount
        self.events.emit(_MODULE, "stake", operator=operator, amount=amount)

    def slash(self, height: int, prover: str) -> int:
        """Mark *height* invalid and pay the operator stake to *prover*."""
        self.invalid_heights.add(height)
        award, self.stake = self.stake, 0
        self.chain.settle(self.account, prover, award, reason=f"fraud proof at {height}")
        self.events.emit(_MODULE, "fraud_proven", height=height, prover=prover, slashed=award)
        logger.info("Plasma block %d proven invalid by %s; %d slashed", height, prover, award)
        return award

    # -- deposits -----------------------------------------------------------

    def accept_deposit(self, user: str, amount: int, on_included=None) -> L1Transaction:
        """
        Lock *amount* of *user*'s L1 funds in the contract.

        Raises:
            InsufficientFundsError: If *user* cannot pay amount plus fee.
        """
        if amount <= 0:
            raise ValueError("deposit amount must be positive")
        fee = self.config.l1_fee(self.config.deposit_gas)
        tx = self.chain.make_tx(
            user, self.account, amount, kind=TxKind.PLASMA_DEPOSIT, gas_used=self.config.deposit_gas, fee=fee
        )
        self.chain.submit_tx(tx, on_included)
        self.deposited += amount
        self.events.emit(_MODULE, "deposit_locked", user=user, amount=amount, tx=tx.id, fee=fee)
        return tx

    # -- exits --------------------------------------------------------------

    def start_exit(self, user: str, utxo: Utxo, proof: InclusionProof, amount: Optional[int] = None) -> ExitRequest:
        """
        Open a bonded exit of a whole output.

        Raises:
            PartialExitError: If *amount* differs from the output amount.
            BadProofError: If the proof does not reach a committed root or
                does not create *utxo*.
            NotOwnerError: If *user* does not own the output.
            ExitInProgressError: If the output already has a pending exit.
            BondUnavailableError: If *user* cannot post bond plus fee on L1.
        """
        if amount is not None and amount != utxo.amount:
            raise PartialExitError(f"exit must claim the whole output of {utxo.amount}, not {amount}")
        if not self.verify_inclusion(proof):
            raise BadProofError(f"proof for {utxo.outpoint.label()} does not match a committed root")
        index = utxo.outpoint.index
        if utxo.outpoint.tx_id != proof.tx.id or index >= len(proof.tx.outputs):
            raise BadProofError("proven transaction does not create the exited output")
        created = proof.tx.output(index)
        if created != utxo:
            raise BadProofError("exited output differs from the proven one")
        if created.owner != user:
            raise NotOwnerError(f"{user} does not own {utxo.outpoint.label()}")
        if any(e.utxo.outpoint == utxo.outpoint and e.status == ExitStatus.PENDING for e in self.exits.values()):
            raise ExitInProgressError(f"{utxo.outpoint.label()} already has a pending exit")

        bond = self.bond_for(utxo.amount)
        fee = self.config.l1_fee(self.config.exit_gas)
        if self.chain.balance(user) < bond + fee:
            raise BondUnavailableError(f"{user} cannot post bond {bond} plus fee {fee}")
        tx = self.chain.make_tx(
            user, self.account, bond, kind=TxKind.PLASMA_EXIT, gas_used=self.config.exit_gas, fee=fee
        )
        self.chain.submit_tx(tx)

        request = ExitRequest(
            exit_id=next(self._exit_ids),
            exiter=user,
            utxo=utxo,
            inclusion_proof=proof,
            bond=bond,
            started_at=self.chain.now,
            challenge_period_s=self.config.challenge_period_s,
        )
        self.exits[request.exit_id] = request
        self.events.emit(
            _MODULE,
            "exit_started",
            exit=request.exit_id,
            exiter=user,
            outpoint=list(utxo.outpoint),
            amount=utxo.amount,
            bond=bond,
            deadline=request.deadline,
        )
        return request

    def _spend_is_proven(self, utxo: Utxo, spend: InclusionProof) -> bool:
        tx_input = spend.tx.spends(utxo.outpoint)
        return (
            tx_input is not None
            and self.verify_inclusion(spend)
            and self.keys.verify(utxo.owner, spend.tx.id, tx_input.signature)
        )

    def challenge_exit(self, exit_id: int, challenger: str, spend: InclusionProof) -> ExitRequest:
        """
        Cancel an exit by proving a committed spend of its output.

        Raises:
            WindowClosedError: At or after the exit deadline.
            InvalidChallengeError: If the exit is not pending or the proof
                does not show a signed, committed spend.
        """
        request = self.exits[exit_id]
        if request.status != ExitStatus.PENDING:
            raise InvalidChallengeError(f"exit {exit_id} is {request.status.value}")
        if self.chain.now >= request.deadline:
            raise WindowClosedError(f"challenge window of exit {exit_id} closed at {request.deadline}")
        if not self._spend_is_proven(request.utxo, spend):
            logger.warning("Rejected challenge by %s on exit %d", challenger, exit_id)
            raise InvalidChallengeError(f"proof does not show a committed spend of exit {exit_id}")

        request.status = ExitStatus.CANCELLED
        request.challenger = challenger
        request.resolved_at = self.chain.now
        self.chain.settle(self.account, challenger, request.bond, reason=f"exit {exit_id} challenge bond")
        self.events.emit(
            _MODULE, "exit_challenged", exit=exit_id, challenger=challenger, spend=spend.tx.id, bond=request.bond
        )
        logger.info("Exit %d cancelled by %s", exit_id, challenger)
        return request

    def finalize_exit(self, exit_id: int) -> ExitRequest:
        """
        Pay an unchallenged exit after its window.

        Raises:
            AlreadyCancelledError: If the exit was successfully challenged.
            AlreadyFinalizedError: If it was already paid.
            NotElapsedError: Before the deadline.
        """
        request = self.exits[exit_id]
        if request.status == ExitStatus.CANCELLED:
            raise AlreadyCancelledError(f"exit {exit_id} was cancelled")
        if request.status == ExitStatus.FINALIZED:
            raise AlreadyFinalizedError(f"exit {exit_id} was already finalized")
        if self.chain.now < request.deadline:
            raise NotElapsedError(f"exit {exit_id} finalizes at {request.deadline}, now {self.chain.now}")

        self.chain.settle(
            self.account, request.exiter, request.utxo.amount + request.bond, reason=f"exit {exit_id}"
        )
        self.paid_out += request.utxo.amount
        request.status = ExitStatus.FINALIZED
        request.resolved_at = self.chain.now
        self.events.emit(
            _MODULE,
            "exit_finalized",
            exit=exit_id,
            exiter=request.exiter,
            amount=request.utxo.amount,
            bond=request.bond,
        )
        return request

    def pending_exits(self) -> List[ExitRequest]:
        return [e for e in self.exits.values() if e.status == ExitStatus.PENDING]

    def cancel_exits_on(self, outpoints: set, reason: str) -> List[ExitRequest]:
        """Cancel pending exits of outputs removed by a fraud proof; bonds go to the contract stake pool."""
        cancelled = []
        for request in self.pending_exits():
            if request.utxo.outpoint in outpoints:
                request.status = ExitStatus.CANCELLED
                request.resolved_at = self.chain.now
                self.stake += request.bond
                cancelled.append(request)
                self.events.emit(_MODULE, "exit_voided", exit=request.exit_id, reason=reason)
        return cancelled

    # -- mass exit ----------------------------------------------------------

    def open_meit(
        self,
        exit_operator: str,
        snapshot_height: int,
        outpoints: Tuple[Outpoint, ...],
        claims: Dict[int, Utxo],
        signatures: Dict[str, bytes],
        fee_per_user: int,
        extra_cost: int = 0,
    ) -> Meit:
        """
        Publish the mass-exit transaction with its bond.

        *extra_cost* is what the exit operator must still afford on L1 after
        the bond (the per-participant signature transactions).

        Raises:
            BondUnavailableError: If the exit operator cannot afford bond,
                fee and *extra_cost*.
        """
        bond = self.config.meit_bond
        fee = self.config.l1_fee(self.config.meit_gas)
        if self.chain.balance(exit_operator) < bond + fee + extra_cost:
            raise BondUnavailableError(f"{exit_operator} cannot post the mass-exit bond {bond}")
        flags = [i in claims for i in range(len(outpoints))]
        meit = Meit(
            meit_id=next(self._meit_ids),
            exit_operator=exit_operator,
            snapshot_height=snapshot_height,
            outpoints=outpoints,
            bitmap=pack_bitmap(flags),
            claims=dict(claims),
            bond=bond,
            participants=frozenset(signatures),
            signatures=dict(signatures),
            started_at=self.chain.now,
            window_s=self.config.meit_window_s,
            fee_per_user=fee_per_user,
            bond_remaining=bond,
        )
        tx = self.chain.make_tx(
            exit_operator,
            self.account,
            bond,
            kind=TxKind.PLASMA_EXIT,
            gas_used=self.config.meit_gas,
            fee=fee,
            memo=f"meit-{meit.meit_id}",
        )
        self.chain.submit_tx(tx)
        meit.tx_id = tx.id
        self.meit = meit
        self.events.emit(
            _MODULE,
            "meit_started",
            meit=meit.meit_id,
            exit_operator=exit_operator,
            snapshot_height=snapshot_height,
            bitmap=meit.bitmap,
            bits=len(outpoints),
            claims=len(claims),
            bond=bond,
            deadline=meit.deadline,
        )
        return meit

    def challenge_meit(self, bit: int, challenger: str, spend: InclusionProof) -> int:
        """
        Cancel one bit of the pending mass exit with a committed spend.

        Returns:
            The bounty paid to *challenger* out of the mass-exit bond.

        Raises:
            WindowClosedError: After the mass-exit window.
            InvalidChallengeError: If the bit is not claimed or the spend is
                not proven.
        """
        meit = self.meit
        if meit is None or meit.status != MeitStatus.PENDING:
            raise InvalidChallengeError("no pending mass exit")
        if self.chain.now >= meit.deadline:
            raise WindowClosedError(f"mass-exit window closed at {meit.deadline}")
        if bit not in meit.claims or bit in meit.cancelled:
            raise InvalidChallengeError(f"bit {bit} is not a live claim")
        if not self._spend_is_proven(meit.claims[bit], spend):
            raise InvalidChallengeError(f"proof does not show a committed spend of bit {bit}")
        bounty = min(meit.bond_remaining, meit.bond // max(1, len(meit.claims)))
        meit.cancelled[bit] = challenger
        meit.bond_remaining -= bounty
        self.chain.settle(self.account, challenger, bounty, reason=f"mass-exit bit {bit}")
        self.events.emit(_MODULE, "meit_challenged", meit=meit.meit_id, bit=bit, challenger=challenger, bounty=bounty)
        return bounty

    def finalize_meit(self) -> Dict[str, int]:
        """
        Credit every live claim and return the remaining bond.

        Raises:
            NotElapsedError: Before the mass-exit deadline.
            AlreadyFinalizedError: If already finalized.
        """
        meit = self.meit
        if meit is None:
            raise NotElapsedError("no mass exit was started")
        if meit.status == MeitStatus.FINALIZED:
            raise AlreadyFinalizedError(f"mass exit {meit.meit_id} already finalized")
        if self.chain.now < meit.deadline:
            raise NotElapsedError(f"mass exit finalizes at {meit.deadline}, now {self.chain.now}")
        credited: Dict[str, int] = {}
        service = 0
        charged: set = set()
        for bit in meit.live_bits:
            utxo = meit.claims[bit]
            fee = 0
            if utxo.owner not in charged:
                fee = min(meit.fee_per_user, utxo.amount)
                charged.add(utxo.owner)
            self.chain.settle(self.account, utxo.owner, utxo.amount - fee, reason=f"mass-exit bit {bit}")
            credited[utxo.owner] = credited.get(utxo.owner, 0) + utxo.amount - fee
            service += fee
            self.paid_out += utxo.amount
        self.chain.settle(
            self.account, meit.exit_operator, meit.bond_remaining + service, reason="mass-exit bond and fees"
        )
        meit.status = MeitStatus.FINALIZED
        self.events.emit(_MODULE, "meit_finalized", meit=meit.meit_id, credited=credited)
        return credited
