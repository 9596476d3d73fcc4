"""
Bidirectional payment channel state machine.

A channel is funded once; afterwards only the split of its capacity between
the two parties changes, each change producing a new commitment signed by
both. When a state is superseded, both parties reveal the revocation secret
they committed to for it, so a later broadcast of that state can be
punished. Pending HTLCs hold value outside both balances until they are
settled with the preimage or failed back to the offerer.

This module owns no L1 effects; :class:`~l2sim.channels.network.ChannelNetwork`
turns opens, closes and penalties into ledger transactions.
"""

import itertools
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

from ..chain._hashing import digest, sha256
from ..chain.keys import KeyRing
from ..errors import (
    ChannelNotOpenError,
    CounterpartyRefusedError,
    HtlcExpiredError,
    InsufficientBalanceError,
    InvariantViolation,
    NotEndpointError,
    NotStaleError,
    PreimageMismatchError,
    TimelockActiveError,
    UnknownStateError,
    WindowExpiredError,
)
from .fees import FeePolicy

logger = logging.getLogger(__name__)


class ChannelStatus(str, Enum):
    OPEN = "open"
    CLOSING = "closing_unilateral"
    CLOSED = "closed"


class Direction(str, Enum):
    A_TO_B = "a->b"
    B_TO_A = "b->a"


@dataclass(frozen=True)
class Htlc:
    """Hash-timelocked amount offered across the channel."""

    htlc_id: int
    amount: int
    payment_hash: bytes
    expiry_height: int
    direction: Direction

    def __post_init__(self) -> None:
        if self.amount <= 0:
            raise ValueError("HTLC amount must be positive")


@dataclass(frozen=True)
class Commitment:
    state_number: int
    capacity: int
    balance_a: int
    balance_b: int
    htlcs: Tuple[Htlc, ...] = ()

    def digest(self, channel_id: str) -> bytes:
        return digest({"channel": channel_id, "commitment": self})

    def payouts(self, party_a: str, party_b: str) -> Dict[str, int]:
        """Balances with pending HTLCs returned to their offerers."""
        out = {party_a: self.balance_a, party_b: self.balance_b}
        for htlc in self.htlcs:
            offerer = party_a if htlc.direction == Direction.A_TO_B else party_b
            out[offerer] += htlc.amount
        return out


@dataclass
class RevocationEntry:
    """Hash committed for a state; the secret is filled in when the state is revoked."""

    hash: bytes
    secret: Optional[bytes] = None


@dataclass
class PendingClose:
    broadcaster: str
    counterparty: str
    state_number: int
    unlock_height: int
    stale: bool
    locked: int
    released: int


@dataclass
class CloseOutcome:
    """How a channel's funds left it, per recipient."""

    kind: str
    payouts: Dict[str, int] = field(default_factory=dict)
    state_number: int = 0
    penalized: bool = False
    claimant: Optional[str] = None
    reward: int = 0


class Channel:
    """
    Two-party payment channel with revocable commitments.

    Args:
        channel_id: Identifier, unique within a network.
        party_a: First endpoint.
        party_b: Second endpoint.
        fund_a: Initial balance contributed by ``party_a``.
        fund_b: Initial balance contributed by ``party_b``.
        keys: Key ring holding both parties' signing secrets.
        timelock_blocks: Delay on the broadcaster's share after a
            unilateral close.
        fee_policies: Forwarding fee charged by each endpoint when routing
            out over this channel.

    Example:
        >>> from l2sim.chain import KeyRing
        >>> ch = Channel("ch-00000", "A", "B", 3, 3, KeyRing())
        >>> _ = ch.direct_pay("B", 2)
        >>> ch.balance_a, ch.balance_b, ch.state_number
        (5, 1, 1)
    """

    def __init__(
        self,
        channel_id: str,
        party_a: str,
        party_b: str,
        fund_a: int,
        fund_b: int,
        keys: KeyRing,
        timelock_blocks: int = 144,
        fee_policies: Optional[Dict[str, FeePolicy]] = None,
    ):
        if party_a == party_b:
            raise ValueError("a channel needs two distinct parties")
        if fund_a < 0 or fund_b < 0 or fund_a + fund_b <= 0:
            raise ValueError("channel funding must be non-negative with a positive total")
        if timelock_blocks <= 0:
            raise ValueError("timelock_blocks must be positive")

        self.id = channel_id
        self.party_a = party_a
        self.party_b = party_b
        self.capacity = fund_a + fund_b
        self.balance_a = fund_a
        self.balance_b = fund_b
        self.timelock_blocks = timelock_blocks
        self.fee_policies = dict(fee_policies or {})
        self.status = ChannelStatus.OPEN
        self.pending_close: Optional[PendingClose] = None
        self.outcome: Optional[CloseOutcome] = None

        self._keys = keys
        keys.register_all((party_a, party_b))
        self._htlcs: Dict[int, Htlc] = {}
        self._htlc_ids = itertools.count()
        self._commitments: Dict[int, Commitment] = {}
        self._signatures: Dict[int, Dict[str, bytes]] = {}
        self._secrets: Dict[Tuple[int, str], bytes] = {}
        self.revocation_store: Dict[int, Dict[str, RevocationEntry]] = {}
        self._min_broadcastable = 0
        self.state_number = -1
        self._commit_state()

    # -- views --------------------------------------------------------------

    @property
    def parties(self) -> Tuple[str, str]:
        return (self.party_a, self.party_b)

    @property
    def pending_htlcs(self) -> List[Htlc]:
        return list(self._htlcs.values())

    @property
    def is_open(self) -> bool:
        return self.status == ChannelStatus.OPEN

    def counterparty(self, party: str) -> str:
        self._require_endpoint(party)
        return self.party_b if party == self.party_a else self.party_a

    def balance_of(self, party: str) -> int:
        self._require_endpoint(party)
        return self.balance_a if party == self.party_a else self.balance_b

    def fee_policy(self, party: str) -> FeePolicy:
        """Policy *party* charges for forwarding out over this channel."""
        self._require_endpoint(party)
        return self.fee_policies.get(party, FeePolicy())

    def commitment(self, state_number: int) -> Commitment:
        if state_number not in self._commitments:
            raise UnknownStateError(f"{self.id} has no commitment for state {state_number}")
        return self._commitments[state_number]

    def latest(self) -> Commitment:
        return self._commitments[self.state_number]

    def can_broadcast(self, party: str, state_number: int) -> bool:
        """True if *party* holds a fully signed, still spendable commitment."""
        if state_number < self._min_broadcastable or state_number not in self._commitments:
            return False
        message = self._commitments[state_number].digest(self.id)
        sigs = self._signatures[state_number]
        return party in self.parties and all(
            self._keys.verify(p, message, sigs.get(p)) for p in self.parties
        )

    def revealed_secret(self, holder: str, state_number: int) -> Optional[bytes]:
        """Revocation secret of the *other* party for *state_number*, as held by *holder*."""
        other = self.counterparty(holder)
        entry = self.revocation_store.get(state_number, {}).get(other)
        return entry.secret if entry is not None else None

    # -- state transitions --------------------------------------------------

    def _require_endpoint(self, party: str) -> None:
        if party not in (self.party_a, self.party_b):
            raise NotEndpointError(f"{party} is not an endpoint of {self.id}")

    def _require_open(self) -> None:
        if self.status != ChannelStatus.OPEN:
            raise ChannelNotOpenError(f"{self.id} is {self.status.value}")

    def _commit_state(self) -> Commitment:
        n = self.state_number + 1
        commitment = Commitment(
            state_number=n,
            capacity=self.capacity,
            balance_a=self.balance_a,
            balance_b=self.balance_b,
            htlcs=tuple(sorted(self._htlcs.values(), key=lambda h: h.htlc_id)),
        )
        message = commitment.digest(self.id)
        self._commitments[n] = commitment
        self._signatures[n] = {p: self._keys.sign(p, message) for p in self.parties}

        self.revocation_store[n] = {}
        for party in self.parties:
            secret = self._keys.fresh_secret()
            self._secrets[(n, party)] = secret
            self.revocation_store[n][party] = RevocationEntry(hash=sha256(secret))
        if n > 0:
            for party in self.parties:
                self.revocation_store[n - 1][party].secret = self._secrets[(n - 1, party)]

        self.state_number = n
        self.check_conservation()
        return commitment

    def _move(self, payer: str, amount: int) -> None:
        if payer == self.party_a:
            self.balance_a -= amount
        else:
            self.balance_b -= amount

    def _credit(self, party: str, amount: int) -> None:
        if party == self.party_a:
            self.balance_a += amount
        else:
            self.balance_b += amount

    def direct_pay(self, payer: str, amount: int) -> Commitment:
        """
        Shift *amount* from *payer* to the counterparty in a new state.

        Raises:
            ChannelNotOpenError: If the channel is closing or closed.
            InsufficientBalanceError: If *payer* holds less than *amount*.
        """
        self._require_open()
        payee = self.counterparty(payer)
        if amount < 0:
            raise ValueError("amount must be non-negative")
        if self.balance_of(payer) < amount:
            raise InsufficientBalanceError(
                f"{payer} holds {self.balance_of(payer)} in {self.id}, cannot pay {amount}"
            )
        self._move(payer, amount)
        self._credit(payee, amount)
        return self._commit_state()

    def add_htlc(self, offerer: str, amount: int, payment_hash: bytes, expiry_height: int) -> Htlc:
        self._require_open()
        self._require_endpoint(offerer)
        if self.balance_of(offerer) < amount:
            raise InsufficientBalanceError(
                f"{offerer} holds {self.balance_of(offerer)} in {self.id}, cannot lock {amount}"
            )
        direction = Direction.A_TO_B if offerer == self.party_a else Direction.B_TO_A
        htlc = Htlc(next(self._htlc_ids), amount, payment_hash, expiry_height, direction)
        self._move(offerer, amount)
        self._htlcs[htlc.htlc_id] = htlc
        self._commit_state()
        return htlc

    def settle_htlc(self, htlc_id: int, preimage: bytes, current_height: Optional[int] = None) -> Htlc:
        """
        Redeem an HTLC with its preimage, crediting the receiving side.

        Raises:
            PreimageMismatchError: If ``H(preimage)`` differs from the hash.
            HtlcExpiredError: If *current_height* reached the expiry.
        """
        self._require_open()
        htlc = self._htlcs[htlc_id]
        if sha256(preimage) != htlc.payment_hash:
            raise PreimageMismatchError(f"preimage does not open HTLC {htlc_id} on {self.id}")
        if current_height is not None and current_height >= htlc.expiry_height:
            raise HtlcExpiredError(f"HTLC {htlc_id} on {self.id} expired at {htlc.expiry_height}")
        del self._htlcs[htlc_id]
        receiver = self.party_b if htlc.direction == Direction.A_TO_B else self.party_a
        self._credit(receiver, htlc.amount)
        self._commit_state()
        return htlc

    def fail_htlc(self, htlc_id: int) -> Htlc:
        """Return an HTLC's amount to its offerer."""
        self._require_open()
        htlc = self._htlcs.pop(htlc_id)
        offerer = self.party_a if htlc.direction == Direction.A_TO_B else self.party_b
        self._credit(offerer, htlc.amount)
        self._commit_state()
        return htlc

    def expire_htlcs(self, current_height: int) -> List[Htlc]:
        """Refund every HTLC whose expiry height has been reached."""
        expired = [h for h in self._htlcs.values() if current_height >= h.expiry_height]
        return [self.fail_htlc(h.htlc_id) for h in expired]

    def withdraw(self, party: str, amount: int, counterparty_assents: bool = True) -> Commitment:
        """
        Take *amount* out of the channel without closing it.

        Earlier commitments spend the old funding output and can no longer
        be broadcast.

        Raises:
            CounterpartyRefusedError: If the counterparty does not co-sign.
            InsufficientBalanceError: If *party* holds less than *amount*.
        """
        self._require_open()
        self._require_endpoint(party)
        if amount < 0:
            raise ValueError("amount must be non-negative")
        if not counterparty_assents:
            raise CounterpartyRefusedError(f"{self.counterparty(party)} did not co-sign the withdrawal")
        if self.balance_of(party) < amount:
            raise InsufficientBalanceError(
                f"{party} holds {self.balance_of(party)} in {self.id}, cannot withdraw {amount}"
            )
        self._move(party, amount)
        self.capacity -= amount
        commitment = self._commit_state()
        self._min_broadcastable = commitment.state_number
        return commitment

    # -- closing ------------------------------------------------------------

    def close_cooperative(self) -> CloseOutcome:
        self._require_open()
        payouts = self.latest().payouts(self.party_a, self.party_b)
        self._htlcs.clear()
        self.status = ChannelStatus.CLOSED
        self.outcome = CloseOutcome("cooperative", payouts, self.state_number)
        return self.outcome

    def close_unilateral(self, broadcaster: str, state_number: int, current_height: int) -> PendingClose:
        """
        Broadcast the commitment for *state_number*.

        The counterparty's share is released at once; the broadcaster's is
        locked until ``current_height + timelock_blocks``.

        Raises:
            UnknownStateError: If no broadcastable commitment exists.
        """
        self._require_open()
        counterparty = self.counterparty(broadcaster)
        if not self.can_broadcast(broadcaster, state_number):
            raise UnknownStateError(f"{broadcaster} holds no spendable commitment {state_number} on {self.id}")
        payouts = self._commitments[state_number].payouts(self.party_a, self.party_b)
        self.pending_close = PendingClose(
            broadcaster=broadcaster,
            counterparty=counterparty,
            state_number=state_number,
            unlock_height=current_height + self.timelock_blocks,
            stale=state_number < self.state_number,
            locked=payouts[broadcaster],
            released=payouts[counterparty],
        )
        self.status = ChannelStatus.CLOSING
        return self.pending_close

    def penalty_window_open(self, current_height: int) -> bool:
        close = self.pending_close
        return (
            close is not None
            and self.status == ChannelStatus.CLOSING
            and close.stale
            and current_height < close.unlock_height
        )

    def penalize(self, claimant: str, current_height: int, reward: int = 0) -> CloseOutcome:
        """
        Claim the broadcaster's locked share with its revocation secret.

        Args:
            claimant: Victim or monitor submitting the penalty.
            current_height: Current L1 height.
            reward: Amount kept by a monitor, capped at the locked share.

        Raises:
            NotStaleError: If the broadcast state was the latest.
            WindowExpiredError: If the timelock already elapsed.
        """
        close = self.pending_close
        if close is None or (self.outcome is not None and self.outcome.penalized):
            raise ChannelNotOpenError(f"{self.id} has no pending unilateral close")
        if not close.stale:
            raise NotStaleError(f"{self.id} was closed with its latest state")
        if self.status == ChannelStatus.CLOSED or current_height >= close.unlock_height:
            raise WindowExpiredError(f"penalty window on {self.id} closed at height {close.unlock_height}")

        victim = close.counterparty
        secret = self.revealed_secret(victim, close.state_number)
        entry = self.revocation_store[close.state_number][close.broadcaster]
        if secret is None or sha256(secret) != entry.hash:
            raise UnknownStateError(f"{victim} holds no revocation secret for state {close.state_number}")

        reward = min(max(reward, 0), close.locked) if claimant != victim else 0
        payouts = {close.broadcaster: 0, victim: close.released + close.locked - reward}
        if reward:
            payouts[claimant] = payouts.get(claimant, 0) + reward
        self.status = ChannelStatus.CLOSED
        self.outcome = CloseOutcome(
            "penalty", payouts, close.state_number, penalized=True, claimant=claimant, reward=reward
        )
        logger.info("%s: %s penalized stale state %d by %s", self.id, claimant, close.state_number, close.broadcaster)
        return self.outcome

    def countersign_close(self) -> CloseOutcome:
        """Counterparty assent to an honest unilateral close; lifts the timelock."""
        close = self._pending_or_raise()
        if close.stale:
            raise NotStaleError(f"{self.id}: a stale close cannot be countersigned")
        return self._finish_unilateral("countersigned")

    def finalize_close(self, current_height: int) -> CloseOutcome:
        """
        Release the broadcaster's share once the timelock has passed.

        Raises:
            TimelockActiveError: Before ``unlock_height``.
        """
        close = self._pending_or_raise()
        if current_height < close.unlock_height:
            raise TimelockActiveError(
                f"{self.id} unlocks at height {close.unlock_height}, now {current_height}"
            )
        return self._finish_unilateral("unilateral")

    def _pending_or_raise(self) -> PendingClose:
        if self.status != ChannelStatus.CLOSING or self.pending_close is None:
            raise ChannelNotOpenError(f"{self.id} has no pending unilateral close")
        return self.pending_close

    def _finish_unilateral(self, kind: str) -> CloseOutcome:
        close = self.pending_close
        payouts = {close.counterparty: close.released, close.broadcaster: close.locked}
        self.status = ChannelStatus.CLOSED
        self.outcome = CloseOutcome(kind, payouts, close.state_number)
        return self.outcome

    # -- invariants ---------------------------------------------------------

    def check_conservation(self) -> None:
        locked = sum(h.amount for h in self._htlcs.values())
        if self.balance_a < 0 or self.balance_b < 0:
            raise InvariantViolation(f"{self.id}: negative balance")
        if self.balance_a + self.balance_b + locked != self.capacity:
            raise InvariantViolation(
                f"{self.id}: {self.balance_a} + {self.balance_b} + {locked} != capacity {self.capacity}"
            )
