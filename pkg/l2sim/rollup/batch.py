"""
Rollup batches and validity attestations.

A batch is a list of compressed transactions with the previous and the new
state root attached. In zk mode the batch also carries a
:class:`ValidityAttestation`: a keyed tag over ``(prev_root, new_root,
batch digest)`` that only provers authorized at the rollup's trusted setup
can produce. Checking it costs one hash whatever the batch length; producing
it requires replaying the whole batch.
"""

import hmac
import logging
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Optional, Sequence, Set, Tuple

import numpy as np

from ..chain._hashing import digest, sha256
from ..errors import InvalidProofError, InvalidTxError, StaleRootError, UntrustedProverError
from .codec import encode_batch
from .params import RollupParams
from .state import AccountState, DepositRecord, RollupTx, apply_sequence

logger = logging.getLogger(__name__)


class BatchStatus(str, Enum):
    PENDING = "pending"
    FINALIZED = "finalized"
    REVERTED = "reverted"


@dataclass(frozen=True)
class ValidityAttestation:
    prev_root: bytes
    new_root: bytes
    attestor: str
    tag: bytes


@dataclass
class RollupBatch:
    """
    One published batch.

    ``deposits`` are the priority-queue entries applied ahead of ``txs``;
    ``calldata`` is the compressed encoding of ``txs`` that goes on L1.
    """

    index: int
    prev_root: bytes
    new_root: bytes
    txs: Tuple[RollupTx, ...]
    calldata: bytes
    publisher: str
    deposits: Tuple[DepositRecord, ...] = ()
    withdrawals: Tuple[Tuple[str, int], ...] = ()
    proof: Optional[ValidityAttestation] = None
    status: BatchStatus = BatchStatus.PENDING
    submitted_at: Optional[Fraction] = None
    included_at: Optional[Fraction] = None
    finalized_at: Optional[Fraction] = None
    l1_tx: Optional[bytes] = field(default=None, repr=False)
    l1_cost: int = 0

    @property
    def n_txs(self) -> int:
        return len(self.txs)

    @property
    def compressed_size(self) -> int:
        return len(self.calldata)

    @property
    def digest(self) -> bytes:
        return batch_digest(self.prev_root, self.new_root, self.calldata, self.deposits)

    def to_record(self) -> dict:
        """Ledger line for the batch (sizes, costs and status timestamps)."""
        return {
            "index": self.index,
            "publisher": self.publisher,
            "status": self.status.value,
            "n_txs": self.n_txs,
            "n_deposits": len(self.deposits),
            "compressed_bytes": self.compressed_size,
            "prev_root": self.prev_root.hex(),
            "new_root": self.new_root.hex(),
            "l1_cost": self.l1_cost,
            "submitted_at": None if self.submitted_at is None else str(self.submitted_at),
            "included_at": None if self.included_at is None else str(self.included_at),
            "finalized_at": None if self.finalized_at is None else str(self.finalized_at),
        }


def batch_digest(prev_root: bytes, new_root: bytes, calldata: bytes, deposits: Sequence[DepositRecord]) -> bytes:
    return digest(
        {
            "prev": prev_root,
            "new": new_root,
            "calldata": calldata,
            "deposits": [[d.seq, d.account, d.amount] for d in deposits],
        }
    )


def build_batch(
    state: AccountState,
    txs: Sequence[RollupTx],
    params: RollupParams,
    publisher: str,
    registry: Sequence[str],
    deposits: Sequence[DepositRecord] = (),
    index: int = 0,
) -> RollupBatch:
    """
    Apply *txs* in order to a copy of *state* and package the result.

    Queued deposits are applied first. Transaction fees go to the
    publisher's rollup account. *state* itself is not modified.

    Args:
        state: Account state at the batch's previous root.
        txs: Transactions in application order.
        params: Rollup parameters (record size).
        publisher: Publisher account; receives fees.
        registry: Account-index registry used by the codec.
        deposits: Priority-queue deposits to include.
        index: Batch position in the contract's ledger.

    Returns:
        A pending batch with ``new_root`` computed by in-order application.

    Raises:
        InvalidTxError: With the index of the first transaction that overdraws
            or cannot be encoded.

    Example:
        >>> s = AccountState({"alice": 100})
        >>> b = build_batch(s, [], RollupParams(), "op", ["alice"])
        >>> b.new_root == b.prev_root == s.root
        True
    """
    new_state, withdrawals = apply_sequence(state, txs, publisher, deposits)
    calldata = encode_batch(txs, registry, params.tx_size_bytes)
    batch = RollupBatch(
        index=index,
        prev_root=state.root,
        new_root=new_state.root,
        txs=tuple(txs),
        calldata=calldata,
        publisher=publisher,
        deposits=tuple(deposits),
        withdrawals=withdrawals,
    )
    logger.debug("Built batch %d: %d txs, %d deposits, %d bytes", index, len(txs), len(deposits), len(calldata))
    return batch


def replay_root(state: AccountState, batch: RollupBatch) -> Optional[bytes]:
    """Root obtained by applying *batch* to *state*, or ``None`` if a transaction fails."""
    try:
        new_state, _ = apply_sequence(state, batch.txs, batch.publisher, batch.deposits)
    except InvalidTxError:
        return None
    return new_state.root


# ---------------------------------------------------------------------------
# Trusted setup and proving
# ---------------------------------------------------------------------------


class Prover:
    """Handle held by a participant authorized at the trusted setup."""

    def __init__(self, name: str, setup: "TrustedSetup"):
        self.name = name
        self._setup = setup

    def attest(self, batch: RollupBatch) -> ValidityAttestation:
        return self._setup._attest(self, batch.prev_root, batch.new_root, batch.digest)

    def forge(self, batch: RollupBatch) -> ValidityAttestation:
        """An attestation whose tag does not bind the batch (fraud injection)."""
        return ValidityAttestation(batch.prev_root, batch.new_root, self.name, sha256(batch.digest))


class TrustedSetup:
    """
    One-time setup event of a zk rollup.

    Draws the proving key from *rng* and hands :class:`Prover` handles to
    the participants it authorizes. Verification recomputes one tag.

    Example:
        >>> setup = TrustedSetup(np.random.default_rng(0))
        >>> prover = setup.authorize("op")
        >>> b = build_batch(AccountState({"a": 1}), [], RollupParams(), "op", ["a"])
        >>> setup.verify(prover.attest(b), b)
        True
    """

    def __init__(self, rng: Optional[np.random.Generator] = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self._key = rng.bytes(32)
        self._provers: Set[str] = set()
        self.proofs_generated = 0

    def authorize(self, name: str) -> Prover:
        self._provers.add(name)
        logger.debug("Authorized prover %s", name)
        return Prover(name, self)

    def is_authorized(self, name: str) -> bool:
        return name in self._provers

    def _tag(self, prev_root: bytes, new_root: bytes, batch_digest_: bytes) -> bytes:
        return sha256(self._key + prev_root + new_root + batch_digest_)

    def _attest(self, prover: Prover, prev_root: bytes, new_root: bytes, batch_digest_: bytes) -> ValidityAttestation:
        if prover.name not in self._provers:
            raise UntrustedProverError(f"{prover.name} was not authorized at setup")
        self.proofs_generated += 1
        return ValidityAttestation(prev_root, new_root, prover.name, self._tag(prev_root, new_root, batch_digest_))

    def verify(self, attestation: ValidityAttestation, batch: RollupBatch) -> bool:
        if attestation.attestor not in self._provers:
            return False
        if attestation.prev_root != batch.prev_root or attestation.new_root != batch.new_root:
            return False
        expected = self._tag(batch.prev_root, batch.new_root, batch.digest)
        return hmac.compare_digest(expected, attestation.tag)


def prove_batch(batch: RollupBatch, prover: Prover, prev_state: AccountState) -> ValidityAttestation:
    """
    Produce the validity attestation of *batch*.

    The prover replays the batch against *prev_state* before attesting, which
    is where the proving work goes; the attestation is then checked by the
    contract in constant time.

    Raises:
        UntrustedProverError: If *prover* was not authorized at setup.
        StaleRootError: If *prev_state* is not the batch's previous state.
        InvalidProofError: If the replayed root differs from ``batch.new_root``.
    """
    if not prover._setup.is_authorized(prover.name):
        raise UntrustedProverError(f"{prover.name} was not authorized at setup")
    if prev_state.root != batch.prev_root:
        raise StaleRootError("prover state does not match the batch's previous root")
    if replay_root(prev_state, batch) != batch.new_root:
        raise InvalidProofError(f"batch {batch.index} does not replay to its claimed root")
    return prover.attest(batch)
