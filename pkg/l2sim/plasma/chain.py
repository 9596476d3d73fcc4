"""
Plasma child chain run by a single, possibly Byzantine, operator.

The operator keeps two views of the UTXO set:

* ``live``: every transaction it accepted, including those in blocks it
  withholds;
* ``available``: what users can rebuild from published block data.

Both views share one event loop with the root chain, so deposits, commits,
exits and liquidity-provider swaps interleave deterministically.
"""

import itertools
import logging
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from ..chain._hashing import EMPTY_ROOT, digest
from ..chain.clock import Timer
from ..chain.keys import KeyRing
from ..chain.ledger import Block, L1Chain, L1Transaction, TxKind
from ..chain.merkle import merkle_prove, merkle_root
from ..chain.params import SECONDS_PER_DAY, WEI_PER_ETH, gas_fee, gwei
from ..errors import (
    ChainHaltedError,
    DataUnavailableError,
    InsufficientSignaturesError,
    InvalidChallengeError,
    InvariantViolation,
    LpInsolventError,
    LpRefusedError,
    MassExitNotWarrantedError,
    NotOwnerError,
    OutputLockedError,
    UnknownOutputError,
    ValueMismatchError,
)
from ..events import EventLog
from .contract import ExitRequest, InclusionProof, Meit, PlasmaContract
from .utxo import Outpoint, PlasmaTx, PlasmaTxKind, TxInput, TxOutput, Utxo, UtxoSet

logger = logging.getLogger(__name__)

_MODULE = "plasma"


# ----------------------------------------------------------------------------
# Configuration
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class PlasmaConfig:
    """
    Timing, bond and gas parameters of a Plasma deployment.

    Gas figures are the 2021 Polygon/Ethereum measurements: a deposit costs
    77,000 gas and an exit 245,000 gas at 40 Gwei on L1, a child transfer
    21,000 gas at 3 Gwei.
    """

    block_interval_s: Fraction = Fraction(21, 10)
    max_txs_per_block: int = 952
    challenge_period_s: Fraction = Fraction(7 * SECONDS_PER_DAY)
    meit_window_s: Fraction = Fraction(21 * SECONDS_PER_DAY)
    exit_bond_ratio: Fraction = Fraction(1, 10)
    exit_bond_floor: int = 1
    meit_bond: int = 5 * WEI_PER_ETH
    operator_stake: int = WEI_PER_ETH
    forged_amount: int = WEI_PER_ETH
    l1_gas_price: int = gwei(40)
    deposit_gas: int = 77_000
    exit_gas: int = 245_000
    commit_gas: int = 50_000
    meit_gas: int = 500_000
    meit_signature_gas: int = 21_000
    lp_payment_gas: int = 21_000
    child_gas_price: int = gwei(3)
    transfer_gas: int = 21_000
    lp_timeout_s: Fraction = Fraction(SECONDS_PER_DAY)

    def __post_init__(self) -> None:
        for name in ("block_interval_s", "challenge_period_s", "meit_window_s", "exit_bond_ratio", "lp_timeout_s"):
            object.__setattr__(self, name, Fraction(getattr(self, name)))
        if self.block_interval_s <= 0 or self.challenge_period_s <= 0 or self.meit_window_s <= 0:
            raise ValueError("intervals and windows must be positive")
        if self.max_txs_per_block <= 0:
            raise ValueError("max_txs_per_block must be positive")
        if self.exit_bond_ratio < 0 or self.exit_bond_floor < 1:
            raise ValueError("exit bond must be at least one unit")

    def l1_fee(self, gas: int) -> int:
        return gas_fee(gas, self.l1_gas_price)

    @property
    def transfer_fee(self) -> int:
        """Child-chain fee of a plain transfer."""
        return gas_fee(self.transfer_gas, self.child_gas_price)


class OperatorBehavior(str, Enum):
    HONEST = "honest"
    WITHHOLD = "withhold"
    INVALID_ROOT = "invalid_root"


@dataclass
class PlasmaBlock:
    height: int
    txs: Tuple[PlasmaTx, ...]
    tx_root: bytes
    timestamp: Fraction
    committed: bool = False
    withheld: bool = False
    deposit: bool = False
    invalid: bool = False
    commit_tx: Optional[bytes] = None

    def prove(self, index: int) -> InclusionProof:
        tx = self.txs[index]
        return InclusionProof(tx, self.height, merkle_prove([t.id for t in self.txs], index))


class SwapStatus(str, Enum):
    LOCKED = "locked"
    COMPLETED = "completed"
    RECLAIMED = "reclaimed"
    VOID = "void"


@dataclass
class FastWithdrawal:
    """Hash-time-locked swap of a child output for an L1 payment from a liquidity provider."""

    swap_id: int
    user: str
    lp: str
    utxo: Utxo
    lp_fee: int
    payout: int
    deadline: Fraction
    status: SwapStatus = SwapStatus.LOCKED
    l1_tx: Optional[bytes] = None
    child_tx: Optional[bytes] = None

    @property
    def escrow(self) -> str:
        return f"swap:{self.swap_id}"


@dataclass
class MassExitReport:
    """The mass exit and the L1 congestion its transactions caused."""

    meit: Meit
    baseline_depth: int
    peak_depth: int
    blocks_to_drain: int
    tx_count: int
    delays_s: List[Fraction] = field(default_factory=list)

    @property
    def mean_delay_s(self) -> Fraction:
        return sum(self.delays_s, Fraction(0)) / len(self.delays_s) if self.delays_s else Fraction(0)

    @property
    def max_delay_s(self) -> Fraction:
        return max(self.delays_s) if self.delays_s else Fraction(0)

    def to_dict(self) -> Dict[str, object]:
        return {
            "meit": self.meit.meit_id,
            "participants": len(self.meit.participants),
            "claims": len(self.meit.claims),
            "baseline_depth": self.baseline_depth,
            "peak_depth": self.peak_depth,
            "blocks_to_drain": self.blocks_to_drain,
            "tx_count": self.tx_count,
            "mean_delay_s": str(self.mean_delay_s),
            "max_delay_s": str(self.max_delay_s),
        }


def _meit_message(height: int) -> bytes:
    return digest({"mass_exit_from": height})


# ----------------------------------------------------------------------------
# Child chain
# ----------------------------------------------------------------------------


class PlasmaChain:
    """
    A Plasma child chain anchored to an L1 contract.

    Args:
        chain: Root chain that holds the contract.
        operator: L1 account of the operator (pays commit fees, posts stake).
        config: Deployment parameters; defaults to :class:`PlasmaConfig`.
        seed: Seed of the key ring used for child signatures.
        keys: Shared key ring, overriding *seed*.

    Example:
        >>> from l2sim.chain import L1Chain, load_chain_params
        >>> l1 = L1Chain(load_chain_params("ethereum-2021"))
        >>> l1.fund("alice", 10**18)
        >>> l1.fund("operator", 10**18)
        >>> plasma = PlasmaChain(l1)
        >>> utxo = plasma.deposit("alice", 10**17)
        >>> plasma.live.balance("alice") == 10**17
        True
    """

    def __init__(
        self,
        chain: L1Chain,
        operator: str = "operator",
        config: Optional[PlasmaConfig] = None,
        seed: int = 0,
        keys: Optional[KeyRing] = None,
    ):
        self.chain = chain
        self.operator = operator
        self.config = config or PlasmaConfig()
        self.events: EventLog = chain.events
        self.keys = keys if keys is not None else KeyRing(np.random.default_rng(seed))
        self.contract = PlasmaContract(chain, self.keys, self.config, self.events)
        self.behavior = OperatorBehavior.HONEST

        self.live = UtxoSet()
        self.available = UtxoSet()
        self.available_height = 0
        self.blocks: List[PlasmaBlock] = []
        self.halted = False
        self.fees = 0
        self.forged_value = 0
        self.swaps: Dict[int, FastWithdrawal] = {}

        self._mempool: List[PlasmaTx] = []
        self._txs: Dict[bytes, PlasmaTx] = {}
        self._tx_location: Dict[bytes, Tuple[int, int]] = {}
        self._available_ids: set = set()
        self._locked: Dict[Outpoint, str] = {}
        self._rolled_back: set = set()
        self._tainted_ids: set = set()
        self._exited: set = set()
        self._pending_deposits: Dict[bytes, Tuple[str, int]] = {}
        self._deposit_outputs: Dict[bytes, Utxo] = {}
        self._nonces = itertools.count(1)
        self._swap_ids = itertools.count()
        self._timer: Optional[Timer] = None

    # -- inspection ---------------------------------------------------------

    @property
    def height(self) -> int:
        return len(self.blocks)

    @property
    def mempool_depth(self) -> int:
        return len(self._mempool)

    def block(self, height: int) -> PlasmaBlock:
        if not 1 <= height <= self.height:
            raise LookupError(f"no child block at height {height}")
        return self.blocks[height - 1]

    def block_data(self, height: int) -> PlasmaBlock:
        """
        The published contents of block *height*.

        Raises:
            DataUnavailableError: If the operator withheld the block.
        """
        block = self.block(height)
        if block.withheld:
            raise DataUnavailableError(f"child block {height} was withheld by the operator")
        return block

    def missing_blocks(self) -> List[int]:
        return [b.height for b in self.blocks if b.withheld]

    def is_locked(self, outpoint: Outpoint) -> bool:
        return outpoint in self._locked

    def set_behavior(self, behavior: OperatorBehavior) -> None:
        self.behavior = OperatorBehavior(behavior)
        self.events.emit(_MODULE, "operator_behavior", behavior=self.behavior)
        if self.behavior != OperatorBehavior.HONEST:
            logger.info("Plasma operator switched to %s", self.behavior.value)

    def post_stake(self, amount: Optional[int] = None) -> None:
        """Lock the operator's slashable stake in the contract."""
        self.contract.post_stake(self.operator, self.config.operator_stake if amount is None else amount)

    # -- deposits -----------------------------------------------------------

    def begin_deposit(self, user: str, amount: int) -> L1Transaction:
        """
        Step one of a deposit: the L1 transaction to the contract.

        The child chain includes the deposit once the transaction is mined.

        Raises:
            InsufficientFundsError: If *user* cannot pay amount plus fee.
        """
        tx = self.contract.accept_deposit(user, amount, on_included=self._on_deposit_mined)
        self._pending_deposits[tx.id] = (user, amount)
        return tx

    def _on_deposit_mined(self, tx: L1Transaction, block: Block) -> None:
        user, amount = self._pending_deposits.pop(tx.id)
        self._deposit_outputs[tx.id] = self.include_deposit(user, amount)

    def include_deposit(self, user: str, amount: int) -> Utxo:
        """
        Step two: a contract-created deposit block promising the funds.

        Deposit blocks are always available, whatever the operator does.
        The created output is not spendable until acknowledged.
        """
        tx = PlasmaTx(outputs=(TxOutput(user, amount),), kind=PlasmaTxKind.DEPOSIT, nonce=next(self._nonces))
        self.live.apply(tx)
        self.available.apply(tx)
        self._available_ids.add(tx.id)
        self._txs[tx.id] = tx

        height = self.height + 1
        block = PlasmaBlock(height, (tx,), merkle_root([tx.id]), self.chain.now, committed=True, deposit=True)
        self.blocks.append(block)
        self._tx_location[tx.id] = (height, 0)
        self.contract.commit(height, block.tx_root, deposit=True)
        if self.available_height == height - 1:
            self.available_height = height
        self.events.emit(_MODULE, "deposit_included", height=height, user=user, amount=amount, tx=tx.id)
        return tx.output(0)

    def acknowledge_deposit(self, utxo: Utxo) -> Utxo:
        """Step three: the depositor's acknowledgment, which makes the output spendable."""
        tx = PlasmaTx(
            inputs=(TxInput(utxo.outpoint),),
            outputs=(TxOutput(utxo.owner, utxo.amount),),
            kind=PlasmaTxKind.ACKNOWLEDGE,
            nonce=next(self._nonces),
        ).signed(self.keys, [utxo.owner])
        self.transfer(tx)
        return tx.output(0)

    def deposit(self, user: str, amount: int) -> Utxo:
        """
        Run the three deposit steps in order and return the spendable output.

        L1 blocks are produced until the deposit transaction is mined.

        Raises:
            InsufficientFundsError: If *user* cannot pay amount plus fee on L1.
        """
        return self.deposit_many([(user, amount)])[0]

    def deposit_many(self, deposits: Sequence[Tuple[str, int]]) -> List[Utxo]:
        """Submit every deposit first, mine until all are included, then acknowledge them in order."""
        txs = [self.begin_deposit(user, amount) for user, amount in deposits]
        while any(self.chain.inclusion(tx.id) is None for tx in txs):
            self.chain.produce_block()
        return [self.acknowledge_deposit(self._deposit_outputs.pop(tx.id)) for tx in txs]

    # -- transfers ----------------------------------------------------------

    def transfer(self, tx: PlasmaTx) -> PlasmaTx:
        """
        Validate *tx* against the live set, apply it and queue it.

        Raises:
            ChainHaltedError: After a mass exit.
            OutputLockedError: If an input is being exited or swapped.
            DoubleSpendError: If an input is already spent.
            BadAuthorizationError: If an input is not signed by its owner.
            ValueMismatchError: If values do not balance.
        """
        if self.halted:
            raise ChainHaltedError("the child chain halted after a mass exit")
        if tx.kind in (PlasmaTxKind.DEPOSIT, PlasmaTxKind.MINT):
            raise ValueMismatchError(f"{tx.kind.value} transactions cannot be submitted by users")
        for tx_input in tx.inputs:
            if tx_input.outpoint in self._locked:
                raise OutputLockedError(
                    f"output {tx_input.outpoint.label()} is locked by {self._locked[tx_input.outpoint]}"
                )
        self.live.apply(tx, self.keys)
        self._txs[tx.id] = tx
        self.fees += tx.fee
        self._mempool.append(tx)
        self.events.emit(
            _MODULE, "transfer", tx=tx.id, kind=tx.kind, inputs=len(tx.inputs), outputs=len(tx.outputs), fee=tx.fee
        )
        return tx

    def pay(self, owner: str, recipient: str, amount: int, fee: int = 0) -> PlasmaTx:
        """
        Build, sign and submit a transfer from *owner*'s spendable outputs.

        Outputs are selected largest first; change returns to *owner*.

        Raises:
            ValueMismatchError: If *owner* lacks spendable value.
        """
        if amount <= 0:
            raise ValueError("amount must be positive")
        candidates = sorted(
            (
                u
                for u in self.live.owned_by(owner)
                if self.live.is_acknowledged(u.outpoint) and u.outpoint not in self._locked
            ),
            key=lambda u: (-u.amount, u.outpoint),
        )
        chosen, total = [], 0
        for utxo in candidates:
            if total >= amount + fee:
                break
            chosen.append(utxo)
            total += utxo.amount
        if total < amount + fee:
            raise ValueMismatchError(f"{owner} has {total} spendable, needs {amount + fee}")
        outputs = [TxOutput(recipient, amount)]
        if total > amount + fee:
            outputs.append(TxOutput(owner, total - amount - fee))
        tx = PlasmaTx(
            inputs=tuple(TxInput(u.outpoint) for u in chosen),
            outputs=tuple(outputs),
            fee=fee,
            nonce=next(self._nonces),
        ).signed(self.keys, [owner] * len(chosen))
        return self.transfer(tx)

    # -- blocks -------------------------------------------------------------

    def produce_and_commit(self) -> PlasmaBlock:
        """
        Seal the next operator block and commit its root to L1.

        An honest operator submits one ``plasma_commit`` transaction per
        block. A withholding operator produces the block but neither
        publishes nor commits it. An ``invalid_root`` operator appends an
        unbacked mint to itself before committing.

        Raises:
            ChainHaltedError: After a mass exit.
            InsufficientFundsError: If the operator cannot pay the commit fee.
        """
        if self.halted:
            raise ChainHaltedError("the child chain halted after a mass exit")
        limit = self.config.max_txs_per_block
        txs, self._mempool = self._mempool[:limit], self._mempool[limit:]
        if self.behavior == OperatorBehavior.INVALID_ROOT:
            forged = PlasmaTx(
                outputs=(TxOutput(self.operator, self.config.forged_amount),),
                kind=PlasmaTxKind.MINT,
                nonce=next(self._nonces),
            )
            self.live.apply(forged)
            self._txs[forged.id] = forged
            self.forged_value += self.config.forged_amount
            txs.append(forged)

        height = self.height + 1
        tx_root = merkle_root([tx.id for tx in txs]) if txs else EMPTY_ROOT
        block = PlasmaBlock(height, tuple(txs), tx_root, self.chain.now)
        self.blocks.append(block)
        for index, tx in enumerate(txs):
            self._tx_location[tx.id] = (height, index)

        if self.behavior == OperatorBehavior.WITHHOLD:
            block.withheld = True
            self.events.emit(_MODULE, "block_withheld", height=height, txs=len(txs))
            logger.debug("Child block %d withheld", height)
            return block

        commit = self.chain.make_tx(
            self.operator,
            self.contract.account,
            0,
            kind=TxKind.PLASMA_COMMIT,
            gas_used=self.config.commit_gas,
            fee=self.config.l1_fee(self.config.commit_gas),
            memo=f"plasma-{height}",
        )
        self.chain.submit_tx(commit)
        self.contract.commit(height, tx_root)
        block.committed = True
        block.commit_tx = commit.id
        self.events.emit(_MODULE, "block", height=height, txs=len(txs), root=tx_root)
        self._advance_available()
        return block

    def _advance_available(self) -> None:
        while self.available_height < self.height:
            block = self.blocks[self.available_height]
            if block.withheld:
                break
            for tx in block.txs:
                if tx.id not in self._available_ids:
                    self.available.apply(tx)
                    self._available_ids.add(tx.id)
            self.available_height += 1
        for outpoint in self._rolled_back:
            self.available.remove(outpoint)

    def publish_withheld(self) -> List[int]:
        """
        Stop withholding: publish and commit withheld blocks' data at new heights.

        Blocks are produced until every re-queued transaction is included
        again, so each one has an inclusion proof on return.
        """
        heights = self.missing_blocks()
        pending = [tx for h in heights for tx in self.block(h).txs]
        requeued = {tx.id for tx in pending}
        for tx_id in requeued:
            self._tx_location.pop(tx_id, None)
        self._mempool = pending + self._mempool
        for h in heights:
            self.block(h).withheld = False
            self.block(h).txs = ()
        self.set_behavior(OperatorBehavior.HONEST)
        self.produce_and_commit()
        while any(tx.id in requeued for tx in self._mempool):
            self.produce_and_commit()
        return heights

    def start(self, interval: Optional[Fraction] = None) -> Timer:
        """Produce blocks periodically on the shared event loop."""

        def tick() -> None:
            if not self.halted:
                self.produce_and_commit()

        self._timer = self.chain.loop.schedule_every(
            interval if interval is not None else self.config.block_interval_s, tick, label="plasma-block"
        )
        return self._timer

    def stop(self) -> None:
        if self._timer is not None:
            self._timer.cancel()
            self._timer = None

    def state_at(self, height: int) -> UtxoSet:
        """
        Rebuild the UTXO set from published blocks up to *height*.

        Replay stops at the first withheld block except for deposit blocks,
        which the contract created and users can always see.
        """
        return self._replay(height)[0]

    def _replay(self, height: int) -> Tuple[UtxoSet, int]:
        state = UtxoSet()
        seen: set = set()
        fees = 0
        gap = False
        for block in self.blocks[:height]:
            if block.withheld:
                gap = True
                continue
            if gap and not block.deposit:
                continue
            for tx in block.txs:
                if tx.id not in seen:
                    state.apply(tx)
                    seen.add(tx.id)
                    if tx.id not in self._tainted_ids:
                        fees += tx.fee
        for outpoint in self._rolled_back | self._exited:
            state.remove(outpoint)
        return state, fees

    # -- proofs -------------------------------------------------------------

    def inclusion_proof(self, outpoint: Outpoint) -> InclusionProof:
        """
        Merkle proof of the transaction that created *outpoint*.

        Raises:
            UnknownOutputError: If the creating transaction is not in a block.
            DataUnavailableError: If its block was withheld.
        """
        return self._proof_of(outpoint.tx_id)

    def _proof_of(self, tx_id: bytes) -> InclusionProof:
        if tx_id not in self._tx_location:
            raise UnknownOutputError(f"transaction {tx_id.hex()[:12]} is not in a block yet")
        height, index = self._tx_location[tx_id]
        return self.block_data(height).prove(index)

    def find_spend(self, outpoint: Outpoint) -> Optional[InclusionProof]:
        """A committed, published proof that *outpoint* was spent, if one exists."""
        spender = self.live.spent_by.get(outpoint) or self.available.spent_by.get(outpoint)
        if spender is None:
            return None
        try:
            proof = self._proof_of(spender)
        except (UnknownOutputError, DataUnavailableError):
            return None
        return proof if self.contract.verify_inclusion(proof) else None

    # -- exit game ----------------------------------------------------------

    def start_exit(
        self,
        user: str,
        utxo: Utxo,
        proof: Optional[InclusionProof] = None,
        amount: Optional[int] = None,
    ) -> ExitRequest:
        """
        Start a bonded exit of *utxo*; the output is locked on the child chain.

        See :meth:`PlasmaContract.start_exit` for the errors raised.
        """
        if proof is None:
            proof = self.inclusion_proof(utxo.outpoint)
        request = self.contract.start_exit(user, utxo, proof, amount)
        self._locked[utxo.outpoint] = f"exit {request.exit_id}"
        return request

    def challenge_exit(
        self, exit_id: int, challenger: str, spend_proof: Optional[InclusionProof] = None
    ) -> ExitRequest:
        """Cancel a pending exit with a proof that its output was spent."""
        request = self.contract.exits[exit_id]
        if spend_proof is None:
            spend_proof = self.find_spend(request.utxo.outpoint)
            if spend_proof is None:
                raise InvalidChallengeError(f"no committed spend of exit {exit_id} is known")
        request = self.contract.challenge_exit(exit_id, challenger, spend_proof)
        self._locked.pop(request.utxo.outpoint, None)
        return request

    def challenge_all(self, challenger: str) -> List[ExitRequest]:
        """Challenge every pending exit whose output has a committed spend."""
        cancelled = []
        for request in self.contract.pending_exits():
            spend = self.find_spend(request.utxo.outpoint)
            if spend is not None and self.chain.now < request.deadline:
                cancelled.append(self.challenge_exit(request.exit_id, challenger, spend))
        return cancelled

    def finalize_exit(self, exit_id: int) -> ExitRequest:
        """Pay out an unchallenged exit and remove its output from the child chain."""
        request = self.contract.finalize_exit(exit_id)
        outpoint = request.utxo.outpoint
        self._locked.pop(outpoint, None)
        self.live.remove(outpoint)
        self._exited.add(outpoint)
        self.available.remove(outpoint)
        logger.info("Exit %d finalized: %d to %s", exit_id, request.utxo.amount, request.exiter)
        return request

    # -- fraud proofs -------------------------------------------------------

    def submit_fraud_proof(self, prover: str, height: int, tx_index: int) -> int:
        """
        Prove that committed block *height* holds an invalid transaction.

        The height is marked invalid (its root stays committed), the forged
        outputs and everything spending them are rolled back, the block's
        honest transactions are queued for re-inclusion and the operator
        stake is paid to *prover*.

        Returns:
            The slashed amount.

        Raises:
            DataUnavailableError: If the block was withheld.
            InvalidChallengeError: If the block is not committed, was already
                proven invalid, or the transaction is valid.
        """
        block = self.block_data(height)
        if not block.committed or block.invalid:
            raise InvalidChallengeError(f"block {height} is not a valid committed block")
        if not 0 <= tx_index < len(block.txs):
            raise InvalidChallengeError(f"block {height} has no transaction {tx_index}")
        if not self._is_fraudulent(block, block.txs[tx_index]):
            raise InvalidChallengeError(f"transaction {tx_index} of block {height} is valid")

        block.invalid = True
        self._roll_back([tx for tx in block.txs if self._is_fraudulent(block, tx)])
        honest = [tx for tx in block.txs if tx.id not in self._tainted_ids]
        self._mempool = honest + self._mempool
        return self.contract.slash(height, prover)

    @staticmethod
    def _is_fraudulent(block: PlasmaBlock, tx: PlasmaTx) -> bool:
        if tx.kind == PlasmaTxKind.MINT:
            return True
        return tx.kind == PlasmaTxKind.DEPOSIT and not block.deposit

    def _roll_back(self, forged: Sequence[PlasmaTx]) -> None:
        tainted: Dict[bytes, PlasmaTx] = {}
        queue = list(forged)
        while queue:
            tx = queue.pop()
            if tx.id in tainted:
                continue
            tainted[tx.id] = tx
            for utxo in tx.created():
                spender = self.live.spent_by.get(utxo.outpoint)
                if spender is not None:
                    queue.append(self._txs[spender])

        removed = set()
        for tx in tainted.values():
            if tx.kind == PlasmaTxKind.MINT:
                self.forged_value -= sum(o.amount for o in tx.outputs)
            else:
                self.fees -= tx.fee
            for utxo in tx.created():
                removed.add(utxo.outpoint)
                self.live.remove(utxo.outpoint)
                self.available.remove(utxo.outpoint)
                self._locked.pop(utxo.outpoint, None)
        self._rolled_back |= removed
        self._tainted_ids |= set(tainted)
        self._mempool = [tx for tx in self._mempool if tx.id not in tainted]
        self.contract.cancel_exits_on(removed, reason="rolled back by fraud proof")
        for swap in self.swaps.values():
            if swap.status == SwapStatus.LOCKED and swap.utxo.outpoint in removed:
                swap.status = SwapStatus.VOID
                self.events.emit(_MODULE, "swap_voided", swap=swap.swap_id, user=swap.user, lp=swap.lp)
                logger.warning("Swap %d voided: its output was rolled back", swap.swap_id)
        self.events.emit(_MODULE, "rolled_back", txs=sorted(tainted), outputs=len(removed))

    # -- fast withdrawals ---------------------------------------------------

    def fast_withdrawal(
        self,
        user: str,
        utxo: Utxo,
        lp: str,
        lp_fee: int,
        lp_pays: bool = True,
        lp_validates: bool = True,
    ) -> FastWithdrawal:
        """
        Swap a child output for an immediate L1 payment from a liquidity provider.

        The output is locked on the child chain. If the LP's payment of
        ``amount - lp_fee`` is mined before the timeout, the user is paid on
        L1 and the output moves to the LP. Otherwise the lock expires, the
        user keeps the output and any late LP payment is refunded.

        Args:
            user: Owner of *utxo*.
            utxo: Spendable child output to sell.
            lp: L1 account of the liquidity provider.
            lp_fee: Discount kept by the LP.
            lp_pays: Whether the LP actually sends its payment.
            lp_validates: Whether the LP fully validates the child chain.

        Raises:
            LpRefusedError: If the LP does not validate the chain or data is
                being withheld.
            LpInsolventError: If the LP cannot pay on L1.
            NotOwnerError: If *user* does not own a spendable *utxo*.
            OutputLockedError: If *utxo* is already locked.
        """
        if not lp_validates:
            raise LpRefusedError(f"{lp} does not validate the child chain")
        if self.missing_blocks() or self.behavior == OperatorBehavior.WITHHOLD or self.halted:
            raise LpRefusedError(f"{lp} refuses: the operator is withholding block data")
        if utxo.outpoint not in self.live or self.live.get(utxo.outpoint) != utxo or utxo.owner != user:
            raise NotOwnerError(f"{user} does not own a spendable {utxo.outpoint.label()}")
        if not self.live.is_acknowledged(utxo.outpoint):
            raise NotOwnerError(f"{utxo.outpoint.label()} is not acknowledged yet")
        if utxo.outpoint in self._locked:
            raise OutputLockedError(f"output {utxo.outpoint.label()} is locked by {self._locked[utxo.outpoint]}")
        payout = utxo.amount - lp_fee
        if lp_fee < 0 or payout <= 0:
            raise ValueError("lp_fee must be non-negative and below the output amount")
        l1_fee = self.config.l1_fee(self.config.lp_payment_gas)
        if self.chain.balance(lp) < payout + l1_fee:
            raise LpInsolventError(f"{lp} holds {self.chain.balance(lp)}, needs {payout + l1_fee}")

        swap = FastWithdrawal(
            swap_id=next(self._swap_ids),
            user=user,
            lp=lp,
            utxo=utxo,
            lp_fee=lp_fee,
            payout=payout,
            deadline=self.chain.now + self.config.lp_timeout_s,
        )
        self.swaps[swap.swap_id] = swap
        self._locked[utxo.outpoint] = f"swap {swap.swap_id}"
        self.events.emit(
            _MODULE, "swap_locked", swap=swap.swap_id, user=user, lp=lp, amount=utxo.amount, deadline=swap.deadline
        )
        if lp_pays:
            tx = self.chain.make_tx(
                lp, swap.escrow, payout, gas_used=self.config.lp_payment_gas, fee=l1_fee, memo=f"swap-{swap.swap_id}"
            )
            self.chain.submit_tx(tx, on_included=lambda tx, block: self._on_lp_payment(swap))
            swap.l1_tx = tx.id
        self.chain.loop.schedule_at(swap.deadline, lambda: self._expire_swap(swap), label=f"swap-{swap.swap_id}")
        return swap

    def _on_lp_payment(self, swap: FastWithdrawal) -> None:
        outpoint = swap.utxo.outpoint
        live = outpoint in self.live and self.live.get(outpoint) == swap.utxo
        if swap.status != SwapStatus.LOCKED or self.chain.now >= swap.deadline or self.halted or not live:
            self.chain.settle(swap.escrow, swap.lp, swap.payout, reason=f"swap {swap.swap_id} refund")
            self.events.emit(_MODULE, "swap_refunded", swap=swap.swap_id, lp=swap.lp)
            return
        self.chain.settle(swap.escrow, swap.user, swap.payout, reason=f"swap {swap.swap_id}")
        del self._locked[outpoint]
        tx = PlasmaTx(
            inputs=(TxInput(outpoint),),
            outputs=(TxOutput(swap.lp, swap.utxo.amount),),
            nonce=next(self._nonces),
        ).signed(self.keys, [swap.user])
        self.transfer(tx)
        swap.child_tx = tx.id
        swap.status = SwapStatus.COMPLETED
        self.events.emit(_MODULE, "swap_completed", swap=swap.swap_id, user=swap.user, lp=swap.lp, payout=swap.payout)

    def _expire_swap(self, swap: FastWithdrawal) -> None:
        if swap.status != SwapStatus.LOCKED:
            return
        swap.status = SwapStatus.RECLAIMED
        self._locked.pop(swap.utxo.outpoint, None)
        self.events.emit(_MODULE, "swap_reclaimed", swap=swap.swap_id, user=swap.user)
        logger.info("Swap %d timed out; %s keeps the output", swap.swap_id, swap.user)

    # -- mass exit ----------------------------------------------------------

    def mass_exit(
        self,
        participants: Iterable[str],
        exit_operator: str,
        fee_per_user: int = 0,
        snapshot_height: Optional[int] = None,
        signatures: Optional[Dict[str, bytes]] = None,
    ) -> Optional[MassExitReport]:
        """
        Exit every participant's outputs with one bonded mass-exit transaction.

        The exit operator rebuilds the UTXO set from published data up to
        *snapshot_height* (default: everything published), marks the
        participants' outputs in a bitmap, posts the bond and one signature
        transaction per participant. L1 blocks are then mined until these
        transactions are included, and the child chain halts at the snapshot.

        Returns:
            ``None`` when there are no participants, else the congestion
            report.

        Raises:
            MassExitNotWarrantedError: If no block data is missing.
            InsufficientSignaturesError: If a participant's signature is
                missing or invalid.
            BondUnavailableError: If the exit operator cannot post the bond.
        """
        participants = sorted(set(participants))
        if not participants:
            logger.info("Mass exit requested with no participants; nothing to do")
            return None
        if not self.missing_blocks():
            raise MassExitNotWarrantedError("all child blocks are available")

        height = self.height if snapshot_height is None else snapshot_height
        message = _meit_message(height)
        if signatures is None:
            signatures = {p: self.keys.sign(p, message) for p in participants}
        unsigned = [p for p in participants if not self.keys.verify(p, message, signatures.get(p))]
        if unsigned:
            raise InsufficientSignaturesError(f"missing mass-exit signatures from {unsigned}")

        snapshot, fees = self._replay(height)
        outpoints = tuple(u.outpoint for u in snapshot)
        members = set(participants)
        claims = {
            i: u
            for i, u in enumerate(snapshot)
            if u.owner in members and not self._has_pending_exit(u.outpoint)
        }

        sig_fee = self.config.l1_fee(self.config.meit_signature_gas)
        baseline = self.chain.mempool_depth
        meit = self.contract.open_meit(
            exit_operator,
            height,
            outpoints,
            claims,
            {p: signatures[p] for p in participants},
            fee_per_user,
            extra_cost=sig_fee * len(participants),
        )
        submitted: Dict[bytes, Fraction] = {meit.tx_id: self.chain.now}
        for participant in participants:
            tx = self.chain.make_tx(
                exit_operator,
                self.contract.account,
                0,
                kind=TxKind.PLASMA_EXIT,
                gas_used=self.config.meit_signature_gas,
                fee=sig_fee,
                memo=f"meit-{meit.meit_id}-{participant}",
            )
            self.chain.submit_tx(tx)
            submitted[tx.id] = self.chain.now

        peak = self.chain.mempool_depth
        blocks = 0
        while any(self.chain.inclusion(tx_id) is None for tx_id in submitted):
            self.chain.produce_block()
            blocks += 1
        delays = [self.chain.inclusion(tx_id)[1] - at for tx_id, at in submitted.items()]

        self.halted = True
        self.stop()
        self._mempool = []
        self.live = snapshot.copy()
        self.fees = fees
        report = MassExitReport(meit, baseline, peak, blocks, len(submitted), delays)
        self.events.emit(_MODULE, "mass_exit_report", **report.to_dict())
        logger.info(
            "Mass exit of %d users (%d outputs) submitted; L1 mempool %d -> %d",
            len(participants),
            len(claims),
            baseline,
            peak,
        )
        return report

    def _has_pending_exit(self, outpoint: Outpoint) -> bool:
        return any(e.utxo.outpoint == outpoint for e in self.contract.pending_exits())

    def challenge_mass_exit(
        self, bit: int, challenger: str, spend: Optional[InclusionProof] = None
    ) -> int:
        """Cancel one bitmap bit whose output has a committed spend; returns the bounty."""
        meit = self.contract.meit
        if spend is None:
            if meit is None or bit not in meit.claims:
                raise InvalidChallengeError(f"bit {bit} is not claimed")
            spend = self.find_spend(meit.claims[bit].outpoint)
            if spend is None:
                raise InvalidChallengeError(f"no committed spend of bit {bit} is known")
        bounty = self.contract.challenge_meit(bit, challenger, spend)
        self.live.remove(meit.claims[bit].outpoint)
        return bounty

    def finalize_mass_exit(self) -> Dict[str, int]:
        """Credit the surviving bitmap bits on L1 after the mass-exit window."""
        meit = self.contract.meit
        credited = self.contract.finalize_meit()
        for bit in meit.live_bits:
            self.live.remove(meit.claims[bit].outpoint)
            self._exited.add(meit.claims[bit].outpoint)
        return credited

    # -- invariants ---------------------------------------------------------

    def check_conservation(self) -> bool:
        """
        Deposits (plus any unrolled forged value) equal the child UTXO total
        plus fees plus what was paid out on L1, and the contract holds what
        it owes.
        """
        pending = sum(amount for _, amount in self._pending_deposits.values())
        child = self.live.total() + self.fees + self.contract.paid_out + pending
        cancelled = self._cancelled_claims()
        return (
            child + cancelled == self.contract.deposited + self.forged_value
            and self.contract.check_conservation()
        )

    def _cancelled_claims(self) -> int:
        meit = self.contract.meit
        if meit is None:
            return 0
        return sum(meit.claims[bit].amount for bit in meit.cancelled)

    def assert_invariants(self) -> None:
        """
        Raises:
            InvariantViolation: If value is not conserved, commitments are not
                strictly increasing or the root chain is inconsistent.
        """
        if not self.check_conservation():
            raise InvariantViolation("plasma: value not conserved between L1 deposits and the child chain")
        heights = list(self.contract.commitments)
        for block in self.blocks:
            if block.committed and self.contract.commitments.get(block.height) != block.tx_root:
                raise InvariantViolation(f"plasma: committed root of block {block.height} changed")
        if heights != sorted(heights):
            raise InvariantViolation("plasma: commitment heights out of order")
        self.chain.assert_invariants()
