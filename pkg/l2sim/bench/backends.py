"""
Benchmark backends: the supermarket payment flow on each system.

Every backend owns its own event loop, L1 chain and event log, so runs are
independent and deterministic. A customer pays the ``supermarket`` once;
the merchant absorbs every per-payment fee.

* ``channels``: customers -> routing node -> supermarket over HTLCs. The
  routing node forwards one payment at a time; a payment completes when its
  preimage has travelled back to the customer.
* ``plasma``: child transfers complete when their block is produced.
* ``rollup-zk`` / ``rollup-optimistic``: bundled transfers paid by the
  merchant are final on L2 when the operator seals their batch. They only
  count as completed once L1 confirms that batch (zk: proof verified and
  batch finalized; optimistic: batch data included, the challenge window
  only delays L1 withdrawals). A batch that never confirms before the
  deadline fails its payments.
* ``l1-direct``: plain L1 transfers complete at block inclusion.
"""

import itertools
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from fractions import Fraction
from functools import partial
from typing import Dict, List, Optional, Sequence, Tuple, Type

import numpy as np

from ..chain.ledger import Block, L1Chain, L1Transaction
from ..chain.params import WEI_PER_ETH, load_chain_params, tps_capacity
from ..channels.fees import FeePolicy
from ..channels.network import Channel, ChannelNetwork, Invoice
from ..errors import BackendMisconfiguredError, L2SimError, describe
from ..events import EventLog
from ..plasma.chain import PlasmaChain
from ..rollup.batch import TrustedSetup
from ..rollup.capacity import mean_onchain_cost_per_tx
from ..rollup.codec import is_representable
from ..rollup.contract import RollupContract
from ..rollup.operator import Receipt, RollupOperator
from .fees import amount_scale, channel_config, l1_transfer_fee, load_fee_schedule, plasma_config, rollup_params
from .workload import BenchConfig, PaymentIntent

logger = logging.getLogger(__name__)

_MODULE = "bench"

MERCHANT = "supermarket"
HUB = "routing-node"
PLASMA_OPERATOR = "plasma-operator"
PUBLISHER = "rollup-operator"

# operators pay L1 commit and batch fees out of this float
_OPERATOR_FLOAT = 1_000 * WEI_PER_ETH


@dataclass
class Execution:
    """Raw outcome of one backend run; :mod:`l2sim.bench.runner` turns it into metrics."""

    submitted: Dict[int, Fraction] = field(default_factory=dict)
    completed: Dict[int, Fraction] = field(default_factory=dict)
    failures: Dict[int, str] = field(default_factory=dict)
    fees: Dict[str, int] = field(default_factory=lambda: {"customer_l1": 0, "customer_l2": 0, "merchant_l2": 0})
    accounting: Dict[str, object] = field(default_factory=dict)
    details: Dict[str, object] = field(default_factory=dict)
    currency: str = ""
    unit: str = ""


class Backend(ABC):
    """
    Shared driver: schedule submissions, advance the chain, collect completions.

    Subclasses set up accounts in :meth:`prepare`, execute payments in
    :meth:`submit`, report completions through :meth:`complete` and expose
    the balances used for the accounting closure in :meth:`holdings`.
    """

    name = ""

    def __init__(self, config: BenchConfig, chain_preset: str, seed: int = 0):
        self.config = config
        self.seed = seed
        self.events = EventLog()
        self.chain = L1Chain(load_chain_params(chain_preset), events=self.events)
        self.execution = Execution()
        self.customers: List[str] = []

    @property
    @abstractmethod
    def step_s(self) -> Fraction:
        """Simulated time the driver advances between two completion checks."""

    @abstractmethod
    def prepare(self, intents: Sequence[PaymentIntent]) -> None:
        """Fund accounts and open channels or deposits before the measured period."""

    @abstractmethod
    def submit(self, group: Sequence[PaymentIntent]) -> None:
        """Start the payments of intents submitted at the same instant."""

    @abstractmethod
    def holdings(self) -> Tuple[int, int, int]:
        """``(customers, merchant, fee recipients)`` balances in the backend's ledger."""

    def collect(self) -> None:
        """Record completions that are only visible after the chain advanced."""

    def finish(self) -> None:
        """Stop periodic producers."""

    # -- bookkeeping --------------------------------------------------------

    def complete(self, intent: PaymentIntent, at: Fraction) -> None:
        ex = self.execution
        if intent.seq in ex.completed or intent.seq in ex.failures:
            return
        ex.completed[intent.seq] = at
        self.events.emit(_MODULE, "payment_completed", seq=intent.seq, backend=self.name, final_at=at)

    def fail(self, intent: PaymentIntent, reason: str) -> None:
        ex = self.execution
        if intent.seq in ex.completed or intent.seq in ex.failures:
            return
        ex.failures[intent.seq] = reason
        self.events.emit(_MODULE, "payment_failed", seq=intent.seq, backend=self.name, reason=reason)
        logger.warning("%s: payment %d failed: %s", self.name, intent.seq, reason)

    def _submit_group(self, group: Sequence[PaymentIntent]) -> None:
        for intent in group:
            self.execution.submitted[intent.seq] = self.chain.now
            self.events.emit(_MODULE, "payment_submitted", seq=intent.seq, backend=self.name, amount=intent.amount)
        self.submit(group)

    # -- driver -------------------------------------------------------------

    def run(self, intents: Sequence[PaymentIntent]) -> Execution:
        """Execute *intents* and return the raw outcome."""
        ex = self.execution
        if not intents:
            return ex
        self.customers = [intent.customer for intent in intents]
        self.prepare(intents)
        t0 = self.chain.now
        before = self.holdings()

        if self.config.mode == "burst":
            groups = [(t0, list(intents))]
        else:
            groups = [(t0 + t, list(g)) for t, g in itertools.groupby(intents, key=lambda i: i.t)]
        for at, group in groups:
            self.chain.loop.schedule_at(at, partial(self._submit_group, group), label=f"{self.name}-submit")

        deadline = groups[-1][0] + self.config.max_wait_s
        while len(ex.completed) + len(ex.failures) < len(intents) and self.chain.now < deadline:
            self.chain.advance_to(min(self.chain.now + self.step_s, deadline))
            self.collect()
        self.finish()
        for intent in intents:
            self.fail(intent, "not final before the deadline")

        after = self.holdings()
        debits, credits, fees = before[0] - after[0], after[1] - before[1], after[2] - before[2]
        ex.accounting = {
            "customer_debits": debits,
            "merchant_credits": credits,
            "fees": fees,
            "balanced": debits == credits + fees,
        }
        logger.info(
            "%s: %d completed, %d failed in %s simulated seconds",
            self.name,
            len(ex.completed),
            len(ex.failures),
            self.chain.now - t0,
        )
        return ex


# ---------------------------------------------------------------------------
# Channels
# ---------------------------------------------------------------------------


class ChannelsBackend(Backend):
    """Hub-and-spoke channel network with a FIFO routing node."""

    name = "channels"

    def __init__(self, config: BenchConfig, seed: int = 0):
        schedule = load_fee_schedule(self.name)
        super().__init__(config, schedule["chain_preset"], seed)
        self.execution.currency, self.execution.unit = schedule["currency"], schedule["unit"]
        self.scale = amount_scale(schedule)
        self.policy = FeePolicy(schedule["hop_base_fee"], schedule["hop_proportional_ppm"])
        self.network = ChannelNetwork(self.chain, channel_config(schedule), seed)
        self.merchant_channel: Optional[Channel] = None
        self.customer_channels: List[Channel] = []
        self._hub_free_at = Fraction(0)

    @property
    def step_s(self) -> Fraction:
        return Fraction(1)

    def prepare(self, intents: Sequence[PaymentIntent]) -> None:
        open_fee = self.network.config.open_fee
        total = sum(intent.amount for intent in intents) * self.scale
        self.chain.fund(HUB, total + open_fee)
        self.merchant_channel = self.network.open_channel(HUB, MERCHANT, total, 0, policy_a=self.policy)
        for intent in intents:
            amount = intent.amount * self.scale
            self.chain.fund(intent.customer, amount + open_fee)
            self.customer_channels.append(self.network.open_channel(intent.customer, HUB, amount))
            self.execution.fees["customer_l1"] += open_fee
        self.chain.drain()
        self._hub_free_at = self.chain.now

    def submit(self, group: Sequence[PaymentIntent]) -> None:
        hop, service = self.config.hop_latency_s, self.config.hub_service_s
        for intent in group:
            amount = intent.amount * self.scale
            try:
                invoice = self.network.create_invoice(MERCHANT, amount - self.policy.fee(amount))
            except (L2SimError, ValueError) as e:
                self.fail(intent, describe(e))
                continue
            start = max(self.chain.now + hop, self._hub_free_at)
            self._hub_free_at = start + service
            # onward hop to the merchant, then the preimage travels back over both hops
            settled_at = start + service + 3 * hop
            self.chain.loop.schedule_at(settled_at, partial(self._settle, intent, invoice), label="channels-settle")

    def _settle(self, intent: PaymentIntent, invoice: Invoice) -> None:
        try:
            result = self.network.pay(intent.customer, invoice)
        except L2SimError as e:
            self.fail(intent, describe(e))
            return
        if not result.success:
            self.fail(intent, result.reason)
            return
        self.execution.fees["merchant_l2"] += result.fee_paid
        self.complete(intent, self.chain.now)

    def holdings(self) -> Tuple[int, int, int]:
        customers = sum(ch.balance_of(ch.party_a) for ch in self.customer_channels)
        hub = self.merchant_channel.balance_of(HUB) + sum(ch.balance_of(HUB) for ch in self.customer_channels)
        return customers, self.merchant_channel.balance_of(MERCHANT), hub


# ---------------------------------------------------------------------------
# Plasma
# ---------------------------------------------------------------------------


class PlasmaBackend(Backend):
    """Honest Plasma operator producing child blocks on a timer."""

    name = "plasma"

    def __init__(self, config: BenchConfig, seed: int = 0):
        schedule = load_fee_schedule(self.name)
        super().__init__(config, schedule["chain_preset"], seed)
        self.execution.currency, self.execution.unit = schedule["currency"], schedule["unit"]
        self.scale = amount_scale(schedule)
        self.plasma = PlasmaChain(
            self.chain, PLASMA_OPERATOR, plasma_config(schedule, config.plasma_block_interval_s), seed
        )
        self._in_flight: Dict[bytes, PaymentIntent] = {}
        self._scanned = 0

    @property
    def step_s(self) -> Fraction:
        return self.plasma.config.block_interval_s

    def prepare(self, intents: Sequence[PaymentIntent]) -> None:
        config = self.plasma.config
        self.chain.fund(PLASMA_OPERATOR, config.operator_stake + _OPERATOR_FLOAT)
        self.plasma.post_stake()
        deposit_fee = config.l1_fee(config.deposit_gas)
        for intent in intents:
            self.chain.fund(intent.customer, intent.amount * self.scale + deposit_fee)
            self.execution.fees["customer_l1"] += deposit_fee
        self.plasma.deposit_many([(intent.customer, intent.amount * self.scale) for intent in intents])
        self.plasma.produce_and_commit()
        self._scanned = self.plasma.height
        self.plasma.start()

    def submit(self, group: Sequence[PaymentIntent]) -> None:
        fee = self.plasma.config.transfer_fee
        for intent in group:
            amount = intent.amount * self.scale
            try:
                tx = self.plasma.pay(intent.customer, MERCHANT, amount - fee, fee)
            except (L2SimError, ValueError) as e:
                self.fail(intent, describe(e))
                continue
            self._in_flight[tx.id] = intent
            self.execution.fees["merchant_l2"] += fee

    def collect(self) -> None:
        for block in self.plasma.blocks[self._scanned :]:
            if not block.committed:
                continue
            for tx in block.txs:
                intent = self._in_flight.pop(tx.id, None)
                if intent is not None:
                    self.complete(intent, block.timestamp)
        self._scanned = self.plasma.height

    def finish(self) -> None:
        self.plasma.stop()
        self.execution.details["child_blocks"] = self.plasma.height

    def holdings(self) -> Tuple[int, int, int]:
        live = self.plasma.live
        return sum(live.balance(c) for c in self.customers), live.balance(MERCHANT), self.plasma.fees


# ---------------------------------------------------------------------------
# Rollups
# ---------------------------------------------------------------------------


class RollupBackend(Backend):
    """Rollup operator sealing bundles of merchant-paid transfers."""

    name = "rollup-zk"

    def __init__(self, config: BenchConfig, seed: int = 0):
        schedule = load_fee_schedule(self.name)
        super().__init__(config, schedule["chain_preset"], seed)
        self.execution.currency, self.execution.unit = schedule["currency"], schedule["unit"]
        self.scale = amount_scale(schedule)
        self.params = rollup_params(self.name, schedule, config.rollup_seal_interval_s)
        setup = TrustedSetup(np.random.default_rng(seed))
        self.contract = RollupContract(self.chain, self.params, setup)
        self.operator: Optional[RollupOperator] = None
        self._in_flight: List[Tuple[Receipt, PaymentIntent]] = []
        self._l1_latencies: List[Fraction] = []
        self._first_batch = 0

    @property
    def step_s(self) -> Fraction:
        return self.params.batch_interval_s

    def bundle_sizes(self, n: int) -> List[int]:
        """
        Split *n* transfers into bundles whose total fee the codec can carry.

        A bundle of ``k`` transfers pays ``k * transfer_fee`` in one record,
        so only sizes with a representable total are used (one always is).
        """
        sizes = []
        while n > 0:
            k = next(
                k
                for k in range(min(n, self.params.max_authors), 0, -1)
                if is_representable(0, k * self.params.transfer_fee)
            )
            sizes.append(k)
            n -= k
        return sizes

    def prepare(self, intents: Sequence[PaymentIntent]) -> None:
        params = self.params
        self.chain.fund(PUBLISHER, params.publisher_bond + _OPERATOR_FLOAT)
        self.contract.stake(PUBLISHER)
        prover = self.contract.setup.authorize(PUBLISHER) if params.is_zk else None
        self.operator = RollupOperator(self.contract, PUBLISHER, prover)

        fee_float = len(intents) * params.transfer_fee
        self.chain.fund(MERCHANT, fee_float + params.deposit_fee)
        self.contract.deposit(MERCHANT, fee_float)
        for intent in intents:
            amount = intent.amount * self.scale
            self.chain.fund(intent.customer, amount + params.deposit_fee)
            self.contract.deposit(intent.customer, amount)
            self.execution.fees["customer_l1"] += params.deposit_fee
        self.operator.seal_batch()
        self.chain.produce_block()
        self._first_batch = len(self.contract.batches)
        self.operator.start()

    def submit(self, group: Sequence[PaymentIntent]) -> None:
        position = 0
        for size in self.bundle_sizes(len(group)):
            chunk = group[position : position + size]
            position += size
            transfers = [(i.customer, MERCHANT, i.amount * self.scale) for i in chunk]
            try:
                receipts = self.operator.batched_transfer(MERCHANT, transfers)
            except (L2SimError, ValueError) as e:
                for intent in chunk:
                    self.fail(intent, describe(e))
                continue
            self.execution.fees["merchant_l2"] += size * self.params.transfer_fee
            # the trailing fee receipt has no intent
            self._in_flight.extend(zip(receipts, chunk))

    def confirmed_at(self, receipt: Receipt) -> Optional[Fraction]:
        """When L1 confirmed the receipt's batch: proof verified (zk) or data included (optimistic)."""
        return receipt.finalized_at if self.params.is_zk else receipt.included_at

    def collect(self) -> None:
        waiting = []
        for receipt, intent in self._in_flight:
            if receipt.dropped:
                self.fail(intent, "dropped after a batch revert")
                continue
            confirmed = self.confirmed_at(receipt)
            if receipt.sealed_at is not None and confirmed is not None:
                self.complete(intent, receipt.sealed_at)
                self._l1_latencies.append(confirmed - self.execution.submitted[intent.seq])
            else:
                waiting.append((receipt, intent))
        self._in_flight = waiting

    def finish(self) -> None:
        self.operator.stop()
        details = self.execution.details
        details["l1_confirmation"] = "finalized" if self.params.is_zk else "included"
        if self._l1_latencies:
            total = sum(self._l1_latencies, Fraction(0))
            details["l1_confirmation_mean_s"] = str(total / len(self._l1_latencies))
            details["l1_confirmation_max_s"] = str(max(self._l1_latencies))
        batches = [b for b in self.contract.batches[self._first_batch :] if b.n_txs]
        details["batches"] = len(batches)
        if batches:
            details["mean_onchain_cost_per_tx"] = str(mean_onchain_cost_per_tx(batches))

    def holdings(self) -> Tuple[int, int, int]:
        balance = self.operator.pending_balance
        return sum(balance(c) for c in self.customers), balance(MERCHANT), balance(PUBLISHER)


class OptimisticRollupBackend(RollupBackend):
    name = "rollup-optimistic"


# ---------------------------------------------------------------------------
# Direct L1
# ---------------------------------------------------------------------------


class L1DirectBackend(Backend):
    """Every payment is an L1 transfer; bounded by block space."""

    name = "l1-direct"

    def __init__(self, config: BenchConfig, seed: int = 0):
        schedule = load_fee_schedule(self.name, config.l1_preset)
        super().__init__(config, config.l1_preset, seed)
        self.execution.currency, self.execution.unit = schedule["currency"], schedule["unit"]
        self.scale = amount_scale(schedule)
        self.fee = l1_transfer_fee(schedule)
        self.execution.details["capacity_tps"] = str(tps_capacity(self.chain.params).tps)

    @property
    def step_s(self) -> Fraction:
        return self.chain.params.block_interval_s

    def prepare(self, intents: Sequence[PaymentIntent]) -> None:
        for intent in intents:
            self.chain.fund(intent.customer, intent.amount * self.scale + self.fee)

    def submit(self, group: Sequence[PaymentIntent]) -> None:
        for intent in group:
            try:
                self.chain.transfer(
                    intent.customer,
                    MERCHANT,
                    intent.amount * self.scale,
                    fee=self.fee,
                    on_included=partial(self._included, intent),
                )
            except (L2SimError, ValueError) as e:
                self.fail(intent, describe(e))
                continue
            self.execution.fees["customer_l1"] += self.fee

    def _included(self, intent: PaymentIntent, tx: L1Transaction, block: Block) -> None:
        self.complete(intent, block.timestamp_s)

    def holdings(self) -> Tuple[int, int, int]:
        chain = self.chain
        customers = sum(chain.balance(c) for c in self.customers)
        return customers, chain.balance(MERCHANT), chain.pending_fees + chain.fees_collected


BACKEND_TYPES: Dict[str, Type[Backend]] = {
    cls.name: cls
    for cls in (ChannelsBackend, PlasmaBackend, RollupBackend, OptimisticRollupBackend, L1DirectBackend)
}


def make_backend(name: str, config: Optional[BenchConfig] = None, seed: int = 0) -> Backend:
    """
    Instantiate the backend registered as *name*.

    Raises:
        BackendMisconfiguredError: For an unknown backend.
    """
    if name not in BACKEND_TYPES:
        raise BackendMisconfiguredError(f"Unknown backend '{name}'. Available: {', '.join(BACKEND_TYPES)}")
    return BACKEND_TYPES[name](config or BenchConfig(), seed)
