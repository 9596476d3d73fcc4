"""
Payment-channel network over the simulated L1.

:class:`ChannelNetwork` funds channels with L1 transactions, routes
multi-hop payments with chained HTLCs, settles closes and penalties on the
ledger, and runs the watchers that punish stale broadcasts: the victim
itself when online, otherwise the first registered monitoring service.

Routing sees only the public graph (endpoints, capacities, fee policies).
A route that fits every capacity can still fail on a hidden balance; the
sender then learns only the failing hop index.
"""

import itertools
import logging
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from ..chain._hashing import sha256
from ..chain.keys import KeyRing
from ..chain.ledger import L1Chain, L1Transaction, TxKind
from ..chain.params import byte_fee
from ..errors import (
    AccessDeniedError,
    ChannelNotOpenError,
    InsufficientBalanceError,
    InsufficientFundsError,
    InvariantViolation,
    InvoiceError,
    NotEndpointError,
    RouteNotFoundError,
)
from .channel import Channel, ChannelStatus, CloseOutcome, Commitment, PendingClose
from .fees import FeePolicy
from .onion import OnionPacket, build_onion

logger = logging.getLogger(__name__)

_MODULE = "channels"


@dataclass(frozen=True)
class ChannelConfig:
    """
    Network-wide channel parameters.

    Attributes:
        timelock_blocks: Delay on a unilateral broadcaster's share.
        htlc_delta_blocks: Expiry step added per upstream hop.
        max_hops: Longest route considered by the router.
        open_tx_bytes: Size of a funding transaction.
        close_tx_bytes: Size of a closing (or withdrawal) transaction.
        feerate: L1 fee per byte paid for channel transactions.
    """

    timelock_blocks: int = 144
    htlc_delta_blocks: int = 144
    max_hops: int = 6
    open_tx_bytes: int = 235
    close_tx_bytes: int = 300
    feerate: int = 100

    def __post_init__(self) -> None:
        for name in ("timelock_blocks", "htlc_delta_blocks", "max_hops", "open_tx_bytes", "close_tx_bytes"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.feerate < 0:
            raise ValueError("feerate must be non-negative")

    @property
    def open_fee(self) -> int:
        return byte_fee(self.open_tx_bytes, self.feerate)

    @property
    def close_fee(self) -> int:
        return byte_fee(self.close_tx_bytes, self.feerate)


@dataclass(frozen=True)
class Invoice:
    """
    Payment request. Only ``H(secret)`` travels; the payee keeps the secret.
    """

    payee: str
    amount: int
    payment_hash: bytes
    expires_at: Optional[Fraction] = None
    secret_held_by_payee: bool = True


@dataclass
class Node:
    name: str
    online: bool = True
    preimages: Dict[bytes, bytes] = field(default_factory=dict, repr=False)


@dataclass
class Monitor:
    """Watchtower registered to protect *party* on one channel."""

    name: str
    channel_id: str
    party: str
    reward: int
    interventions: int = 0


@dataclass(frozen=True)
class Route:
    """
    A priced path. ``amounts[i]`` travels over ``channel_ids[i]``; the node at
    position ``i`` (``0 < i < len(nodes) - 1``) keeps ``fees[i - 1]``.
    """

    nodes: Tuple[str, ...]
    channel_ids: Tuple[str, ...]
    amounts: Tuple[int, ...]
    fees: Tuple[int, ...]

    @property
    def hops(self) -> int:
        return len(self.channel_ids)

    @property
    def intermediaries(self) -> Tuple[str, ...]:
        return self.nodes[1:-1]

    @property
    def total_fee(self) -> int:
        return sum(self.fees)

    @property
    def amount(self) -> int:
        return self.amounts[-1]

    def sort_key(self) -> tuple:
        return (self.total_fee, self.hops, self.nodes, self.channel_ids)


@dataclass
class PaymentResult:
    success: bool
    route: Optional[Route] = None
    failed_at_hop: Optional[int] = None
    attempts: int = 1
    reason: str = ""

    @property
    def fee_paid(self) -> int:
        return self.route.total_fee if self.success and self.route else 0


class ChannelNetwork:
    """
    Lightning-style network of channels anchored on an :class:`L1Chain`.

    Args:
        chain: Ledger carrying funding, closing and withdrawal transactions.
        config: Channel parameters.
        seed: Seed for key material, preimages and revocation secrets.

    Example:
        >>> from l2sim.chain import L1Chain, load_chain_params
        >>> chain = L1Chain(load_chain_params("bitcoin-2021"))
        >>> for who in "ABC":
        ...     chain.fund(who, 100_000)
        >>> net = ChannelNetwork(chain, ChannelConfig(feerate=0))
        >>> _ = net.open_channel("A", "B", 5, 2)
        >>> _ = net.open_channel("B", "C", 3, 1)
        >>> invoice = net.create_invoice("C", 2)
        >>> net.pay("A", invoice).route.nodes
        ('A', 'B', 'C')
    """

    def __init__(self, chain: L1Chain, config: Optional[ChannelConfig] = None, seed: int = 0):
        self.chain = chain
        self.config = config or ChannelConfig()
        self.events = chain.events
        self.keys = KeyRing(np.random.default_rng(seed))
        self.graph = nx.MultiGraph()
        self.channels: Dict[str, Channel] = {}
        self.nodes: Dict[str, Node] = {}
        self.monitors: Dict[str, List[Monitor]] = {}
        self._invoices: Dict[bytes, Invoice] = {}
        self._paid: set = set()
        self._channel_ids = itertools.count()
        chain.subscribe(self._on_block)

    # -- nodes --------------------------------------------------------------

    def add_node(self, name: str, online: bool = True) -> Node:
        if name not in self.nodes:
            self.nodes[name] = Node(name, online)
            self.keys.register(name)
            self.graph.add_node(name)
        return self.nodes[name]

    def is_online(self, name: str) -> bool:
        return self.add_node(name).online

    def set_online(self, name: str, online: bool) -> None:
        """
        Change a node's presence. A node returning online reacts at once to
        any stale close against it whose penalty window is still open.
        """
        self.add_node(name).online = online
        self.events.emit(_MODULE, "presence", node=name, online=online)
        if online:
            for channel in self.channels.values():
                close = channel.pending_close
                if close is not None and close.counterparty == name:
                    self._react_to_close(channel)

    # -- lifecycle ----------------------------------------------------------

    @staticmethod
    def escrow(channel_id: str) -> str:
        return f"channel:{channel_id}"

    def open_channel(
        self,
        a: str,
        b: str,
        fund_a: int,
        fund_b: int = 0,
        timelock_blocks: Optional[int] = None,
        policy_a: Optional[FeePolicy] = None,
        policy_b: Optional[FeePolicy] = None,
    ) -> Channel:
        """
        Fund a new channel with one L1 ``channel_open`` transaction.

        ``a`` pays the funding fee; ``b``'s contribution moves into the same
        escrow.

        Raises:
            InsufficientFundsError: If either side lacks L1 funds.
        """
        if fund_a < 0 or fund_b < 0 or fund_a + fund_b <= 0:
            raise ValueError("channel funding must be non-negative with a positive total")
        fee = self.config.open_fee
        if self.chain.balance(a) < fund_a + fee:
            raise InsufficientFundsError(f"{a} cannot fund {fund_a} plus {fee} fee on L1")
        if self.chain.balance(b) < fund_b:
            raise InsufficientFundsError(f"{b} cannot fund {fund_b} on L1")

        channel_id = f"ch-{next(self._channel_ids):05d}"
        policies = {a: policy_a or FeePolicy(), b: policy_b or FeePolicy()}
        channel = Channel(
            channel_id,
            a,
            b,
            fund_a,
            fund_b,
            self.keys,
            timelock_blocks or self.config.timelock_blocks,
            policies,
        )
        escrow = self.escrow(channel_id)
        tx = self.chain.make_tx(
            a,
            escrow,
            fund_a,
            kind=TxKind.CHANNEL_OPEN,
            size_bytes=self.config.open_tx_bytes,
            fee=fee,
            memo=channel_id,
        )
        self.chain.submit_tx(tx)
        self.chain.settle(b, escrow, fund_b, reason=f"{channel_id} funding")

        self.add_node(a)
        self.add_node(b)
        self.channels[channel_id] = channel
        self.graph.add_edge(a, b, key=channel_id, capacity=channel.capacity, policies=policies)
        self.events.emit(
            _MODULE, "open", channel=channel_id, a=a, b=b, fund_a=fund_a, fund_b=fund_b, fee=fee, tx=tx.id
        )
        logger.debug("Opened %s between %s and %s (capacity %d)", channel_id, a, b, channel.capacity)
        return channel

    def channel(self, channel_id: str) -> Channel:
        if channel_id not in self.channels:
            raise KeyError(f"Unknown channel '{channel_id}'")
        return self.channels[channel_id]

    def direct_pay(self, channel_id: str, payer: str, amount: int) -> Commitment:
        """Off-chain payment over one channel; carries no fee."""
        channel = self.channel(channel_id)
        commitment = channel.direct_pay(payer, amount)
        self.events.emit(
            _MODULE, "update", channel=channel_id, payer=payer, amount=amount, state=commitment.state_number
        )
        return commitment

    def _unlist(self, channel: Channel) -> None:
        if self.graph.has_edge(channel.party_a, channel.party_b, key=channel.id):
            self.graph.remove_edge(channel.party_a, channel.party_b, key=channel.id)

    def _pay_out(self, channel: Channel, payouts: Dict[str, int], reason: str) -> None:
        escrow = self.escrow(channel.id)
        for party in sorted(payouts):
            self.chain.settle(escrow, party, payouts[party], reason=f"{channel.id} {reason}")

    def close_cooperative(self, channel_id: str) -> L1Transaction:
        """
        Close with both signatures; both shares are spendable immediately.

        ``party_a`` pays the closing fee.
        """
        channel = self.channel(channel_id)
        if not channel.is_open:
            raise ChannelNotOpenError(f"{channel_id} is {channel.status.value}")
        tx = self.chain.make_tx(
            channel.party_a,
            self.escrow(channel_id),
            0,
            kind=TxKind.CHANNEL_CLOSE,
            size_bytes=self.config.close_tx_bytes,
            fee=self.config.close_fee,
            memo=channel_id,
        )
        self.chain.submit_tx(tx)
        outcome = channel.close_cooperative()
        self._pay_out(channel, outcome.payouts, "cooperative close")
        self._unlist(channel)
        self.events.emit(_MODULE, "close_cooperative", channel=channel_id, payouts=outcome.payouts, tx=tx.id)
        return tx

    def close_unilateral(self, channel_id: str, broadcaster: str, state_number: Optional[int] = None) -> PendingClose:
        """
        Broadcast a commitment (the latest one by default).

        The counterparty is paid at once; the broadcaster's share stays in
        escrow until ``unlock_height``. A stale broadcast triggers the
        watchers immediately.

        Raises:
            UnknownStateError: If *broadcaster* holds no such commitment.
        """
        channel = self.channel(channel_id)
        if state_number is None:
            state_number = channel.state_number
        pending = channel.close_unilateral(broadcaster, state_number, self.chain.height)
        tx = self.chain.make_tx(
            broadcaster,
            self.escrow(channel_id),
            0,
            kind=TxKind.CHANNEL_CLOSE,
            size_bytes=self.config.close_tx_bytes,
            fee=self.config.close_fee,
            memo=f"{channel_id}:state-{state_number}",
        )
        self.chain.submit_tx(tx)
        self.chain.settle(
            self.escrow(channel_id), pending.counterparty, pending.released, reason=f"{channel_id} unilateral close"
        )
        self._unlist(channel)
        self.events.emit(
            _MODULE,
            "close_unilateral",
            channel=channel_id,
            broadcaster=broadcaster,
            state=state_number,
            latest=channel.state_number,
            stale=pending.stale,
            unlock_height=pending.unlock_height,
            tx=tx.id,
        )
        self._react_to_close(channel)
        return pending

    def penalize_cheat(self, channel_id: str, claimant: str) -> CloseOutcome:
        """
        Punish a stale broadcast with the revealed revocation secret.

        *claimant* is the victim or a monitor registered for it; a monitor
        keeps its configured reward.

        Raises:
            WindowExpiredError: If the timelock already elapsed.
            NotStaleError: If the broadcast state was the latest one.
            NotEndpointError: If *claimant* is neither the victim nor its monitor.
        """
        channel = self.channel(channel_id)
        close = channel.pending_close
        reward = 0
        monitor = None
        if close is not None and claimant != close.counterparty:
            monitor = next(
                (m for m in self.monitors.get(channel_id, []) if m.name == claimant and m.party == close.counterparty),
                None,
            )
            if monitor is None:
                raise NotEndpointError(f"{claimant} does not watch {channel_id} for {close.counterparty}")
            reward = monitor.reward
        outcome = channel.penalize(claimant, self.chain.height, reward)
        if monitor is not None:
            monitor.interventions += 1
        payouts = {close.counterparty: close.locked - outcome.reward}
        if outcome.reward:
            payouts[claimant] = outcome.reward
        self._pay_out(channel, payouts, "penalty")
        self.events.emit(
            _MODULE,
            "penalty",
            channel=channel_id,
            claimant=claimant,
            cheater=close.broadcaster,
            state=close.state_number,
            payouts=outcome.payouts,
            reward=outcome.reward,
        )
        return outcome

    def countersign_close(self, channel_id: str) -> CloseOutcome:
        """Counterparty signs an honest unilateral close; both spend now."""
        channel = self.channel(channel_id)
        outcome = channel.countersign_close()
        self._pay_out(channel, {channel.pending_close.broadcaster: channel.pending_close.locked}, "countersigned")
        self.events.emit(_MODULE, "close_countersigned", channel=channel_id, payouts=outcome.payouts)
        return outcome

    def finalize_close(self, channel_id: str) -> CloseOutcome:
        """
        Sweep the broadcaster's share after the timelock.

        Raises:
            TimelockActiveError: Before the unlock height.
        """
        channel = self.channel(channel_id)
        outcome = channel.finalize_close(self.chain.height)
        close = channel.pending_close
        self._pay_out(channel, {close.broadcaster: close.locked}, "timelock sweep")
        self.events.emit(
            _MODULE,
            "close_finalized",
            channel=channel_id,
            broadcaster=close.broadcaster,
            stale=close.stale,
            payouts=outcome.payouts,
        )
        if close.stale:
            logger.warning("%s: stale state %d by %s went unpunished", channel_id, close.state_number, close.broadcaster)
        return outcome

    def withdraw_without_close(self, channel_id: str, party: str, amount: int) -> Commitment:
        """
        Move *amount* from *party*'s balance to L1, keeping the channel open.

        The counterparty must be online to co-sign; *party* pays the fee of
        the single withdrawal transaction.

        Raises:
            CounterpartyRefusedError: If the counterparty is offline.
            InsufficientBalanceError: If *party* holds less than *amount*.
        """
        channel = self.channel(channel_id)
        counterparty = channel.counterparty(party)
        if self.chain.balance(party) < self.config.close_fee:
            raise InsufficientFundsError(f"{party} cannot pay the withdrawal fee")
        commitment = channel.withdraw(party, amount, counterparty_assents=self.is_online(counterparty))
        tx = self.chain.make_tx(
            party,
            self.escrow(channel_id),
            0,
            kind=TxKind.CHANNEL_WITHDRAW,
            size_bytes=self.config.close_tx_bytes,
            fee=self.config.close_fee,
            memo=channel_id,
        )
        self.chain.submit_tx(tx)
        self.chain.settle(self.escrow(channel_id), party, amount, reason=f"{channel_id} withdrawal")
        self.graph.edges[channel.party_a, channel.party_b, channel_id]["capacity"] = channel.capacity
        self.events.emit(
            _MODULE, "withdraw", channel=channel_id, party=party, amount=amount, capacity=channel.capacity, tx=tx.id
        )
        return commitment

    # -- watchers -----------------------------------------------------------

    def register_monitor(self, channel_id: str, party: str, reward: int, name: Optional[str] = None) -> Monitor:
        """
        Register a monitoring service acting for *party* while it is offline.

        Raises:
            NotEndpointError: If *party* is not an endpoint of the channel.
        """
        channel = self.channel(channel_id)
        if party not in channel.parties:
            raise NotEndpointError(f"{party} is not an endpoint of {channel_id}")
        if reward < 0:
            raise ValueError("monitor reward must be non-negative")
        watchers = self.monitors.setdefault(channel_id, [])
        monitor = Monitor(name or f"monitor-{channel_id}-{len(watchers)}", channel_id, party, reward)
        watchers.append(monitor)
        self.keys.register(monitor.name)
        self.events.emit(_MODULE, "monitor_registered", channel=channel_id, party=party, monitor=monitor.name, reward=reward)
        return monitor

    def _react_to_close(self, channel: Channel) -> Optional[CloseOutcome]:
        if not channel.penalty_window_open(self.chain.height):
            return None
        victim = channel.pending_close.counterparty
        if self.is_online(victim):
            return self.penalize_cheat(channel.id, victim)
        for monitor in self.monitors.get(channel.id, []):
            if monitor.party == victim:
                return self.penalize_cheat(channel.id, monitor.name)
        return None

    def _on_block(self, block) -> None:
        for channel in self.channels.values():
            close = channel.pending_close
            if channel.status == ChannelStatus.CLOSING and block.height >= close.unlock_height:
                self.finalize_close(channel.id)

    # -- invoices and routing -----------------------------------------------

    def create_invoice(self, payee: str, amount: int, expiry_s: Optional[Fraction] = None) -> Invoice:
        """
        Draw a fresh payment secret for *payee* and return its invoice.

        Raises:
            ValueError: If *amount* is not positive.
        """
        if amount <= 0:
            raise ValueError("invoice amount must be positive")
        node = self.add_node(payee)
        secret = self.keys.fresh_secret()
        payment_hash = sha256(secret)
        node.preimages[payment_hash] = secret
        expires_at = self.chain.now + Fraction(expiry_s) if expiry_s is not None else None
        invoice = Invoice(payee, amount, payment_hash, expires_at)
        self._invoices[payment_hash] = invoice
        self.events.emit(_MODULE, "invoice", payee=payee, amount=amount, payment_hash=payment_hash)
        return invoice

    def public_graph(self) -> nx.MultiGraph:
        """Endpoints, capacities and fee policies; never balances."""
        view = nx.MultiGraph()
        view.add_nodes_from(self.graph.nodes)
        for u, v, key, data in self.graph.edges(keys=True, data=True):
            view.add_edge(u, v, key=key, capacity=data["capacity"], fee_policy=dict(data["policies"]))
        return view

    def channel_balance(self, channel_id: str, requester: str) -> Dict[str, int]:
        """
        Balances of a channel, readable only by its endpoints.

        Raises:
            AccessDeniedError: If *requester* is not an endpoint.
        """
        channel = self.channel(channel_id)
        if requester not in channel.parties:
            raise AccessDeniedError(f"{requester} may not read the balances of {channel_id}")
        return {channel.party_a: channel.balance_a, channel.party_b: channel.balance_b}

    def _price(self, nodes: Sequence[str], channel_ids: Sequence[str], amount: int) -> Route:
        amounts = [0] * len(channel_ids)
        fees = [0] * (len(channel_ids) - 1)
        amounts[-1] = amount
        for i in range(len(channel_ids) - 1, 0, -1):
            policy = self.channels[channel_ids[i]].fee_policy(nodes[i])
            fees[i - 1] = policy.fee(amounts[i])
            amounts[i - 1] = amounts[i] + fees[i - 1]
        return Route(tuple(nodes), tuple(channel_ids), tuple(amounts), tuple(fees))

    def iter_routes(self, src: str, dst: str, amount: int) -> Iterator[Route]:
        """
        Capacity-feasible routes from cheapest to most expensive.

        Ties break on fewer hops, then node ids, then channel ids.
        """
        if src == dst:
            raise ValueError("source and destination must differ")
        if amount <= 0:
            raise ValueError("amount must be positive")
        if src not in self.graph or dst not in self.graph:
            return iter(())
        routes = []
        for edge_path in nx.all_simple_edge_paths(self.graph, src, dst, cutoff=self.config.max_hops):
            nodes = [src]
            for u, v, _ in edge_path:
                nodes.append(v if u == nodes[-1] else u)
            route = self._price(nodes, [key for _, _, key in edge_path], amount)
            if all(self.channels[cid].capacity >= amt for cid, amt in zip(route.channel_ids, route.amounts)):
                routes.append(route)
        routes.sort(key=Route.sort_key)
        return iter(routes)

    def find_route(self, src: str, dst: str, amount: int, exclude: Iterable[Route] = ()) -> Route:
        """
        Cheapest capacity-feasible route not in *exclude*.

        Raises:
            RouteNotFoundError: If no such route exists.
        """
        excluded = {r.channel_ids for r in exclude}
        for route in self.iter_routes(src, dst, amount):
            if route.channel_ids not in excluded:
                return route
        raise RouteNotFoundError(f"no route from {src} to {dst} can carry {amount}")

    def build_route(self, nodes: Sequence[str], amount: int, channel_ids: Optional[Sequence[str]] = None) -> Route:
        """Price an explicit path; parallel channels default to the lowest id."""
        if len(nodes) < 2:
            raise ValueError("a route needs at least two nodes")
        if channel_ids is None:
            channel_ids = []
            for u, v in zip(nodes, nodes[1:]):
                keys = sorted(self.graph.get_edge_data(u, v, default={}))
                if not keys:
                    raise RouteNotFoundError(f"no open channel between {u} and {v}")
                channel_ids.append(keys[0])
        return self._price(nodes, channel_ids, amount)

    def expiries(self, route: Route) -> List[int]:
        """HTLC expiry heights per channel, strictly decreasing toward the payee."""
        height = self.chain.height
        delta = self.config.htlc_delta_blocks
        return [height + delta * (route.hops - i) for i in range(route.hops)]

    def onion_for(self, route: Route) -> OnionPacket:
        return build_onion(route.nodes, route.amounts, self.expiries(route), self.keys)

    def route_payment(self, route: Route, invoice: Invoice) -> PaymentResult:
        """
        Execute one attempt: lock HTLCs hop by hop, then settle backwards.

        A hop that cannot lock its HTLC fails the attempt; every HTLC already
        added is failed back and no balance changes persist.

        Raises:
            InvoiceError: If the invoice is expired, paid, or does not match
                the route's payee and amount.
        """
        self._check_invoice(route, invoice)
        expiries = self.expiries(route)
        added = []
        for i, (channel_id, amount) in enumerate(zip(route.channel_ids, route.amounts)):
            channel = self.channels[channel_id]
            try:
                htlc = channel.add_htlc(route.nodes[i], amount, invoice.payment_hash, expiries[i])
            except (InsufficientBalanceError, ChannelNotOpenError) as e:
                for done_channel, done_htlc in reversed(added):
                    done_channel.fail_htlc(done_htlc.htlc_id)
                self.events.emit(
                    _MODULE,
                    "payment_failed",
                    payment_hash=invoice.payment_hash,
                    route=list(route.nodes),
                    failed_at_hop=i,
                )
                logger.debug("Payment attempt failed at hop %d: %s", i, e)
                return PaymentResult(False, route, failed_at_hop=i, reason="temporary channel failure")
            added.append((channel, htlc))

        preimage = self.nodes[invoice.payee].preimages[invoice.payment_hash]
        for channel, htlc in reversed(added):
            channel.settle_htlc(htlc.htlc_id, preimage, self.chain.height)
        self._paid.add(invoice.payment_hash)
        self.events.emit(
            _MODULE,
            "payment_settled",
            payment_hash=invoice.payment_hash,
            route=list(route.nodes),
            channels=list(route.channel_ids),
            amount=invoice.amount,
            fees=list(route.fees),
        )
        return PaymentResult(True, route)

    def _check_invoice(self, route: Route, invoice: Invoice) -> None:
        if invoice.payment_hash not in self._invoices:
            raise InvoiceError("invoice was not issued on this network")
        if invoice.payment_hash in self._paid:
            raise InvoiceError("invoice already paid")
        if invoice.expires_at is not None and self.chain.now > invoice.expires_at:
            raise InvoiceError(f"invoice expired at {invoice.expires_at}")
        if route.nodes[-1] != invoice.payee or route.amount != invoice.amount:
            raise InvoiceError("route does not deliver the invoiced amount to the payee")

    def pay(self, src: str, invoice: Invoice, max_attempts: Optional[int] = None) -> PaymentResult:
        """
        Try routes in cost order until one settles.

        Raises:
            RouteNotFoundError: If no capacity-feasible route exists at all.
        """
        attempts = 0
        last = None
        for route in self.iter_routes(src, invoice.payee, invoice.amount):
            attempts += 1
            result = self.route_payment(route, invoice)
            result.attempts = attempts
            if result.success:
                return result
            last = result
            logger.warning("Retrying %s -> %s after failure at hop %s", src, invoice.payee, result.failed_at_hop)
            if max_attempts is not None and attempts >= max_attempts:
                break
        if last is None:
            raise RouteNotFoundError(f"no route from {src} to {invoice.payee} can carry {invoice.amount}")
        return last

    def pay_in_parts(self, src: str, payee: str, amount: int, parts: int) -> List[PaymentResult]:
        """Split *amount* into *parts* invoices routed independently."""
        if parts <= 0 or amount < parts:
            raise ValueError("parts must be positive and no larger than amount")
        base, extra = divmod(amount, parts)
        results = []
        for i in range(parts):
            invoice = self.create_invoice(payee, base + (1 if i < extra else 0))
            try:
                results.append(self.pay(src, invoice))
            except RouteNotFoundError as e:
                results.append(PaymentResult(False, None, reason=str(e), attempts=0))
        return results

    # -- statistics and invariants ------------------------------------------

    def network_stats(self, hub_threshold: int = 3) -> Dict[str, object]:
        return network_stats(self.public_graph(), hub_threshold)

    def assert_invariants(self) -> None:
        """Raise :class:`InvariantViolation` if any channel or escrow is off."""
        for channel in self.channels.values():
            escrow = self.chain.balance(self.escrow(channel.id))
            if channel.status == ChannelStatus.OPEN:
                channel.check_conservation()
                expected = channel.capacity
            elif channel.status == ChannelStatus.CLOSING:
                expected = channel.pending_close.locked
            else:
                expected = 0
            if escrow != expected:
                raise InvariantViolation(f"{channel.id}: escrow holds {escrow}, expected {expected}")
        self.chain.assert_invariants()


# ---------------------------------------------------------------------------
# Topology helpers
# ---------------------------------------------------------------------------


def network_stats(graph: nx.Graph, hub_threshold: int = 3) -> Dict[str, object]:
    """
    Degree histogram and hubs of *graph*.

    Returns:
        ``{"degree_histogram": {degree: count}, "degrees": {node: degree},
        "hubs": [...]}`` where hubs have degree ``>= hub_threshold``.

    Example:
        >>> stats = network_stats(nx.star_graph(5), hub_threshold=3)
        >>> stats["degree_histogram"], stats["hubs"]
        ({1: 5, 5: 1}, [0])
    """
    degrees = {node: deg for node, deg in graph.degree()}
    histogram = Counter(degrees.values())
    return {
        "degree_histogram": {d: histogram[d] for d in sorted(histogram)},
        "degrees": {node: degrees[node] for node in sorted(degrees, key=str)},
        "hubs": sorted((n for n, d in degrees.items() if d >= hub_threshold), key=str),
    }


def hub_and_spoke(
    network: ChannelNetwork,
    hub: str,
    spokes: Sequence[str],
    spoke_funding: int,
    hub_funding: int = 0,
    hub_policy: Optional[FeePolicy] = None,
) -> List[Channel]:
    """Open one channel from every spoke to *hub* (spokes fund them)."""
    return [
        network.open_channel(spoke, hub, spoke_funding, hub_funding, policy_b=hub_policy)
        for spoke in spokes
    ]


def _from_graph(network: ChannelNetwork, graph: nx.Graph, funding: int, rng: np.random.Generator) -> ChannelNetwork:
    names = {n: f"n{n:03d}" for n in graph.nodes}
    for node in sorted(graph.nodes):
        network.add_node(names[node])
    per_node = Counter()
    for u, v in graph.edges:
        per_node[u] += 1
        per_node[v] += 1
    for node, count in sorted(per_node.items()):
        network.chain.fund(names[node], count * (funding + network.config.open_fee))
    for u, v in sorted(graph.edges):
        policy_u = FeePolicy(int(rng.integers(0, 3)), int(rng.integers(0, 1000)))
        policy_v = FeePolicy(int(rng.integers(0, 3)), int(rng.integers(0, 1000)))
        network.open_channel(names[u], names[v], funding, funding, policy_a=policy_u, policy_b=policy_v)
    return network


def random_network(network: ChannelNetwork, n: int, p: float, funding: int, seed: int = 42) -> ChannelNetwork:
    """Populate *network* with an Erdős–Rényi topology, funding every node on L1."""
    return _from_graph(network, nx.gnp_random_graph(n, p, seed=seed), funding, np.random.default_rng(seed))


def scale_free_network(network: ChannelNetwork, n: int, m: int, funding: int, seed: int = 42) -> ChannelNetwork:
    """Populate *network* with a Barabási–Albert topology (preferential attachment)."""
    return _from_graph(network, nx.barabasi_albert_graph(n, m, seed=seed), funding, np.random.default_rng(seed))
