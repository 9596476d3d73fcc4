"""
Tests for payment channels: state updates, closes, penalties, monitors and routing.
"""

import numpy as np
import pytest

from l2sim.chain import KeyRing, L1Chain
from l2sim.chain._hashing import sha256
from l2sim.channels import (
    Channel,
    ChannelConfig,
    ChannelNetwork,
    ChannelStatus,
    FeePolicy,
    hop_view,
    hub_and_spoke,
    network_stats,
    route_fee,
    scale_free_network,
)
from l2sim.errors import (
    AccessDeniedError,
    ChannelNotOpenError,
    CounterpartyRefusedError,
    HtlcExpiredError,
    InsufficientBalanceError,
    InsufficientFundsError,
    InvoiceError,
    NotAHopError,
    NotEndpointError,
    NotStaleError,
    PreimageMismatchError,
    RouteNotFoundError,
    TimelockActiveError,
    UnknownStateError,
    WindowExpiredError,
)

from tests.helpers import replay_channel

START = 1_000_000


def _cheat_setup(network):
    """alice/bob channel 5000/3000 where alice has since paid bob 2000."""
    channel = network.open_channel("alice", "bob", 5000, 3000)
    network.direct_pay(channel.id, "alice", 2000)
    return channel


class TestFeePolicy:
    """Tests for forwarding fees."""

    def test_base_plus_proportional(self):
        """Test base fee plus floor of parts per million."""
        policy = FeePolicy(base_fee=1, proportional_ppm=10_000)
        assert policy.fee(1000) == 11
        assert route_fee(policy, 99) == 1
        assert FeePolicy().fee(10**9) == 0

    def test_negative_rejected(self):
        """Test that negative components and amounts raise."""
        with pytest.raises(ValueError):
            FeePolicy(base_fee=-1)
        with pytest.raises(ValueError):
            FeePolicy().fee(-5)


class TestChannel:
    """Tests for the two-party state machine without an L1."""

    def test_direct_pay_commits_new_state(self):
        """Test that a payment shifts balance and bumps the state number."""
        channel = Channel("ch", "A", "B", 3, 3, KeyRing())
        channel.direct_pay("B", 2)
        assert (channel.balance_a, channel.balance_b, channel.state_number) == (5, 1, 1)
        assert channel.commitment(0).balance_a == 3

    def test_superseded_state_reveals_secret(self):
        """Test that revoking a state discloses both secrets to the counterparties."""
        channel = Channel("ch", "A", "B", 3, 3, KeyRing())
        assert channel.revealed_secret("B", 0) is None
        channel.direct_pay("A", 1)
        secret = channel.revealed_secret("B", 0)
        assert secret is not None
        assert sha256(secret) == channel.revocation_store[0]["A"].hash
        assert channel.revealed_secret("B", 1) is None

    def test_overdraw_rejected(self):
        """Test that a payer cannot spend more than its balance."""
        channel = Channel("ch", "A", "B", 3, 3, KeyRing())
        with pytest.raises(InsufficientBalanceError):
            channel.direct_pay("A", 4)
        with pytest.raises(NotEndpointError):
            channel.direct_pay("C", 1)

    def test_construction_checks(self):
        """Test that bad funding or identical parties are refused."""
        with pytest.raises(ValueError):
            Channel("ch", "A", "A", 1, 1, KeyRing())
        with pytest.raises(ValueError):
            Channel("ch", "A", "B", 0, 0, KeyRing())

    def test_htlc_settle_and_fail(self):
        """Test HTLC locking, redemption and refund."""
        keys = KeyRing(np.random.default_rng(1))
        channel = Channel("ch", "A", "B", 10, 0, keys)
        preimage = keys.fresh_secret()
        htlc = channel.add_htlc("A", 4, sha256(preimage), expiry_height=100)
        assert channel.balance_a == 6
        channel.check_conservation()

        with pytest.raises(PreimageMismatchError):
            channel.settle_htlc(htlc.htlc_id, b"wrong")
        with pytest.raises(HtlcExpiredError):
            channel.settle_htlc(htlc.htlc_id, preimage, current_height=100)
        channel.settle_htlc(htlc.htlc_id, preimage, current_height=99)
        assert (channel.balance_a, channel.balance_b) == (6, 4)

        second = channel.add_htlc("B", 3, sha256(b"x"), expiry_height=5)
        assert channel.latest().payouts("A", "B") == {"A": 6, "B": 4}
        assert channel.expire_htlcs(5) == [second]
        assert channel.balance_b == 4
        assert channel.pending_htlcs == []


class TestChannelLifecycle:
    """Tests for funding and closing over the L1."""

    def test_open_moves_funds_to_escrow(self, btc_chain):
        """Test that opening pays the funding fee and locks both contributions."""
        network = ChannelNetwork(btc_chain, ChannelConfig(), seed=1)
        channel = network.open_channel("alice", "bob", 5000, 3000)
        assert network.config.open_fee == 23_500
        assert btc_chain.balance("alice") == START - 5000 - 23_500
        assert btc_chain.balance("bob") == START - 3000
        assert btc_chain.balance(network.escrow(channel.id)) == 8000
        assert channel.id == "ch-00000"
        btc_chain.produce_block()
        network.assert_invariants()

    def test_open_requires_l1_funds(self, network):
        """Test that an underfunded opener is refused."""
        with pytest.raises(InsufficientFundsError):
            network.open_channel("alice", "bob", 2 * START)

    def test_cooperative_close(self, network, btc_chain):
        """Test that both parties receive their latest balances at once."""
        channel = _cheat_setup(network)
        network.close_cooperative(channel.id)
        assert channel.status == ChannelStatus.CLOSED
        assert btc_chain.balance("alice") == START - 2000
        assert btc_chain.balance("bob") == START + 2000
        with pytest.raises(ChannelNotOpenError):
            network.direct_pay(channel.id, "alice", 1)
        network.assert_invariants()

    def test_honest_unilateral_close_waits_for_timelock(self, network, btc_chain):
        """Test that the broadcaster's share unlocks after the timelock."""
        channel = _cheat_setup(network)
        pending = network.close_unilateral(channel.id, "alice")
        assert not pending.stale
        assert pending.unlock_height == 144
        assert btc_chain.balance("bob") == START + 2000
        assert btc_chain.balance("alice") == START - 5000

        with pytest.raises(TimelockActiveError):
            network.finalize_close(channel.id)
        btc_chain.advance_blocks(143)
        assert channel.status == ChannelStatus.CLOSING
        network.assert_invariants()
        btc_chain.advance_blocks(1)
        assert channel.status == ChannelStatus.CLOSED
        assert channel.outcome.kind == "unilateral"
        assert btc_chain.balance("alice") == START - 2000

    def test_countersigned_close(self, network, btc_chain):
        """Test that an honest close can be accepted early by the counterparty."""
        channel = _cheat_setup(network)
        network.close_unilateral(channel.id, "bob")
        outcome = network.countersign_close(channel.id)
        assert outcome.kind == "countersigned"
        assert btc_chain.balance("bob") == START + 2000
        assert btc_chain.balance("alice") == START - 2000
        network.assert_invariants()

    def test_unknown_state(self, network):
        """Test that a state that was never signed cannot be broadcast."""
        channel = _cheat_setup(network)
        with pytest.raises(UnknownStateError):
            network.close_unilateral(channel.id, "alice", state_number=7)

    def test_withdraw_without_close(self, network, btc_chain):
        """Test partial withdrawal and invalidation of older states."""
        channel = _cheat_setup(network)
        network.withdraw_without_close(channel.id, "bob", 1000)
        assert channel.capacity == 7000
        assert channel.is_open
        assert btc_chain.balance("bob") == START - 3000 + 1000
        network.assert_invariants()
        with pytest.raises(UnknownStateError):
            network.close_unilateral(channel.id, "alice", state_number=0)

    def test_withdraw_needs_counterparty(self, network):
        """Test that an offline counterparty blocks a withdrawal."""
        channel = _cheat_setup(network)
        network.set_online("alice", False)
        with pytest.raises(CounterpartyRefusedError):
            network.withdraw_without_close(channel.id, "bob", 1000)
        assert channel.capacity == 8000

    def test_balances_are_private(self, network):
        """Test that only endpoints may read a channel's balances."""
        channel = _cheat_setup(network)
        assert network.channel_balance(channel.id, "bob") == {"alice": 3000, "bob": 5000}
        with pytest.raises(AccessDeniedError):
            network.channel_balance(channel.id, "carol")
        assert "balance_a" not in str(network.public_graph().edges(data=True))


class TestPenalty:
    """Tests for punishing stale broadcasts."""

    def test_online_victim_penalizes_immediately(self, network, btc_chain):
        """Test that the victim claims the whole capacity."""
        channel = _cheat_setup(network)
        pending = network.close_unilateral(channel.id, "alice", state_number=0)
        assert pending.stale
        assert channel.status == ChannelStatus.CLOSED
        assert channel.outcome.penalized
        assert channel.outcome.payouts == {"alice": 0, "bob": 8000}
        assert btc_chain.balance("alice") == START - 5000
        assert btc_chain.balance("bob") == START + 5000
        network.assert_invariants()

    def test_monitor_acts_for_offline_victim(self, network, btc_chain):
        """Test that a registered monitor penalizes and keeps its reward."""
        channel = _cheat_setup(network)
        monitor = network.register_monitor(channel.id, "bob", reward=100, name="tower")
        network.set_online("bob", False)
        network.close_unilateral(channel.id, "alice", state_number=0)
        assert channel.outcome.claimant == "tower"
        assert channel.outcome.reward == 100
        assert monitor.interventions == 1
        assert btc_chain.balance("tower") == 100
        assert btc_chain.balance("bob") == START + 5000 - 100
        network.assert_invariants()

    def test_returning_victim_penalizes_within_window(self, network, btc_chain):
        """Test that a victim coming online before the unlock height still wins."""
        channel = _cheat_setup(network)
        network.set_online("bob", False)
        network.close_unilateral(channel.id, "alice", state_number=0)
        assert channel.status == ChannelStatus.CLOSING
        btc_chain.advance_blocks(100)
        network.set_online("bob", True)
        assert channel.outcome.penalized
        assert btc_chain.balance("bob") == START + 5000

    def test_unwatched_cheat_succeeds_after_window(self, network, btc_chain):
        """Test that nobody watching lets the stale state finalize."""
        channel = _cheat_setup(network)
        network.set_online("bob", False)
        network.close_unilateral(channel.id, "alice", state_number=0)
        btc_chain.advance_blocks(144)
        assert channel.status == ChannelStatus.CLOSED
        assert not channel.outcome.penalized
        assert btc_chain.balance("alice") == START
        with pytest.raises(WindowExpiredError):
            network.penalize_cheat(channel.id, "bob")

    def test_latest_state_cannot_be_penalized(self, network):
        """Test that an honest broadcast is not punishable."""
        channel = _cheat_setup(network)
        network.close_unilateral(channel.id, "alice")
        with pytest.raises(NotStaleError):
            network.penalize_cheat(channel.id, "bob")

    def test_stranger_cannot_claim(self, network):
        """Test that only the victim or its monitor may penalize."""
        channel = _cheat_setup(network)
        network.set_online("bob", False)
        network.close_unilateral(channel.id, "alice", state_number=0)
        with pytest.raises(NotEndpointError):
            network.penalize_cheat(channel.id, "carol")
        with pytest.raises(NotEndpointError):
            network.register_monitor(channel.id, "carol", reward=1)

    @pytest.mark.property
    def test_penalty_over_random_histories(self, bitcoin):
        """Test that any stale broadcast against an online victim forfeits everything."""
        rng = np.random.default_rng(2021)
        for trial in range(1000):
            chain = L1Chain(bitcoin)
            chain.fund("a", 10_000)
            chain.fund("b", 10_000)
            network = ChannelNetwork(chain, ChannelConfig(feerate=0), seed=trial)
            fund_a, fund_b = (int(x) for x in rng.integers(1, 5000, size=2))
            channel = network.open_channel("a", "b", fund_a, fund_b)

            payments = []
            for _ in range(int(rng.integers(1, 12))):
                payer_is_a = bool(rng.integers(0, 2))
                payer = "a" if payer_is_a else "b"
                amount = int(rng.integers(0, channel.balance_of(payer) + 1))
                network.direct_pay(channel.id, payer, amount)
                payments.append((payer_is_a, amount))
            assert (channel.balance_a, channel.balance_b) == replay_channel(fund_a, fund_b, payments)

            cheater = "a" if rng.integers(0, 2) else "b"
            victim = "b" if cheater == "a" else "a"
            stale = int(rng.integers(0, channel.state_number))
            network.close_unilateral(channel.id, cheater, state_number=stale)

            assert channel.outcome is not None and channel.outcome.penalized
            assert chain.balance(victim) == 10_000 + (fund_a if cheater == "a" else fund_b)
            assert chain.balance(cheater) == 10_000 - (fund_a if cheater == "a" else fund_b)
            network.assert_invariants()


class TestRouting:
    """Tests for multi-hop payments."""

    def test_fee_accrues_to_intermediary(self, network):
        """Test amounts and fees along a two-hop route."""
        ab = network.open_channel("alice", "bob", 5000)
        bc = network.open_channel("bob", "carol", 5000, policy_a=FeePolicy(1, 10_000))
        invoice = network.create_invoice("carol", 1000)
        result = network.pay("alice", invoice)
        assert result.success
        assert result.route.amounts == (1011, 1000)
        assert result.fee_paid == 11
        assert (ab.balance_a, ab.balance_b) == (3989, 1011)
        assert (bc.balance_a, bc.balance_b) == (4000, 1000)
        network.assert_invariants()

    def test_hidden_balance_failure_then_retry(self, network):
        """Test that a failing hop is reported and an alternative route is tried."""
        network.open_channel("alice", "bob", 5000)
        network.open_channel("carol", "bob", 5000)
        network.open_channel("alice", "dave", 5000)
        network.open_channel("dave", "carol", 5000)
        invoice = network.create_invoice("carol", 1000)
        result = network.pay("alice", invoice)
        assert result.success
        assert result.attempts == 2
        assert result.route.nodes == ("alice", "dave", "carol")

        first = network.channel("ch-00000")
        assert (first.balance_a, first.balance_b) == (5000, 0)
        assert first.pending_htlcs == []

    def test_single_failing_route(self, network):
        """Test that the sender learns only the failing hop index."""
        network.open_channel("alice", "bob", 5000)
        network.open_channel("carol", "bob", 5000)
        result = network.pay("alice", network.create_invoice("carol", 1000))
        assert not result.success
        assert result.failed_at_hop == 1

    def test_no_route(self, network):
        """Test that insufficient capacity raises RouteNotFoundError."""
        network.open_channel("alice", "bob", 500)
        with pytest.raises(RouteNotFoundError):
            network.pay("alice", network.create_invoice("bob", 1000))
        with pytest.raises(RouteNotFoundError):
            network.find_route("alice", "dave", 1)

    def test_invoice_cannot_be_paid_twice(self, network):
        """Test single use of invoices."""
        network.open_channel("alice", "bob", 5000)
        invoice = network.create_invoice("bob", 100)
        assert network.pay("alice", invoice).success
        with pytest.raises(InvoiceError):
            network.pay("alice", invoice)

    def test_expired_invoice(self, network, btc_chain):
        """Test that an invoice past its expiry is refused."""
        network.open_channel("alice", "bob", 5000)
        invoice = network.create_invoice("bob", 100, expiry_s=60)
        btc_chain.advance(600)
        with pytest.raises(InvoiceError):
            network.pay("alice", invoice)
        with pytest.raises(ValueError):
            network.create_invoice("bob", 0)

    def test_expiries_decrease_toward_payee(self, network):
        """Test HTLC expiry staggering."""
        network.open_channel("alice", "bob", 5000)
        network.open_channel("bob", "carol", 5000)
        route = network.build_route(["alice", "bob", "carol"], 10)
        assert network.expiries(route) == [288, 144]

    def test_pay_in_parts(self, network):
        """Test splitting one payment into several invoices."""
        network.open_channel("alice", "bob", 5000)
        results = network.pay_in_parts("alice", "bob", 1001, 2)
        assert [r.route.amount for r in results] == [501, 500]
        assert all(r.success for r in results)


class TestRoutingExample:
    """The two-channel routing example: A5/B2 and B3/C1."""

    def test_pay_two_then_five(self, network):
        """Test that 2 routes through bob and 5 is refused without touching state."""
        ab = network.open_channel("alice", "bob", 5, 2)
        bc = network.open_channel("bob", "carol", 3, 1)

        result = network.pay("alice", network.create_invoice("carol", 2))
        assert result.success
        assert result.route.nodes == ("alice", "bob", "carol")
        assert (ab.balance_a, ab.balance_b) == (3, 4)
        assert (bc.balance_a, bc.balance_b) == (1, 3)

        def snapshot():
            return [(ch.balance_a, ch.balance_b, ch.state_number, len(ch.pending_htlcs)) for ch in (ab, bc)]

        before = snapshot()
        with pytest.raises(RouteNotFoundError):
            network.pay("alice", network.create_invoice("carol", 5))
        assert snapshot() == before
        network.assert_invariants()


class TestOnion:
    """Tests for per-hop routing visibility."""

    def test_each_hop_sees_only_neighbours(self, network):
        """Test predecessor and successor views."""
        network.open_channel("alice", "bob", 5000)
        network.open_channel("bob", "carol", 5000, policy_a=FeePolicy(5, 0))
        route = network.find_route("alice", "carol", 100)
        packet = network.onion_for(route)
        assert len(packet) == 2

        bob = hop_view(packet, "bob", network.keys)
        assert (bob["pred"], bob["succ"], bob["amount"]) == ("alice", "carol", 100)
        carol = hop_view(packet, "carol", network.keys)
        assert (carol["pred"], carol["succ"], carol["amount"]) == ("bob", None, 100)

        with pytest.raises(NotAHopError):
            hop_view(packet, "dave", network.keys)


class TestTopology:
    """Tests for generated topologies and degree statistics."""

    def test_hub_and_spoke_stats(self, network):
        """Test that the hub is detected by degree."""
        hub_and_spoke(network, "carol", ["alice", "bob", "dave"], 1000)
        stats = network.network_stats()
        assert stats["hubs"] == ["carol"]
        assert stats["degree_histogram"] == {1: 3, 3: 1}

    def test_scale_free_is_deterministic(self, bitcoin):
        """Test that the same seed gives the same network."""

        def build():
            network = ChannelNetwork(L1Chain(bitcoin), ChannelConfig(feerate=0), seed=4)
            return scale_free_network(network, 20, 2, 1000, seed=9)

        first, second = build(), build()
        assert len(first.channels) == 36
        assert first.network_stats() == second.network_stats()
        first.assert_invariants()

    def test_stats_of_plain_graph(self):
        """Test the module-level helper on a networkx graph."""
        import networkx as nx

        stats = network_stats(nx.path_graph(4), hub_threshold=2)
        assert stats["hubs"] == [1, 2]
