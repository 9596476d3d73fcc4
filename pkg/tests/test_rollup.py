"""
Tests for l2sim.rollup: throughput, codec, batches, the contract's challenge
game and the operator.
"""

from fractions import Fraction

import numpy as np
import pytest

from l2sim.chain import WEI_PER_ETH, L1Chain, load_chain_params
from l2sim.chain._hashing import EMPTY_ROOT
from l2sim.errors import (
    EmptyBatchError,
    EmptyResultsError,
    FeePayerInsolventError,
    InsufficientRollupBalanceError,
    InvalidParamsError,
    InvalidProofError,
    InvalidTxError,
    MissingProofError,
    NoSuchBatchError,
    NotStakedError,
    ProofExceedsGasLimitError,
    StaleRootError,
    TooManyAuthorsError,
    UntrustedProverError,
    WindowClosedError,
)
from l2sim.rollup import (
    AccountState,
    BatchStatus,
    Prover,
    RollupContract,
    RollupOperator,
    RollupParams,
    RollupTx,
    apply_sequence,
    batch_fee_split,
    build_batch,
    decode_batch,
    encode_batch,
    is_representable,
    mean_onchain_cost_per_tx,
    prove_batch,
    reconstruct_state,
    rollup_throughput,
)
from l2sim.rollup.codec import WITHDRAW_INDEX, pack_decimal, unpack_decimal
from tests.helpers import replay_accounts

ETH = WEI_PER_ETH
START = 20 * ETH
WINDOW = 130


def _rollup_with(chain, mode="zk", fraud_batches=(), **changes):
    """Staked ``(contract, operator)`` with custom rollup parameters."""
    contract = RollupContract(chain, RollupParams(mode=mode, **changes))
    contract.stake("operator")
    prover = contract.setup.authorize("operator") if mode == "zk" else None
    return contract, RollupOperator(contract, "operator", prover, fraud_batches)


def _non_zero(balances):
    return {k: v for k, v in balances.items() if v}


# ---------------------------------------------------------------------------
# Parameters and throughput
# ---------------------------------------------------------------------------


class TestRollupThroughput:
    """Tests for rollup_throughput and RollupParams."""

    def test_zk_throughput(self, ethereum):
        """A zk rollup reaches about 4,607 TPS on 2021 Ethereum."""
        result = rollup_throughput(ethereum, RollupParams())
        assert result["block_bytes"] == Fraction(718750)
        assert round(float(result["tps"])) == 4607

    def test_optimistic_throughput(self, ethereum):
        """Optimistic records are six times larger and need no proof gas."""
        result = rollup_throughput(ethereum, RollupParams(mode="optimistic"))
        assert result["block_bytes"] == Fraction(781250)
        assert round(float(result["tps"]), 1) == 834.7

    def test_proof_larger_than_block(self, ethereum):
        """A proof that fills the block leaves no room for data."""
        with pytest.raises(ProofExceedsGasLimitError):
            rollup_throughput(ethereum, RollupParams(proof_gas=ethereum.gas_limit_per_block))

    def test_mode_defaults(self):
        """Record size, proof gas and withdrawal latency follow the mode."""
        zk = RollupParams()
        optimistic = RollupParams(mode="optimistic")
        assert (zk.tx_size_bytes, zk.proof_gas) == (12, 1_000_000)
        assert (optimistic.tx_size_bytes, optimistic.proof_gas) == (72, 0)
        assert zk.withdrawal_latency_s == 600
        assert optimistic.withdrawal_latency_s == 7 * 86400

    def test_deposit_fee(self):
        """A deposit costs 62,500 gas at 27 Gwei."""
        assert RollupParams().deposit_fee == 62_500 * 27 * 10**9

    @pytest.mark.parametrize(
        "changes",
        [
            {"tx_size_bytes": 0},
            {"mode": "optimistic", "tx_size_bytes": 8},
            {"proof_gas": -1},
            {"challenge_period_s": 0},
            {"max_authors": 0},
        ],
    )
    def test_invalid_params(self, changes):
        """Out-of-range parameters are rejected at construction."""
        with pytest.raises(InvalidParamsError):
            RollupParams(**changes)


class TestFeeSplit:
    """Tests for the per-transaction share of batch costs."""

    def test_split_with_remainder(self):
        """The remainder stays with the publisher."""
        assert batch_fee_split(1_000, 3) == (333, 1)
        assert batch_fee_split(900, 3) == (300, 0)

    def test_split_of_empty_batch(self):
        """Splitting over zero transactions is an error."""
        with pytest.raises(EmptyBatchError):
            batch_fee_split(1_000, 0)

    def test_mean_cost_skips_empty_batches(self):
        """Batches without transactions do not enter the mean."""
        assert mean_onchain_cost_per_tx([(100, 2), (300, 3), (50, 0)]) == Fraction(75)

    def test_mean_cost_without_data(self):
        """A ledger of empty batches has no mean."""
        with pytest.raises(EmptyResultsError):
            mean_onchain_cost_per_tx([(50, 0)])


# ---------------------------------------------------------------------------
# Codec
# ---------------------------------------------------------------------------


class TestCodec:
    """Tests for the compressed calldata encoding."""

    REGISTRY = ["operator", "alice", "bob"]

    def _txs(self):
        return [
            RollupTx.transfer("alice", "bob", 10**17, 10_840_000_000_000),
            RollupTx.transfer("bob", "alice", 123_456_789),
            RollupTx.withdraw("alice", 5 * 10**16, 2_900_000_000_000_000),
        ]

    def test_decimal_packing(self):
        """The transfer fee packs as 1084 * 10**10."""
        packed = pack_decimal(10_840_000_000_000, 11)
        assert (packed >> 5, packed & 31) == (1084, 10)
        assert unpack_decimal(packed) == 10_840_000_000_000

    def test_representability(self):
        """Values need an exact mantissa that fits its field."""
        assert is_representable(123_456_789)
        assert is_representable(10**30)
        assert not is_representable(1_234_567_891)
        assert not is_representable(10**18, fee=2049)

    def test_record_sizes(self):
        """Each transaction takes exactly tx_size_bytes of calldata."""
        assert len(encode_batch(self._txs(), self.REGISTRY)) == 36
        assert len(encode_batch(self._txs(), self.REGISTRY, 72)) == 216

    def test_withdrawal_marker(self):
        """A withdrawal carries the reserved recipient index."""
        data = encode_batch(self._txs()[2:], self.REGISTRY)
        assert int.from_bytes(data[3:6], "big") == WITHDRAW_INDEX

    def test_decode_recovers_transactions(self):
        """Padded optimistic records decode to the original transactions."""
        data = encode_batch(self._txs(), self.REGISTRY, 72)
        assert decode_batch(data, self.REGISTRY, 72) == self._txs()

    def test_padding_is_deterministic(self):
        """The witness padding depends only on the record."""
        assert encode_batch(self._txs(), self.REGISTRY, 72) == encode_batch(self._txs(), self.REGISTRY, 72)

    def test_unregistered_account(self):
        """Encoding reports the position of the offending transaction."""
        txs = [RollupTx.transfer("alice", "bob", 1), RollupTx.transfer("alice", "mallory", 1)]
        with pytest.raises(InvalidTxError) as excinfo:
            encode_batch(txs, self.REGISTRY)
        assert excinfo.value.index == 1

    def test_unrepresentable_amount(self):
        """An amount without a compact form cannot be published."""
        with pytest.raises(InvalidTxError):
            encode_batch([RollupTx.transfer("alice", "bob", 1_234_567_891)], self.REGISTRY)

    def test_truncated_calldata(self):
        """Calldata must be a whole number of records."""
        with pytest.raises(ValueError):
            decode_batch(b"\x00" * 13, self.REGISTRY)


# ---------------------------------------------------------------------------
# Account state
# ---------------------------------------------------------------------------


class TestAccountState:
    """Tests for AccountState and apply_sequence."""

    def test_transfer_credits_fee(self):
        """Fees go to the fee recipient; the total is unchanged."""
        state = AccountState()
        state.deposit("alice", 10)
        assert state.apply(RollupTx.transfer("alice", "bob", 4, fee=1), fee_recipient="op") is None
        assert state.balances() == {"alice": 5, "bob": 4, "op": 1}
        assert state.total() == 10

    def test_withdrawal_leaves_rollup(self):
        """A withdrawal returns the L1 credit and lowers the total."""
        state = AccountState({"alice": 10})
        assert state.apply(RollupTx.withdraw("alice", 6), "op") == ("alice", 6)
        assert state.total() == 4

    def test_overdraft(self):
        """Amount plus fee may not exceed the balance."""
        state = AccountState({"alice": 10})
        with pytest.raises(InsufficientRollupBalanceError):
            state.apply(RollupTx.transfer("alice", "bob", 10, fee=1), "op")

    def test_sequence_reports_index(self):
        """apply_sequence names the first failing transaction and leaves the input alone."""
        state = AccountState({"alice": 10})
        txs = [RollupTx.transfer("alice", "bob", 6), RollupTx.transfer("alice", "bob", 6)]
        with pytest.raises(InvalidTxError) as excinfo:
            apply_sequence(state, txs, "op")
        assert excinfo.value.index == 1
        assert state.balances() == {"alice": 10}

    def test_root_is_order_independent(self):
        """The root depends on balances, not on insertion order."""
        assert AccountState({"a": 1, "b": 2}).root == AccountState({"b": 2, "a": 1}).root
        assert AccountState({"a": 1}).root != AccountState({"a": 2}).root
        assert AccountState().root == EMPTY_ROOT

    def test_tx_construction_checks(self):
        """Transfers need a recipient; withdrawals must not have one."""
        with pytest.raises(ValueError):
            RollupTx("alice", None, 1)
        with pytest.raises(ValueError):
            RollupTx("alice", "bob", 1, kind="withdraw")
        with pytest.raises(ValueError):
            RollupTx.transfer("alice", "bob", -1)


# ---------------------------------------------------------------------------
# zk rollup
# ---------------------------------------------------------------------------


class TestZkRollup:
    """Tests for zk batches: proofs and finality at inclusion."""

    def test_final_at_inclusion(self, eth_chain, zk_rollup):
        """A proven batch is final as soon as its L1 transaction is mined."""
        contract, operator = zk_rollup
        contract.deposit("alice", ETH)
        operator.submit_transfer("alice", "bob", ETH // 10)
        batch = operator.seal_batch()
        assert batch.status == BatchStatus.PENDING
        eth_chain.produce_block()
        assert batch.status == BatchStatus.FINALIZED
        assert batch.included_at == batch.finalized_at == 13
        assert operator.state.balance("bob") == ETH // 10
        assert operator.state.balance("operator") == contract.params.transfer_fee
        assert operator.latencies() == [Fraction(13)]
        assert contract.check_conservation()
        assert contract.check_root_chain()

    def test_deposit_fee_paid_on_l1(self, eth_chain, zk_rollup):
        """The deposit moves value and gas to L1."""
        contract, _ = zk_rollup
        tx = contract.deposit("alice", ETH)
        assert tx.fee == contract.params.deposit_fee
        assert eth_chain.balance("alice") == START - ETH - tx.fee
        assert [d.account for d in contract.queued_deposits()] == ["alice"]

    def test_withdrawal_credited_at_inclusion(self, eth_chain, zk_rollup):
        """The withdrawn amount reaches L1 one block after sealing."""
        contract, operator = zk_rollup
        contract.deposit("alice", ETH)
        operator.request_withdrawal("alice", ETH // 2)
        operator.seal_batch()
        before = eth_chain.balance("alice")
        eth_chain.produce_block()
        assert eth_chain.balance("alice") == before + ETH // 2
        assert contract.withdrawals_credited == [(0, "alice", ETH // 2)]
        assert operator.state.balance("alice") == ETH // 2 - contract.params.withdrawal_fee
        assert contract.check_conservation()

    def test_missing_proof(self, zk_rollup):
        """zk batches must carry an attestation."""
        contract, operator = zk_rollup
        batch = build_batch(operator.state, [], contract.params, "operator", contract.accounts)
        with pytest.raises(MissingProofError):
            contract.submit_batch(batch)

    def test_rejected_forgery_keeps_pool(self, eth_chain, make_rollup):
        """A forged attestation is refused; the next seal is honest."""
        contract, operator = make_rollup(eth_chain, "zk", [0])
        contract.deposit("alice", ETH)
        operator.submit_transfer("alice", "bob", ETH // 10)
        with pytest.raises(InvalidProofError):
            operator.seal_batch()
        assert contract.batches == []
        assert operator.pool_size == 1
        batch = operator.seal_batch()
        eth_chain.produce_block()
        assert batch.status == BatchStatus.FINALIZED
        assert contract.check_root_chain()

    def test_untrusted_prover(self, zk_rollup):
        """Only provers authorized at setup can attest."""
        contract, operator = zk_rollup
        batch = build_batch(operator.state, [], contract.params, "operator", contract.accounts)
        with pytest.raises(UntrustedProverError):
            prove_batch(batch, Prover("mallory", contract.setup), operator.state)

    def test_cannot_challenge(self, eth_chain, zk_rollup):
        """zk batches have no challenge window."""
        contract, operator = zk_rollup
        contract.deposit("alice", ETH)
        operator.seal_batch()
        with pytest.raises(WindowClosedError):
            contract.challenge_batch(0, "watcher")

    def test_periodic_sealing(self, eth_chain, zk_rollup):
        """The operator seals on its batch interval and skips empty pools."""
        contract, operator = zk_rollup
        contract.deposit("alice", ETH)
        operator.start()
        eth_chain.advance(611)
        assert len(contract.batches) == 1
        assert contract.batches[0].status == BatchStatus.FINALIZED
        eth_chain.advance(1200)
        operator.stop()
        assert len(contract.batches) == 1

    def test_batch_size_cap(self, eth_chain):
        """A batch takes at most max_batch_txs operations from the pool."""
        contract, operator = _rollup_with(eth_chain, max_batch_txs=2)
        contract.deposit("alice", ETH)
        for _ in range(3):
            operator.submit_transfer("alice", "bob", 10**15)
        assert operator.seal_batch().n_txs == 2
        assert operator.pool_size == 1


# ---------------------------------------------------------------------------
# Optimistic rollup
# ---------------------------------------------------------------------------


class TestOptimisticRollup:
    """Tests for the challenge window, fraud proofs and reverts."""

    def test_final_after_window(self, eth_chain):
        """A batch finalizes once the challenge period has passed since inclusion."""
        contract, operator = _rollup_with(eth_chain, "optimistic", challenge_period_s=WINDOW)
        contract.deposit("alice", ETH)
        operator.request_withdrawal("alice", ETH // 2)
        batch = operator.seal_batch()
        eth_chain.produce_block()
        before = eth_chain.balance("alice")
        eth_chain.advance_to(142)
        assert batch.status == BatchStatus.PENDING
        assert eth_chain.balance("alice") == before
        eth_chain.advance_to(143)
        assert batch.status == BatchStatus.FINALIZED
        assert eth_chain.balance("alice") == before + ETH // 2
        assert operator.latencies() == [Fraction(143)]
        assert contract.check_conservation()

    def test_honest_batch_survives_challenge(self, eth_chain):
        """A failed challenge costs the challenger its bond."""
        contract, operator = _rollup_with(eth_chain, "optimistic", challenge_period_s=WINDOW)
        contract.deposit("alice", ETH)
        operator.submit_transfer("alice", "bob", ETH // 10)
        operator.seal_batch()
        eth_chain.produce_block()
        publisher = eth_chain.balance("operator")
        outcome = contract.challenge_batch(0, "watcher")
        assert not outcome.fraud
        assert outcome.penalty == contract.params.challenger_bond
        assert eth_chain.balance("watcher") == START - contract.params.challenger_bond
        assert eth_chain.balance("operator") == publisher + contract.params.challenger_bond
        assert contract.batches[0].status == BatchStatus.PENDING

    def test_fraud_reverts_and_slashes(self, eth_chain):
        """A forged root reverts its batch and every later one; the publisher is slashed."""
        contract, operator = _rollup_with(eth_chain, "optimistic", [1], challenge_period_s=WINDOW)
        contract.deposit("alice", ETH)
        txs = [operator.submit_transfer("alice", "bob", ETH // 10).tx]
        operator.seal_batch()
        eth_chain.produce_block()
        txs.append(operator.submit_transfer("bob", "carol", ETH // 100).tx)
        operator.seal_batch()
        eth_chain.produce_block()
        txs.append(operator.submit_transfer("alice", "carol", ETH // 100).tx)
        operator.seal_batch()
        eth_chain.produce_block()

        outcome = contract.challenge_batch(1, "watcher")
        assert outcome.fraud
        assert outcome.reverted == (1, 2)
        assert outcome.slashed == ETH
        assert outcome.correct_root != contract.batches[1].new_root
        assert eth_chain.balance("watcher") == START + ETH
        assert contract.current_root == contract.batches[0].new_root
        assert contract.check_root_chain()

        with pytest.raises(WindowClosedError):
            contract.challenge_batch(2, "watcher")
        with pytest.raises(NotStakedError):
            operator.seal_batch()
        assert operator.pool_size == 2

        contract.stake("operator")
        batch = operator.seal_batch()
        assert batch.index == 3
        assert batch.n_txs == 2
        eth_chain.produce_block()
        eth_chain.advance(WINDOW)
        assert batch.status == BatchStatus.FINALIZED
        assert contract.finalized_root == contract.current_root
        expected = replay_accounts([("alice", ETH)], txs, "operator")
        assert reconstruct_state(contract).balances() == expected
        assert contract.check_conservation()

    def test_resync_requeues_in_order(self, eth_chain):
        """Operations of reverted batches return to the pool ahead of newer ones."""
        contract, operator = _rollup_with(eth_chain, "optimistic", [0], challenge_period_s=WINDOW)
        contract.deposit("alice", ETH)
        first = operator.submit_transfer("alice", "bob", ETH // 10)
        operator.seal_batch()
        eth_chain.produce_block()
        second = operator.submit_transfer("alice", "carol", ETH // 10)
        contract.challenge_batch(0, "watcher")
        assert [d.account for d in contract.queued_deposits()] == ["alice"]
        assert operator.resync() == []
        assert first.batch is None
        assert operator.pool_size == 2
        assert operator.receipts == [first, second]

    def test_challenge_after_window(self, eth_chain):
        """The challenge window closes challenge_period_s after inclusion."""
        contract, operator = _rollup_with(eth_chain, "optimistic", challenge_period_s=WINDOW)
        contract.deposit("alice", ETH)
        operator.seal_batch()
        eth_chain.produce_block()
        eth_chain.advance(WINDOW)
        with pytest.raises(WindowClosedError):
            contract.challenge_batch(0, "watcher")

    def test_unknown_batch(self, optimistic_rollup):
        """Challenging a batch that was never submitted fails."""
        contract, _ = optimistic_rollup
        with pytest.raises(NoSuchBatchError):
            contract.challenge_batch(0, "watcher")


class TestContractChecks:
    """Tests for batch acceptance preconditions."""

    def test_unstaked_publisher(self, eth_chain):
        """Only bonded publishers may submit."""
        contract = RollupContract(eth_chain, RollupParams(mode="optimistic"))
        batch = build_batch(AccountState(), [], contract.params, "carol", [])
        with pytest.raises(NotStakedError):
            contract.submit_batch(batch)

    def test_stale_root(self, optimistic_rollup):
        """A batch must build on the current root."""
        contract, _ = optimistic_rollup
        batch = build_batch(AccountState({"x": 1}), [], contract.params, "operator", contract.accounts)
        with pytest.raises(StaleRootError):
            contract.submit_batch(batch)


# ---------------------------------------------------------------------------
# Operator pool
# ---------------------------------------------------------------------------


class TestOperatorPool:
    """Tests for admission to the operator's pool."""

    def test_overdraft_rejected(self, zk_rollup):
        """A transfer the pending state cannot cover never enters the pool."""
        contract, operator = zk_rollup
        contract.deposit("alice", ETH)
        with pytest.raises(InsufficientRollupBalanceError):
            operator.submit_transfer("alice", "bob", ETH)
        assert operator.pool_size == 0
        assert operator.pending_balance("alice") == ETH

    def test_bundle_fee(self, zk_rollup):
        """One payer covers the fee of every transfer in the bundle."""
        contract, operator = zk_rollup
        contract.deposit("alice", ETH)
        contract.deposit("bob", ETH)
        transfers = [("alice" if i % 2 else "bob", "carol", 10**15) for i in range(5)]
        receipts = operator.batched_transfer("alice", transfers)
        assert len(receipts) == 6
        assert [r.tx.fee for r in receipts] == [0] * 5 + [5 * contract.params.transfer_fee]
        assert receipts[-1].tx.recipient == "operator"
        assert operator.pending_balance("bob") == ETH - 3 * 10**15
        assert operator.pending_balance("alice") == ETH - 2 * 10**15 - 5 * contract.params.transfer_fee

    def test_bundle_fee_must_compress(self, zk_rollup):
        """Two transfers owe 2168 * 10**10, which the 11-bit fee field cannot carry."""
        contract, operator = zk_rollup
        contract.deposit("alice", ETH)
        with pytest.raises(InvalidTxError) as excinfo:
            operator.batched_transfer("alice", [("alice", "carol", 10**15)] * 2)
        assert excinfo.value.index == 2
        assert operator.pool_size == 0

    def test_insolvent_fee_payer(self, zk_rollup):
        """The whole bundle is refused when its payer cannot cover the fee."""
        contract, operator = zk_rollup
        contract.deposit("alice", ETH)
        with pytest.raises(FeePayerInsolventError):
            operator.batched_transfer("dave", [("alice", "carol", 10**15)])
        assert operator.pool_size == 0

    def test_too_many_authors(self, zk_rollup):
        """A bundle has at most max_authors distinct senders."""
        _, operator = zk_rollup
        transfers = [(f"user{i}", "carol", 1) for i in range(11)]
        with pytest.raises(TooManyAuthorsError):
            operator.batched_transfer("alice", transfers)


# ---------------------------------------------------------------------------
# Data availability
# ---------------------------------------------------------------------------


def _random_history(seed):
    """Run a random honest rollup history and return what the oracle needs."""
    rng = np.random.default_rng(seed)
    mode = "zk" if seed % 2 == 0 else "optimistic"
    chain = L1Chain(load_chain_params("ethereum-2021"))
    users = ["alice", "bob", "carol", "dave"]
    for who in users + ["operator"]:
        chain.fund(who, START)
    contract, operator = _rollup_with(chain, mode, challenge_period_s=WINDOW)

    deposits = []
    for user in users:
        amount = int(rng.integers(1, 1000)) * 10**15
        contract.deposit(user, amount)
        deposits.append((user, amount))

    submitted = []
    for _ in range(int(rng.integers(5, 25))):
        sender = str(rng.choice(users))
        available = operator.pending_balance(sender)
        amount = int(rng.integers(0, available // 10**13 + 1)) * 10**13
        if rng.random() < 0.2:
            fee = contract.params.withdrawal_fee
            tx = RollupTx.withdraw(sender, amount, fee)
        else:
            fee = contract.params.transfer_fee
            tx = RollupTx.transfer(sender, str(rng.choice(users)), amount, fee)
        if amount + fee > available:
            continue
        submitted.append(operator.submit(tx).tx)
        if rng.random() < 0.3:
            operator.seal_batch()
            chain.produce_block()

    operator.seal_batch()
    chain.produce_block()
    chain.advance(WINDOW)
    return contract, operator, deposits, submitted


@pytest.mark.property
class TestDataAvailability:
    """State is recoverable from published calldata alone."""

    @pytest.mark.parametrize("seed", range(100))
    def test_reconstruct_matches_replay(self, seed):
        """Replaying deposits and decoded calldata gives the oracle's balances."""
        contract, operator, deposits, submitted = _random_history(seed)
        expected = replay_accounts(deposits, submitted, "operator")
        rebuilt = reconstruct_state(contract, finalized_only=True)
        assert _non_zero(rebuilt.balances()) == _non_zero(expected)
        assert rebuilt.root == contract.finalized_root == contract.current_root
        assert operator.state.root == contract.current_root
        assert contract.check_conservation()
        assert contract.check_root_chain()
