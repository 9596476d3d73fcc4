"""
Tests for l2sim.bench: workload generation, fee burden and benchmark runs.
"""

from fractions import Fraction

import pytest

from l2sim.bench import (
    BACKENDS,
    L2_BACKENDS,
    BenchConfig,
    RunResult,
    WorkloadSpec,
    fee_burden,
    generate_workload,
    latency_stats,
    load_fee_schedule,
    make_backend,
    mean_interarrival_s,
    required_throughput,
    run_benchmark,
    run_many,
)
from l2sim.errors import BackendMisconfiguredError, InvalidParamsError


@pytest.fixture(scope="module")
def default_runs():
    """Every backend on the default 200-payment workload, keyed by backend."""
    return {result.backend: result for result in run_many(BACKENDS, WorkloadSpec())}


# ---------------------------------------------------------------------------
# Workload
# ---------------------------------------------------------------------------


class TestWorkload:
    """Tests for WorkloadSpec and generate_workload."""

    def test_required_throughput(self):
        """400 stores with 10 registers paying every two minutes need about 33 TPS."""
        result = required_throughput(WorkloadSpec())
        assert result["per_store_tps"] == Fraction(1, 12)
        assert round(float(result["total_tps"]), 2) == 33.33

    def test_same_seed_same_stream(self):
        """A fixed seed reproduces the intent stream exactly."""
        spec = WorkloadSpec(total_txs=100, seed=9)
        assert generate_workload(spec) == generate_workload(spec)
        assert generate_workload(spec) != generate_workload(spec.replace(seed=10))

    def test_stream_shape(self):
        """Intents are numbered, time-ordered and inside the configured ranges."""
        spec = WorkloadSpec(total_txs=300, payment_amount_range=(100, 200))
        intents = generate_workload(spec)
        assert [i.seq for i in intents] == list(range(300))
        assert all(a.t <= b.t for a, b in zip(intents, intents[1:]))
        assert all(100 <= i.amount <= 200 for i in intents)
        assert all(0 <= i.store < 400 and 0 <= i.register < 10 for i in intents)
        assert len({i.customer for i in intents}) == 300

    def test_mean_interarrival(self):
        """The merged stream arrives about every 120 / 4000 seconds."""
        intents = generate_workload(WorkloadSpec(total_txs=2_000, seed=3))
        assert abs(float(mean_interarrival_s(intents)) - 0.03) < 0.003

    def test_empty_workload(self):
        """Zero payments give an empty stream."""
        assert generate_workload(WorkloadSpec(total_txs=0)) == []
        with pytest.raises(ValueError):
            mean_interarrival_s([])

    @pytest.mark.parametrize(
        "changes",
        [
            {"stores": 0},
            {"mean_interpayment_s": 0},
            {"total_txs": -1},
            {"payment_amount_range": (5, 1)},
            {"seed": -1},
        ],
    )
    def test_invalid_spec(self, changes):
        """Out-of-range workload values are rejected."""
        with pytest.raises(InvalidParamsError):
            WorkloadSpec(**changes)

    def test_unknown_keys(self):
        """Scenario mappings may only use known workload and config keys."""
        with pytest.raises(InvalidParamsError, match="Unknown"):
            WorkloadSpec.from_dict({"shops": 3})
        with pytest.raises(InvalidParamsError, match="Unknown"):
            BenchConfig.from_dict({"speed": 3})

    def test_invalid_mode(self):
        """Only burst and paced submission exist."""
        with pytest.raises(InvalidParamsError):
            BenchConfig(mode="bursty")


# ---------------------------------------------------------------------------
# Fees
# ---------------------------------------------------------------------------


class TestFeeBurden:
    """Tests for fee schedules and fee_burden."""

    def test_channels(self):
        """Customers pay the open and close; the merchant pays routing."""
        burden = fee_burden("channels")
        assert burden.items["open"] == 23_500
        assert burden.items["close"] == 30_000
        assert burden.customer_one_time == 53_500
        assert burden.merchant_per_tx == 1

    def test_plasma(self):
        """Deposit and exit at 40 Gwei; child transfers at 3 Gwei."""
        burden = fee_burden("plasma")
        assert burden.items["deposit"] == 77_000 * 40 * 10**9
        assert burden.items["withdraw"] == 245_000 * 40 * 10**9
        assert burden.merchant_per_tx == 21_000 * 3 * 10**9

    def test_rollup(self):
        """A rollup deposit costs 0.0016875 ETH; transfers 0.00001084 ETH."""
        burden = fee_burden("rollup-zk")
        assert str(burden.native(burden.customer_one_time)) == "27/16000"
        assert burden.merchant_per_tx == 10_840_000_000_000
        assert burden.items["batch_share"] > 0

    def test_l1_direct(self):
        """Direct payments cost the average transaction size at the schedule's feerate."""
        assert fee_burden("l1-direct").customer_per_tx == 380 * 50
        assert fee_burden("l1-direct", l1_preset="ethereum-2021").customer_per_tx == 21_000 * 40 * 10**9

    def test_to_dict_has_native_values(self):
        """Serialized burdens carry both smallest-unit and native amounts."""
        data = fee_burden("channels").to_dict()
        assert data["customer_one_time"] == 53_500
        assert data["customer_one_time_native"] == "107/200000"
        assert list(data["items"]) == sorted(data["items"])

    def test_unknown_backend(self):
        """Unknown backends and presets are configuration errors."""
        with pytest.raises(BackendMisconfiguredError):
            fee_burden("sidechain")
        with pytest.raises(BackendMisconfiguredError):
            load_fee_schedule("l1-direct", "litecoin")


# ---------------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------------


class TestLatencyStats:
    """Tests for latency_stats."""

    def test_stats(self):
        """Statistics are in milliseconds."""
        stats = latency_stats([Fraction(1, 10), Fraction(3, 10)])
        assert stats["mean"] == 200.0
        assert stats["max"] == 300.0

    def test_empty(self):
        """No latencies give empty statistics."""
        assert latency_stats([]) == {"mean": None, "p50": None, "p95": None, "max": None}


class TestRunBenchmark:
    """Tests for run_benchmark and run_many."""

    @pytest.mark.parametrize("backend", L2_BACKENDS)
    def test_l2_meets_requirement(self, default_runs, backend):
        """Every L2 backend sustains the supermarket's 33 TPS."""
        result = default_runs[backend]
        assert result.completed == result.submitted == 200
        assert result.failures == []
        assert result.achieved_tps >= 33
        assert result.meets_requirement

    @pytest.mark.parametrize("backend", BACKENDS)
    def test_accounting_balances(self, default_runs, backend):
        """Customer debits equal merchant credits plus fees."""
        accounting = default_runs[backend].accounting
        assert accounting["balanced"]
        assert accounting["customer_debits"] == accounting["merchant_credits"] + accounting["fees"]

    def test_l1_direct_is_capacity_bound(self, default_runs):
        """Direct Bitcoin payments never exceed 4.6 TPS."""
        result = default_runs["l1-direct"]
        assert result.completed == 200
        assert float(result.achieved_tps) <= 4.6
        assert not result.meets_requirement

    def test_l1_direct_sustained(self):
        """A workload larger than one block still stays under the block-space bound."""
        result = run_benchmark("l1-direct", WorkloadSpec(total_txs=3_000))
        assert result.completed == 3_000
        assert result.elapsed_s == 1200
        assert float(result.achieved_tps) <= 4.6

    @pytest.mark.parametrize("backend", L2_BACKENDS)
    def test_l2_beats_l1(self, default_runs, backend):
        """L2 backends outperform direct L1 payments in throughput and latency."""
        l1 = default_runs["l1-direct"]
        result = default_runs[backend]
        assert result.achieved_tps > l1.achieved_tps
        assert result.latency_ms["mean"] < l1.latency_ms["mean"]

    @pytest.mark.parametrize("backend, confirmation", [("rollup-zk", "finalized"), ("rollup-optimistic", "included")])
    def test_rollup_completion_needs_l1_confirmation(self, backend, confirmation):
        """Rollup payments count only once L1 confirms the batch they were sealed in."""
        engine = make_backend(backend)
        execution = engine.run(generate_workload(WorkloadSpec(total_txs=20)))
        receipts = engine.operator.receipts
        assert len(execution.completed) == 20
        assert all(r.included_at is not None for r in receipts)
        if backend == "rollup-zk":
            assert all(r.finalized_at is not None for r in receipts)
        assert set(execution.completed.values()) == {r.sealed_at for r in receipts}
        assert execution.details["l1_confirmation"] == confirmation
        slowest = max(execution.completed[seq] - execution.submitted[seq] for seq in execution.completed)
        assert Fraction(execution.details["l1_confirmation_max_s"]) > slowest

    def test_unconfirmed_rollup_batch_fails(self):
        """A batch still waiting for its L1 block at the deadline fails its payments."""
        result = run_benchmark("rollup-zk", WorkloadSpec(total_txs=20), BenchConfig(max_wait_s=5))
        assert result.completed == 0
        assert len(result.failures) == 20
        assert {f["reason"] for f in result.failures} == {"not final before the deadline"}

    def test_plasma_completes_in_committed_blocks(self):
        """Plasma payments complete at the timestamp of a committed child block."""
        engine = make_backend("plasma")
        execution = engine.run(generate_workload(WorkloadSpec(total_txs=20)))
        committed = {b.timestamp for b in engine.plasma.blocks if b.committed and b.txs and not b.deposit}
        assert len(execution.completed) == 20
        assert set(execution.completed.values()) <= committed

    def test_deterministic(self):
        """Two runs with one seed give identical results and event logs."""
        spec = WorkloadSpec(total_txs=20)
        first, second = run_benchmark("plasma", spec), run_benchmark("plasma", spec)
        assert first.to_dict() == second.to_dict()
        assert first.events.to_jsonl() == second.events.to_jsonl()

    def test_paced_mode(self):
        """Paced submission completes every payment at its own arrival time."""
        result = run_benchmark("channels", WorkloadSpec(total_txs=20), BenchConfig(mode="paced"))
        assert result.completed == 20
        assert result.mode == "paced"
        assert result.accounting["balanced"]

    def test_empty_workload(self):
        """Without payments nothing completes and the requirement is not met."""
        result = run_benchmark("rollup-zk", WorkloadSpec(total_txs=0))
        assert (result.submitted, result.completed) == (0, 0)
        assert result.achieved_tps == 0
        assert not result.meets_requirement

    def test_run_many_keeps_order(self):
        """Threaded runs come back in request order with the sequential results."""
        spec = WorkloadSpec(total_txs=20)
        names = ["rollup-optimistic", "channels", "l1-direct"]
        sequential = run_many(names, spec)
        threaded = run_many(names, spec, BenchConfig(workers=3))
        assert [r.backend for r in threaded] == names
        assert [r.to_dict() for r in threaded] == [r.to_dict() for r in sequential]

    def test_result_from_dict(self):
        """A result read back from its JSON form serializes identically."""
        result = run_benchmark("channels", WorkloadSpec(total_txs=10))
        assert RunResult.from_dict(result.to_dict()).to_dict() == result.to_dict()

    def test_unknown_backend(self):
        """make_backend rejects names it does not know."""
        with pytest.raises(BackendMisconfiguredError):
            make_backend("sidechain")

    def test_rollup_bundle_sizes(self):
        """Bundles only use sizes whose total fee compresses."""
        backend = make_backend("rollup-zk")
        assert backend.bundle_sizes(25) == [10, 10, 5]
        assert backend.bundle_sizes(2) == [1, 1]
