"""
Tests for l2sim.scenario: validation, the shipped scenarios and bench settings.
"""

import json
from pathlib import Path

import pytest

from l2sim.bench import L2_BACKENDS, WorkloadSpec
from l2sim.errors import NotStakedError, ScenarioError
from l2sim.scenario import Scenario, bench_settings, load_scenario, run_scenario

SCENARIOS = Path(__file__).parent.parent / "scenarios"

ETH = 10**18


def _rollup_scenario(actions, **extra):
    data = {
        "name": "tiny-rollup",
        "kind": "rollup",
        "seed": 1,
        "accounts": {"operator": 3 * ETH, "alice": 2 * ETH},
        "rollup": {"params": {"mode": "optimistic", "challenge_period_s": 600}},
        "actions": actions,
    }
    data.update(extra)
    return Scenario.from_dict(data)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


class TestScenarioValidation:
    """Tests for Scenario.from_dict and load_scenario."""

    def test_minimal(self):
        """A kind alone is enough; the chain defaults per kind."""
        scenario = Scenario.from_dict({"kind": "channels"})
        assert scenario.name == "channels"
        assert scenario.seed == 0
        assert scenario.chain.name == "bitcoin-2021"
        assert Scenario.from_dict({"kind": "rollup"}).chain.name == "ethereum-2021"

    @pytest.mark.parametrize(
        "data, message",
        [
            ({"kind": "channels", "colour": "red"}, "Unknown scenario keys"),
            ({"kind": "sidechain"}, "'kind' must be one of"),
            ({}, "'kind' must be one of"),
            ({"kind": "channels", "plasma": {}}, "do not belong"),
            ({"kind": "channels", "seed": -1}, "64-bit"),
            ({"kind": "channels", "seed": True}, "64-bit"),
            ({"kind": "channels", "accounts": {"alice": -5}}, "non-negative"),
            ({"kind": "channels", "actions": [{"a": "alice"}]}, "'op' key"),
            ({"kind": "channels", "actions": [{"op": "mint"}]}, "Unknown channels actions"),
            ({"kind": "channels", "channels": []}, "must be an object"),
            ({"kind": "channels", "chain": "dogecoin"}, "Invalid chain"),
        ],
    )
    def test_rejected(self, data, message):
        """Malformed scenarios raise ScenarioError with a pointed message."""
        with pytest.raises(ScenarioError, match=message):
            Scenario.from_dict(data)

    def test_not_an_object(self):
        """The top level must be a JSON object."""
        with pytest.raises(ScenarioError):
            Scenario.from_dict([{"kind": "channels"}])

    def test_with_seed(self):
        """with_seed overrides the seed and leaves None alone."""
        scenario = Scenario.from_dict({"kind": "channels", "seed": 4})
        assert scenario.with_seed(None) is scenario
        assert scenario.with_seed(9).seed == 9

    def test_missing_file(self, tmp_path):
        """A missing file is a scenario error."""
        with pytest.raises(ScenarioError, match="not found"):
            load_scenario(tmp_path / "nope.json")

    def test_bad_json(self, tmp_path):
        """A malformed file is a scenario error."""
        path = tmp_path / "broken.json"
        path.write_text("{\"kind\": ", encoding="utf-8")
        with pytest.raises(ScenarioError, match="Invalid JSON"):
            load_scenario(path)

    def test_load_shipped(self):
        """Every shipped scenario validates."""
        paths = sorted(SCENARIOS.glob("*.json"))
        assert len(paths) >= 4
        for path in paths:
            assert load_scenario(path).name == path.stem


# ---------------------------------------------------------------------------
# Shipped scenarios
# ---------------------------------------------------------------------------


class TestShippedScenarios:
    """End-to-end runs of the scenarios under scenarios/."""

    def test_ln_cheat(self):
        """Both stale broadcasts are penalized: once by the watchtower, once by the victim."""
        result = run_scenario(load_scenario(SCENARIOS / "ln_cheat.json"))
        penalties = result.events.filter("channels", "penalty")
        assert [p["claimant"] for p in penalties] == ["watchtower", "dave"]
        assert [p["cheater"] for p in penalties] == ["alice", "carol"]
        assert result.summary["invariants"] == "ok"
        assert result.events.filter("channels", "close_finalized") == []

    def test_plasma_withholding(self):
        """Withholding halts the chain and every user leaves through one mass exit."""
        summary = run_scenario(load_scenario(SCENARIOS / "plasma_withholding.json")).summary
        steps = {s["op"]: s for s in summary["steps"]}
        assert summary["final"]["halted"] is True
        assert summary["final"]["missing_blocks"]
        assert steps["mass_exit"]["result"]["claims"] == 4
        waiting = [s for s in summary["steps"] if s["op"] == "finalize_mass_exit"]
        assert waiting[0]["result"]["error"].startswith("NotElapsedError")
        assert set(waiting[1]["result"]["credited"]) <= {"alice", "bob", "carol"}

    def test_rollup_fraud(self):
        """The forged batch reverts and a data-only replay matches the contract root."""
        result = run_scenario(load_scenario(SCENARIOS / "rollup_fraud.json"))
        final = result.summary["final"]
        assert final["root_matches"] is True
        assert final["batches"][1]["status"] == "reverted"
        assert all(b["status"] == "finalized" for i, b in enumerate(final["batches"]) if i != 1)
        assert len(result.events.filter("rollup", "fraud_proven")) == 1

    @pytest.mark.parametrize("name", ["ln_cheat", "plasma_withholding", "rollup_fraud"])
    def test_deterministic(self, name, tmp_path):
        """One scenario and seed give byte-identical output files."""
        scenario = load_scenario(SCENARIOS / f"{name}.json")
        first = run_scenario(scenario).write(tmp_path / "a")
        second = run_scenario(scenario).write(tmp_path / "b")
        for key in ("events.jsonl", "summary.json"):
            assert first[key].read_bytes() == second[key].read_bytes()

    def test_write(self, tmp_path):
        """write() produces the event log and a JSON summary."""
        result = run_scenario(load_scenario(SCENARIOS / "ln_cheat.json"))
        paths = result.write(tmp_path / "out")
        summary = json.loads(paths["summary.json"].read_text(encoding="utf-8"))
        assert summary["name"] == "ln_cheat"
        lines = paths["events.jsonl"].read_text(encoding="utf-8").splitlines()
        assert len(lines) == len(result.events.records)


# ---------------------------------------------------------------------------
# Action errors
# ---------------------------------------------------------------------------


class TestActionErrors:
    """Tests for expect_error handling in the action loop."""

    def test_expected_error_recorded(self):
        """A failure named by expect_error is recorded and the run continues."""
        scenario = _rollup_scenario(
            [
                {"op": "deposit", "user": "alice", "amount": ETH},
                {"op": "seal", "expect_error": "NotStakedError"},
                {"op": "stake"},
                {"op": "seal"},
            ]
        )
        summary = run_scenario(scenario).summary
        assert summary["steps"][1]["result"]["error"].startswith("NotStakedError")
        assert summary["steps"][3]["result"]["batch"] == 0

    def test_unexpected_error_propagates(self):
        """Protocol errors without expect_error surface unchanged."""
        scenario = _rollup_scenario([{"op": "deposit", "user": "alice", "amount": ETH}, {"op": "seal"}])
        with pytest.raises(NotStakedError):
            run_scenario(scenario)

    def test_expected_error_missing(self):
        """An action that succeeds despite expect_error fails the scenario."""
        scenario = _rollup_scenario([{"op": "stake", "expect_error": "NotStakedError"}])
        with pytest.raises(ScenarioError, match="expected to raise"):
            run_scenario(scenario)

    def test_missing_action_key(self):
        """Actions missing a required key are scenario errors."""
        scenario = _rollup_scenario([{"op": "deposit", "user": "alice"}])
        with pytest.raises(ScenarioError, match="missing amount"):
            run_scenario(scenario)

    def test_unknown_section_key(self):
        """Kind sections only accept their own keys."""
        scenario = _rollup_scenario([], rollup={"speed": 3})
        with pytest.raises(ScenarioError, match="Unknown rollup keys"):
            run_scenario(scenario)

    def test_bench_kind_not_simulated(self):
        """Bench scenarios run through the bench command, not run_scenario."""
        with pytest.raises(ScenarioError, match="bench"):
            run_scenario(Scenario.from_dict({"kind": "bench"}))


# ---------------------------------------------------------------------------
# Bench settings
# ---------------------------------------------------------------------------


class TestBenchSettings:
    """Tests for bench_settings."""

    def test_shipped_default(self):
        """The shipped bench scenario runs the four L2 backends on 200 payments."""
        settings = bench_settings(load_scenario(SCENARIOS / "bench_default.json"))
        assert settings["backends"] == list(L2_BACKENDS)
        assert settings["spec"].total_txs == 200
        assert settings["spec"].seed == 42
        assert settings["config"].mode == "burst"

    def test_defaults(self):
        """An empty section means every L2 backend on the default workload."""
        settings = bench_settings(Scenario.from_dict({"kind": "bench", "seed": 5}))
        assert settings["backends"] == list(L2_BACKENDS)
        assert settings["spec"] == WorkloadSpec(seed=5)

    def test_workload_seed_wins(self):
        """An explicit workload seed overrides the scenario seed."""
        scenario = Scenario.from_dict({"kind": "bench", "seed": 5, "bench": {"workload": {"seed": 8}}})
        assert bench_settings(scenario)["spec"].seed == 8

    @pytest.mark.parametrize(
        "section",
        [
            {"backends": ["sidechain"]},
            {"backends": []},
            {"workload": {"stores": 0}},
            {"config": {"mode": "bursty"}},
            {"tempo": 1},
        ],
    )
    def test_rejected(self, section):
        """Bad backends, workloads or configs are scenario errors."""
        with pytest.raises(ScenarioError):
            bench_settings(Scenario.from_dict({"kind": "bench", "bench": section}))
