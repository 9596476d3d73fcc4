"""
Tests for the l2sim CLI.

Uses click.testing.CliRunner for isolated invocation.
"""

import json
from pathlib import Path

import pytest

from tests.helpers import run_cli

pytest.importorskip("click")

SCENARIOS = Path(__file__).parent.parent / "scenarios"


# ---------------------------------------------------------------------------
# calc
# ---------------------------------------------------------------------------


def test_l1_tps_text():
    result = run_cli(["calc", "l1-tps", "--preset", "bitcoin-2021"])
    assert result.exit_code == 0
    assert "4.59902" in result.output
    assert "relay_constraint_ok" in result.output


def test_l1_tps_json_is_exact():
    """JSON output carries the rational as numerator and denominator."""
    result = run_cli(["calc", "l1-tps", "--preset", "bitcoin-2021", "--json"])
    assert result.exit_code == 0
    data = json.loads(result.output)
    assert data["tps"]["numerator"] == 32768
    assert data["tps"]["denominator"] == 7125
    assert data["tps"]["decimal"] == pytest.approx(4.6, abs=0.01)
    assert data["relay_constraint_ok"] is True


def test_l1_tps_requires_preset():
    result = run_cli(["calc", "l1-tps"])
    assert result.exit_code == 2


def test_l1_tps_unknown_preset():
    """Unknown presets are parameter errors with exit status 2."""
    result = run_cli(["calc", "l1-tps", "--preset", "dogecoin"])
    assert result.exit_code == 2
    assert "bitcoin-2021" in result.output


def test_plasma_tps_defaults():
    result = run_cli(["calc", "plasma-tps", "--json"])
    assert result.exit_code == 0
    data = json.loads(result.output)
    assert data["avg_tx_per_block"]["decimal"] == 230
    assert round(data["tps"]["decimal"], 2) == 175.24


def test_plasma_tps_rejects_zero():
    result = run_cli(["calc", "plasma-tps", "--l2-block-time", "0"])
    assert result.exit_code == 2


@pytest.mark.parametrize("mode, block_bytes, tps", [("zk", 718_750, 4607), ("optimistic", 781_250, 835)])
def test_rollup_tps(mode, block_bytes, tps):
    result = run_cli(["calc", "rollup-tps", "--preset", "ethereum-2021", "--mode", mode, "--json"])
    assert result.exit_code == 0
    data = json.loads(result.output)
    assert data["mode"] == mode
    assert data["block_bytes"]["decimal"] == block_bytes
    assert round(data["tps"]["decimal"]) == tps


def test_fee_json():
    result = run_cli(["calc", "fee", "channels", "--json"])
    assert result.exit_code == 0
    data = json.loads(result.output)
    assert data["customer_one_time"] == 53_500
    assert data["merchant_per_tx"] == 1


def test_fee_text():
    result = run_cli(["calc", "fee", "rollup-zk"])
    assert result.exit_code == 0
    assert "customer one-time" in result.output
    assert "ETH" in result.output


def test_fee_unknown_backend():
    result = run_cli(["calc", "fee", "sidechain"])
    assert result.exit_code == 2


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def test_simulate_writes_artifacts(tmp_path):
    out = tmp_path / "ln"
    result = run_cli(["simulate", str(SCENARIOS / "ln_cheat.json"), "--out", str(out)])
    assert result.exit_code == 0
    assert "13 steps, invariants ok" in result.output
    assert (out / "events.jsonl").exists()
    summary = json.loads((out / "summary.json").read_text(encoding="utf-8"))
    assert summary["name"] == "ln_cheat"
    assert summary["invariants"] == "ok"


def test_simulate_seed_override(tmp_path):
    """--seed replaces the scenario seed in the summary."""
    out = tmp_path / "ln"
    result = run_cli(["simulate", str(SCENARIOS / "ln_cheat.json"), "--out", str(out), "--seed", "99"])
    assert result.exit_code == 0
    assert json.loads((out / "summary.json").read_text(encoding="utf-8"))["seed"] == 99


def test_simulate_malformed_scenario(tmp_path):
    """Schema problems exit with status 2."""
    path = tmp_path / "bad.json"
    path.write_text('{"kind": "channels", "colour": 1}', encoding="utf-8")
    result = run_cli(["simulate", str(path), "--out", str(tmp_path / "out")])
    assert result.exit_code == 2
    assert "Unknown scenario keys" in result.output


def test_simulate_invalid_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{", encoding="utf-8")
    result = run_cli(["simulate", str(path), "--out", str(tmp_path / "out")])
    assert result.exit_code == 2


def test_simulate_protocol_failure(tmp_path):
    """An action failing without expect_error exits with status 1."""
    path = tmp_path / "unstaked.json"
    scenario = {
        "kind": "rollup",
        "accounts": {"alice": 10**18},
        "actions": [{"op": "deposit", "user": "alice", "amount": 10**17}, {"op": "seal"}],
    }
    path.write_text(json.dumps(scenario), encoding="utf-8")
    result = run_cli(["simulate", str(path), "--out", str(tmp_path / "out")])
    assert result.exit_code == 1
    assert "NotStakedError" in result.output


# ---------------------------------------------------------------------------
# bench / report
# ---------------------------------------------------------------------------


def test_bench_single_backend(tmp_path):
    out = tmp_path / "bench"
    result = run_cli(["bench", "--out", str(out), "--backend", "channels"])
    assert result.exit_code == 0
    assert (out / "report.md").read_text(encoding="utf-8") in result.output
    assert (out / "report.csv").exists()
    assert len(json.loads((out / "results.json").read_text(encoding="utf-8"))) == 1


def test_bench_rejects_simulation_scenario(tmp_path):
    result = run_cli(["bench", "--scenario", str(SCENARIOS / "ln_cheat.json"), "--out", str(tmp_path)])
    assert result.exit_code == 2
    assert "use 'simulate'" in result.output


def test_bench_unknown_backend(tmp_path):
    result = run_cli(["bench", "--out", str(tmp_path), "--backend", "sidechain"])
    assert result.exit_code == 2


def test_report_rerenders(tmp_path):
    """report prints the same table bench wrote."""
    out = tmp_path / "bench"
    assert run_cli(["bench", "--out", str(out), "--backend", "l1-direct"]).exit_code == 0
    result = run_cli(["report", str(out)])
    assert result.exit_code == 0
    assert result.output == (out / "report.md").read_text(encoding="utf-8")


def test_report_empty_dir(tmp_path):
    result = run_cli(["report", str(tmp_path)])
    assert result.exit_code == 1
    assert "EmptyResultsError" in result.output


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------


def test_presets_text():
    result = run_cli(["presets"])
    assert result.exit_code == 0
    assert "bitcoin-2021" in result.output
    assert "ethereum-2021" in result.output


def test_presets_json():
    result = run_cli(["presets", "--json"])
    assert result.exit_code == 0
    data = json.loads(result.output)
    assert data["bitcoin-2021"]["avg_tx_size_bytes"] == 380
