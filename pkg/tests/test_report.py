"""
Tests for l2sim.bench.report: the comparison table and its artifacts.
"""

import io
import json
from fractions import Fraction

import pandas as pd
import pytest

from l2sim.bench import RunResult, WorkloadSpec, run_many
from l2sim.bench.report import (
    COLUMNS,
    build_report,
    emit_report,
    format_rational,
    load_descriptors,
    load_results,
)
from l2sim.errors import EmptyResultsError, InvalidParamsError


@pytest.fixture(scope="module")
def small_runs():
    """Channels and direct L1 on ten payments."""
    return run_many(["channels", "l1-direct"], WorkloadSpec(total_txs=10))


def _manual_result(backend="custom|chain"):
    return RunResult(
        backend=backend,
        mode="burst",
        submitted=4,
        completed=3,
        elapsed_s=Fraction(3, 2),
        achieved_tps=Fraction(2),
        required_tps=Fraction(100, 3),
        latency_ms={"mean": 250.0, "p50": None, "p95": None, "max": None},
        fee_totals={"customer_l1": 7},
        failures=[{"seq": 3, "error": "NoRouteError: none"}],
        unit="sat",
    )


class TestDescriptors:
    """Tests for the packaged qualitative descriptors."""

    def test_every_backend_described(self):
        """Each backend has a label and all qualitative fields."""
        descriptors = load_descriptors()
        for backend in ("channels", "plasma", "rollup-zk", "rollup-optimistic", "l1-direct"):
            entry = descriptors[backend]
            assert entry["label"]
            for key in ("scalability", "security", "decentralization", "privacy", "fees"):
                assert entry[key]

    def test_format_rational(self):
        """Rationals render with six significant digits."""
        assert format_rational(Fraction(100, 3)) == "33.3333"
        assert format_rational(200) == "200"


class TestBuildReport:
    """Tests for build_report and its renderings."""

    def test_columns_and_rows(self, small_runs):
        """One row per backend, labelled from the descriptors, in fixed column order."""
        report = build_report(small_runs)
        assert tuple(report.table.columns) == COLUMNS
        assert list(report.table["Backend"]) == ["Payment channels (Lightning)", "Direct L1 payments"]
        assert list(report.table["Completed"]) == ["10", "10"]

    def test_csv(self, small_runs):
        """The CSV parses back to the same table."""
        text = build_report(small_runs).to_csv()
        assert "\r" not in text
        table = pd.read_csv(io.StringIO(text), dtype=str, keep_default_na=False)
        assert tuple(table.columns) == COLUMNS
        assert len(table) == 2

    def test_markdown(self):
        """A header, a separator and one line per row; pipes in cells are escaped."""
        report = build_report([_manual_result(), _manual_result("channels")])
        lines = report.to_markdown().splitlines()
        assert len(lines) == 4
        assert lines[1].count("---") == len(COLUMNS)
        assert "custom\\|chain" in lines[2]
        assert lines[3].startswith("| Payment channels (Lightning) |")

    def test_manual_row(self):
        """Unknown backends keep their name; missing latencies render empty."""
        row = build_report([_manual_result("lab")]).table.iloc[0]
        assert row["Backend"] == "lab"
        assert row["Scalability"] == ""
        assert row["TPS"] == "2"
        assert row["Latency mean (ms)"] == "250"
        assert row["Latency p95 (ms)"] == ""
        assert row["Failures"] == "1"
        assert row["Customer L1 fees"] == "7"
        assert row["Merchant L2 fees"] == "0"

    def test_empty(self):
        """Nothing to report is an error."""
        with pytest.raises(EmptyResultsError):
            build_report([])


class TestEmitReport:
    """Tests for emit_report and load_results."""

    def test_artifacts(self, small_runs, tmp_path):
        """Report, CSV, results and the merged event log are written."""
        written = emit_report(small_runs, tmp_path / "report")
        assert set(written) == {"report.md", "report.csv", "results.json", "events.jsonl"}
        records = [json.loads(line) for line in written["events.jsonl"].read_text(encoding="utf-8").splitlines()]
        assert {r["backend"] for r in records} == {"channels", "l1-direct"}
        assert [r["seq"] for r in records] == list(range(len(records)))

    def test_byte_identical(self, tmp_path):
        """Two runs of the same workload write identical files."""
        spec = WorkloadSpec(total_txs=10)
        first = emit_report(run_many(["plasma"], spec), tmp_path / "a")
        second = emit_report(run_many(["plasma"], spec), tmp_path / "b")
        for name, path in first.items():
            assert path.read_bytes() == second[name].read_bytes()

    def test_no_events_no_log(self, tmp_path):
        """Results without event logs skip events.jsonl."""
        written = emit_report([_manual_result()], tmp_path)
        assert "events.jsonl" not in written
        assert not (tmp_path / "events.jsonl").exists()

    def test_round_trip(self, small_runs, tmp_path):
        """load_results reads back what emit_report wrote."""
        emit_report(small_runs, tmp_path)
        loaded = load_results(tmp_path)
        assert [r.to_dict() for r in loaded] == [r.to_dict() for r in small_runs]
        assert build_report(loaded).to_markdown() == build_report(small_runs).to_markdown()

    def test_missing_results(self, tmp_path):
        """A directory without results.json has nothing to report."""
        with pytest.raises(EmptyResultsError):
            load_results(tmp_path)

    def test_empty_results(self, tmp_path):
        """An empty results list has nothing to report."""
        (tmp_path / "results.json").write_text("[]", encoding="utf-8")
        with pytest.raises(EmptyResultsError):
            load_results(tmp_path)

    def test_bad_json(self, tmp_path):
        """A corrupt results file is a parameter error."""
        (tmp_path / "results.json").write_text("[{", encoding="utf-8")
        with pytest.raises(InvalidParamsError):
            load_results(tmp_path)
