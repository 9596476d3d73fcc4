"""
Comparison report: measured benchmark results next to qualitative descriptors.

The table has one row per backend. Its qualitative columns come from
``l2sim/data/descriptors.json``; the measured columns come from
:class:`~l2sim.bench.runner.RunResult`. Column order is fixed so that the
Markdown and CSV renderings are byte-identical across runs.
"""

import io
import json
import logging
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import pandas as pd

from ..errors import EmptyResultsError, InvalidParamsError
from ..events import EventLog
from .runner import RunResult

logger = logging.getLogger(__name__)

_DESCRIPTOR_FILE = Path(__file__).parent.parent / "data" / "descriptors.json"

QUALITATIVE_COLUMNS = {
    "Scalability": "scalability",
    "Security": "security",
    "Decentralization": "decentralization",
    "Privacy": "privacy",
    "Fees & micropayments": "fees",
}
MEASURED_COLUMNS = (
    "TPS",
    "Required TPS",
    "Latency mean (ms)",
    "Latency p95 (ms)",
    "Completed",
    "Failures",
    "Customer L1 fees",
    "Customer L2 fees",
    "Merchant L2 fees",
    "Unit",
)
COLUMNS = ("Backend",) + tuple(QUALITATIVE_COLUMNS) + MEASURED_COLUMNS

REPORT_MD = "report.md"
REPORT_CSV = "report.csv"
RESULTS_JSON = "results.json"
EVENTS_JSONL = "events.jsonl"


@lru_cache(maxsize=None)
def load_descriptors() -> Dict[str, Dict[str, str]]:
    """Qualitative descriptors of every backend."""
    if not _DESCRIPTOR_FILE.exists():
        raise InvalidParamsError(f"Descriptor file not found: {_DESCRIPTOR_FILE}")
    try:
        with open(_DESCRIPTOR_FILE, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise InvalidParamsError(f"Invalid JSON in descriptor file {_DESCRIPTOR_FILE}: {e}") from e


def format_rational(value: Any, digits: int = 6) -> str:
    """Render a number with *digits* significant digits."""
    return f"{float(value):.{digits}g}"


def _escape(text: object) -> str:
    return str(text).replace("|", "\\|")


def _cell(value: Optional[float]) -> str:
    return "" if value is None else format_rational(value)


@dataclass
class ComparisonReport:
    """One row per backend with qualitative and measured columns."""

    results: List[RunResult]
    table: pd.DataFrame

    def to_markdown(self) -> str:
        """Pipe table with a header separator row."""
        lines = [
            "| " + " | ".join(_escape(c) for c in self.table.columns) + " |",
            "|" + "|".join("---" for _ in self.table.columns) + "|",
        ]
        for row in self.table.itertuples(index=False):
            lines.append("| " + " | ".join(_escape(v) for v in row) + " |")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buffer = io.StringIO()
        self.table.to_csv(buffer, index=False, lineterminator="\n")
        return buffer.getvalue()


def build_report(results: Sequence[RunResult]) -> ComparisonReport:
    """
    Assemble the comparison table.

    Raises:
        EmptyResultsError: If *results* is empty.
    """
    if not results:
        raise EmptyResultsError("no benchmark results to report")
    descriptors = load_descriptors()
    rows = []
    for result in results:
        descriptor = descriptors.get(result.backend, {})
        row: Dict[str, str] = {"Backend": descriptor.get("label", result.backend)}
        for column, key in QUALITATIVE_COLUMNS.items():
            row[column] = descriptor.get(key, "")
        row.update(
            {
                "TPS": format_rational(result.achieved_tps),
                "Required TPS": format_rational(result.required_tps),
                "Latency mean (ms)": _cell(result.latency_ms.get("mean")),
                "Latency p95 (ms)": _cell(result.latency_ms.get("p95")),
                "Completed": str(result.completed),
                "Failures": str(len(result.failures)),
                "Customer L1 fees": str(result.fee_totals.get("customer_l1", 0)),
                "Customer L2 fees": str(result.fee_totals.get("customer_l2", 0)),
                "Merchant L2 fees": str(result.fee_totals.get("merchant_l2", 0)),
                "Unit": result.unit,
            }
        )
        rows.append(row)
    table = pd.DataFrame(rows, columns=list(COLUMNS), dtype=str)
    return ComparisonReport(list(results), table)


def _results_json(results: Sequence[RunResult]) -> str:
    return json.dumps([r.to_dict() for r in results], indent=2, sort_keys=True) + "\n"


def emit_report(results: Sequence[RunResult], out_dir: Union[str, Path]) -> Dict[str, Path]:
    """
    Write ``report.md``, ``report.csv`` and ``results.json`` into *out_dir*.

    When the results carry event logs, their merged records (tagged with
    the backend) are written to ``events.jsonl`` as well.

    Returns:
        Mapping of artifact name to written path.

    Raises:
        EmptyResultsError: If *results* is empty.
    """
    report = build_report(results)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = {}
    for name, text in (
        (REPORT_MD, report.to_markdown()),
        (REPORT_CSV, report.to_csv()),
        (RESULTS_JSON, _results_json(results)),
    ):
        path = out / name
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        written[name] = path

    if any(len(r.events) for r in results):
        merged = EventLog()
        for result in results:
            merged.extend(result.events, backend=result.backend)
        written[EVENTS_JSONL] = merged.write(out / EVENTS_JSONL)
    logger.info("Wrote comparison report for %d backends to %s", len(results), out)
    return written


def load_results(results_dir: Union[str, Path]) -> List[RunResult]:
    """
    Read ``results.json`` from a directory written by :func:`emit_report`.

    Raises:
        EmptyResultsError: If the file is missing or lists no results.
        InvalidParamsError: If the file is not valid JSON.
    """
    path = Path(results_dir) / RESULTS_JSON
    if not path.exists():
        raise EmptyResultsError(f"no {RESULTS_JSON} in {results_dir}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise InvalidParamsError(f"Invalid JSON in {path}: {e}") from e
    if not data:
        raise EmptyResultsError(f"{path} lists no results")
    return [RunResult.from_dict(item) for item in data]
