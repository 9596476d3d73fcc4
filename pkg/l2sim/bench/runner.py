"""Benchmark runner: execute a workload on one or several backends."""

import concurrent.futures
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, List, Mapping, Optional, Sequence

import numpy as np

from ..events import EventLog
from .backends import make_backend
from .workload import BenchConfig, WorkloadSpec, generate_workload, required_throughput

logger = logging.getLogger(__name__)

LATENCY_KEYS = ("mean", "p50", "p95", "max")


@dataclass
class RunResult:
    """
    Measured outcome of one backend run.

    ``achieved_tps`` is completed payments over the simulated seconds from
    the first submission to the last completion. Latency runs from
    submission to L2 finality. Fee totals are in the backend's smallest
    unit; ``accounting`` holds the closure of customer debits against
    merchant credits plus fees over the measured period.
    """

    backend: str
    mode: str
    submitted: int
    completed: int
    elapsed_s: Fraction
    achieved_tps: Fraction
    required_tps: Fraction
    latency_ms: Dict[str, Optional[float]]
    fee_totals: Dict[str, int]
    failures: List[Dict[str, Any]] = field(default_factory=list)
    accounting: Dict[str, Any] = field(default_factory=dict)
    currency: str = ""
    unit: str = ""
    details: Dict[str, Any] = field(default_factory=dict)
    events: EventLog = field(default_factory=EventLog, repr=False, compare=False)

    @property
    def meets_requirement(self) -> bool:
        return self.completed > 0 and self.achieved_tps >= self.required_tps

    def to_dict(self) -> Dict[str, Any]:
        return {
            "backend": self.backend,
            "mode": self.mode,
            "submitted": self.submitted,
            "completed": self.completed,
            "elapsed_s": str(self.elapsed_s),
            "achieved_tps": str(self.achieved_tps),
            "achieved_tps_decimal": round(float(self.achieved_tps), 6),
            "required_tps": str(self.required_tps),
            "meets_requirement": self.meets_requirement,
            "latency_ms": dict(self.latency_ms),
            "fee_totals": dict(self.fee_totals),
            "failures": [dict(f) for f in self.failures],
            "accounting": dict(self.accounting),
            "currency": self.currency,
            "unit": self.unit,
            "details": dict(self.details),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RunResult":
        """Rebuild a result written by :meth:`to_dict` (events are not kept)."""
        return cls(
            backend=data["backend"],
            mode=data["mode"],
            submitted=int(data["submitted"]),
            completed=int(data["completed"]),
            elapsed_s=Fraction(data["elapsed_s"]),
            achieved_tps=Fraction(data["achieved_tps"]),
            required_tps=Fraction(data["required_tps"]),
            latency_ms=dict(data["latency_ms"]),
            fee_totals={k: int(v) for k, v in data["fee_totals"].items()},
            failures=[dict(f) for f in data.get("failures", [])],
            accounting=dict(data.get("accounting", {})),
            currency=data.get("currency", ""),
            unit=data.get("unit", ""),
            details=dict(data.get("details", {})),
        )


def latency_stats(latencies_s: Sequence[Fraction]) -> Dict[str, Optional[float]]:
    """
    Mean, median, 95th percentile and maximum latency in milliseconds.

    Example:
        >>> latency_stats([Fraction(1, 10), Fraction(3, 10)])["mean"]
        200.0
        >>> latency_stats([])["p95"] is None
        True
    """
    if not latencies_s:
        return {key: None for key in LATENCY_KEYS}
    ms = np.array([float(lat * 1000) for lat in latencies_s], dtype=float)
    return {
        "mean": round(float(ms.mean()), 3),
        "p50": round(float(np.percentile(ms, 50)), 3),
        "p95": round(float(np.percentile(ms, 95)), 3),
        "max": round(float(ms.max()), 3),
    }


def run_benchmark(backend: str, spec: WorkloadSpec, config: Optional[BenchConfig] = None) -> RunResult:
    """
    Run the workload of *spec* on *backend*.

    Every intent goes through the backend's native payment path; payments
    that fail or do not reach finality before ``config.max_wait_s`` are
    listed in ``failures`` and never counted as completed.

    Args:
        backend: ``channels``, ``plasma``, ``rollup-zk``, ``rollup-optimistic``
            or ``l1-direct``.
        spec: Workload shape and seed.
        config: Submission mode and backend timing.

    Raises:
        BackendMisconfiguredError: For an unknown backend or missing fee schedule.

    Example:
        >>> result = run_benchmark("channels", WorkloadSpec(total_txs=20))
        >>> result.completed, result.accounting["balanced"]
        (20, True)
    """
    config = config or BenchConfig()
    intents = generate_workload(spec)
    engine = make_backend(backend, config, spec.seed)
    logger.info("Running %d payments on %s (%s mode)", len(intents), backend, config.mode)
    ex = engine.run(intents)

    latencies = [ex.completed[seq] - ex.submitted[seq] for seq in sorted(ex.completed)]
    if ex.completed:
        elapsed = max(ex.completed.values()) - min(ex.submitted.values())
    else:
        elapsed = Fraction(0)
    tps = Fraction(len(ex.completed)) / elapsed if elapsed > 0 else Fraction(0)
    failures = [{"seq": seq, "reason": ex.failures[seq]} for seq in sorted(ex.failures)]

    return RunResult(
        backend=backend,
        mode=config.mode,
        submitted=len(intents),
        completed=len(ex.completed),
        elapsed_s=elapsed,
        achieved_tps=tps,
        required_tps=required_throughput(spec)["total_tps"],
        latency_ms=latency_stats(latencies),
        fee_totals=dict(ex.fees),
        failures=failures,
        accounting=dict(ex.accounting),
        currency=ex.currency,
        unit=ex.unit,
        details=dict(ex.details),
        events=engine.events,
    )


def run_many(
    backends: Sequence[str],
    spec: WorkloadSpec,
    config: Optional[BenchConfig] = None,
) -> List[RunResult]:
    """
    Run independent simulations of *spec*, one per backend.

    With ``config.workers > 1`` the runs execute on a thread pool. Results
    come back in the order of *backends* either way.
    """
    config = config or BenchConfig()
    if config.workers == 1 or len(backends) < 2:
        return [run_benchmark(name, spec, config) for name in backends]
    with concurrent.futures.ThreadPoolExecutor(max_workers=config.workers) as executor:
        futures = [executor.submit(run_benchmark, name, spec, config) for name in backends]
        return [future.result() for future in futures]
