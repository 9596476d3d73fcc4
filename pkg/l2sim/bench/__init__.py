"""
Supermarket benchmark across payment systems.

Classes:
    WorkloadSpec: Stores, registers, arrival rate, amounts and seed
    BenchConfig: Submission mode and backend timing
    RunResult: Throughput, latency, fees, failures and accounting of one run
    ComparisonReport: Qualitative and measured comparison table
    FeeBurden: Itemized fees paid by customers and the merchant
"""

from .backends import BACKEND_TYPES, Backend, Execution, make_backend
from .fees import BACKENDS, L2_BACKENDS, FeeBurden, fee_burden, load_fee_schedule
from .report import ComparisonReport, build_report, emit_report, load_descriptors, load_results
from .runner import RunResult, latency_stats, run_benchmark, run_many
from .workload import (
    BenchConfig,
    PaymentIntent,
    WorkloadSpec,
    generate_workload,
    mean_interarrival_s,
    required_throughput,
)

__all__ = [
    "BACKENDS",
    "BACKEND_TYPES",
    "Backend",
    "BenchConfig",
    "ComparisonReport",
    "Execution",
    "FeeBurden",
    "L2_BACKENDS",
    "PaymentIntent",
    "RunResult",
    "WorkloadSpec",
    "build_report",
    "emit_report",
    "fee_burden",
    "generate_workload",
    "latency_stats",
    "load_descriptors",
    "load_fee_schedule",
    "load_results",
    "make_backend",
    "mean_interarrival_s",
    "required_throughput",
    "run_benchmark",
    "run_many",
]
