"""
l2sim: deterministic simulators and calculators for blockchain layer-2 systems.

The package models a Layer-1 chain and three families of off-chain scaling
built on it: payment channels, Plasma child chains and rollups (zk and
optimistic). A supermarket benchmark compares them on throughput, latency
and fees; closed-form calculators reproduce block-space throughput figures.

All randomness flows from explicit seeds and time is simulated with exact
rationals, so two runs with the same inputs write byte-identical artifacts.
"""

import logging

__version__ = "0.1.0"

logger = logging.getLogger(__name__)

from .bench import (  # noqa: E402
    BenchConfig,
    RunResult,
    WorkloadSpec,
    emit_report,
    fee_burden,
    run_benchmark,
    run_many,
)
from .chain import ChainParams, L1Chain, load_chain_params, tps_capacity  # noqa: E402
from .channels import ChannelConfig, ChannelNetwork  # noqa: E402
from .errors import L2SimError  # noqa: E402
from .events import EventLog  # noqa: E402
from .logging import setup_logging  # noqa: E402
from .plasma import PlasmaChain, PlasmaConfig, plasma_throughput_estimate  # noqa: E402
from .rollup import RollupContract, RollupOperator, RollupParams, rollup_throughput  # noqa: E402
from .scenario import Scenario, load_scenario, run_scenario  # noqa: E402

__all__ = [
    "BenchConfig",
    "ChainParams",
    "ChannelConfig",
    "ChannelNetwork",
    "EventLog",
    "L1Chain",
    "L2SimError",
    "PlasmaChain",
    "PlasmaConfig",
    "RollupContract",
    "RollupOperator",
    "RollupParams",
    "RunResult",
    "Scenario",
    "WorkloadSpec",
    "emit_report",
    "fee_burden",
    "load_chain_params",
    "load_scenario",
    "plasma_throughput_estimate",
    "rollup_throughput",
    "run_benchmark",
    "run_many",
    "run_scenario",
    "setup_logging",
    "tps_capacity",
]

try:
    import click  # noqa: F401

    CLI_AVAILABLE = True
except ImportError:
    CLI_AVAILABLE = False
