"""
Supermarket workload: stores with cash registers emitting payments.

Each register is an independent Poisson process with mean inter-payment
time ``mean_interpayment_s``. The default shape (400 stores, 10 registers,
a payment every two minutes per register) needs ``10 / 120`` TPS per store
and about 33 TPS overall.
"""

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..chain.params import to_fraction
from ..errors import InvalidParamsError

logger = logging.getLogger(__name__)

_MICROSECONDS = 10**6


@dataclass(frozen=True)
class WorkloadSpec:
    """
    Shape of a benchmark workload.

    Amounts are in hundred-millionths of the backend's native unit
    (satoshi on Bitcoin); backends scale them to their smallest unit.

    Args:
        stores: Number of stores.
        registers_per_store: Cash registers in each store.
        mean_interpayment_s: Mean seconds between two payments at one register.
        total_txs: Payments generated per run; zero yields an empty workload.
        payment_amount_range: Inclusive ``(min, max)`` payment amount.
        seed: Seed of the arrival and amount generator.
    """

    stores: int = 400
    registers_per_store: int = 10
    mean_interpayment_s: Fraction = Fraction(120)
    total_txs: int = 200
    payment_amount_range: Tuple[int, int] = (10_000, 1_000_000)
    seed: int = 42

    def __post_init__(self) -> None:
        object.__setattr__(self, "mean_interpayment_s", to_fraction(self.mean_interpayment_s, "mean_interpayment_s"))
        object.__setattr__(self, "payment_amount_range", tuple(int(v) for v in self.payment_amount_range))
        if self.stores <= 0 or self.registers_per_store <= 0:
            raise InvalidParamsError("stores and registers_per_store must be positive")
        if self.mean_interpayment_s <= 0:
            raise InvalidParamsError("mean_interpayment_s must be positive")
        if self.total_txs < 0:
            raise InvalidParamsError("total_txs must be non-negative")
        if len(self.payment_amount_range) != 2:
            raise InvalidParamsError("payment_amount_range must be a [min, max] pair")
        low, high = self.payment_amount_range
        if low <= 0 or low > high:
            raise InvalidParamsError(f"invalid payment_amount_range {list(self.payment_amount_range)}")
        if not 0 <= self.seed < 2**64:
            raise InvalidParamsError("seed must be a 64-bit unsigned integer")

    @classmethod
    def from_dict(cls, data: Dict[str, object]) -> "WorkloadSpec":
        """Build a spec from a scenario mapping, rejecting unknown keys."""
        known = {"stores", "registers_per_store", "mean_interpayment_s", "total_txs", "payment_amount_range", "seed"}
        unknown = set(data) - known
        if unknown:
            raise InvalidParamsError(f"Unknown workload keys: {', '.join(sorted(unknown))}")
        return cls(**data)  # type: ignore[arg-type]

    def replace(self, **changes: object) -> "WorkloadSpec":
        fields = {
            "stores": self.stores,
            "registers_per_store": self.registers_per_store,
            "mean_interpayment_s": self.mean_interpayment_s,
            "total_txs": self.total_txs,
            "payment_amount_range": self.payment_amount_range,
            "seed": self.seed,
        }
        fields.update(changes)
        return WorkloadSpec(**fields)  # type: ignore[arg-type]

    def to_dict(self) -> Dict[str, object]:
        return {
            "stores": self.stores,
            "registers_per_store": self.registers_per_store,
            "mean_interpayment_s": str(self.mean_interpayment_s),
            "total_txs": self.total_txs,
            "payment_amount_range": list(self.payment_amount_range),
            "seed": self.seed,
        }


SUBMISSION_MODES = ("burst", "paced")


@dataclass(frozen=True)
class BenchConfig:
    """
    How a benchmark drives its backends.

    Args:
        mode: ``"burst"`` submits every intent at the start of the run as one
            bundle of payments; ``"paced"`` submits each intent at its
            arrival time.
        hop_latency_s: One-way message latency per channel hop.
        hub_service_s: Time the routing node spends forwarding one payment.
        rollup_seal_interval_s: Interval between two rollup batch seals.
        plasma_block_interval_s: Child block interval (Plasma default when unset).
        l1_preset: Chain preset of the ``l1-direct`` backend.
        max_wait_s: Simulated time after the last submission before
            outstanding payments are recorded as failures.
        workers: Threads used by :func:`~l2sim.bench.runner.run_many`.
    """

    mode: str = "burst"
    hop_latency_s: Fraction = Fraction(1, 20)
    hub_service_s: Fraction = Fraction(1, 100)
    rollup_seal_interval_s: Fraction = Fraction(1)
    plasma_block_interval_s: Optional[Fraction] = None
    l1_preset: str = "bitcoin-2021"
    max_wait_s: Fraction = Fraction(86_400)
    workers: int = 1

    def __post_init__(self) -> None:
        if self.mode not in SUBMISSION_MODES:
            raise InvalidParamsError(f"mode must be one of {', '.join(SUBMISSION_MODES)}, got '{self.mode}'")
        for name in ("hop_latency_s", "hub_service_s", "rollup_seal_interval_s", "max_wait_s"):
            object.__setattr__(self, name, to_fraction(getattr(self, name), name))
        if self.plasma_block_interval_s is not None:
            interval = to_fraction(self.plasma_block_interval_s, "plasma_block_interval_s")
            if interval <= 0:
                raise InvalidParamsError("plasma_block_interval_s must be positive")
            object.__setattr__(self, "plasma_block_interval_s", interval)
        if self.hop_latency_s < 0 or self.hub_service_s < 0:
            raise InvalidParamsError("latencies must be non-negative")
        if self.rollup_seal_interval_s <= 0 or self.max_wait_s <= 0:
            raise InvalidParamsError("rollup_seal_interval_s and max_wait_s must be positive")
        if self.workers < 1:
            raise InvalidParamsError("workers must be at least 1")

    @classmethod
    def from_dict(cls, data: Dict[str, object]) -> "BenchConfig":
        """Build a config from a scenario mapping, rejecting unknown keys."""
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidParamsError(f"Unknown bench config keys: {', '.join(sorted(unknown))}")
        return cls(**data)  # type: ignore[arg-type]

    def to_dict(self) -> Dict[str, object]:
        interval = self.plasma_block_interval_s
        return {
            "mode": self.mode,
            "hop_latency_s": str(self.hop_latency_s),
            "hub_service_s": str(self.hub_service_s),
            "rollup_seal_interval_s": str(self.rollup_seal_interval_s),
            "plasma_block_interval_s": None if interval is None else str(interval),
            "l1_preset": self.l1_preset,
            "max_wait_s": str(self.max_wait_s),
            "workers": self.workers,
        }


@dataclass(frozen=True)
class PaymentIntent:
    """One customer paying at one register; ``t`` is seconds from the run start."""

    seq: int
    t: Fraction
    store: int
    register: int
    customer: str
    amount: int


def required_throughput(spec: WorkloadSpec) -> Dict[str, Fraction]:
    """
    Dedicated throughput the workload needs.

    Returns:
        ``{"per_store_tps", "total_tps"}`` as exact fractions.

    Example:
        >>> r = required_throughput(WorkloadSpec())
        >>> r["per_store_tps"], round(float(r["total_tps"]), 2)
        (Fraction(1, 12), 33.33)
    """
    per_store = Fraction(spec.registers_per_store) / spec.mean_interpayment_s
    return {"per_store_tps": per_store, "total_tps": per_store * spec.stores}


def generate_workload(spec: WorkloadSpec) -> List[PaymentIntent]:
    """
    Generate the first ``total_txs`` payments of the merged register processes.

    Per register, the arrival count over a horizon is Poisson and the
    arrival times are uniform within it. The horizon doubles until it
    holds enough arrivals. Times are rounded to microseconds; ties are
    ordered by store and register.

    Example:
        >>> intents = generate_workload(WorkloadSpec(total_txs=3, seed=1))
        >>> [i.seq for i in intents], intents[0].t <= intents[1].t <= intents[2].t
        ([0, 1, 2], True)
    """
    if spec.total_txs == 0:
        return []
    rng = np.random.default_rng(spec.seed)
    registers = spec.stores * spec.registers_per_store
    rate = 1.0 / float(spec.mean_interpayment_s)
    horizon = 2.0 * spec.total_txs / (rate * registers)

    while True:
        counts = rng.poisson(rate * horizon, size=registers)
        if int(counts.sum()) >= spec.total_txs:
            break
        horizon *= 2.0

    register_ids = np.repeat(np.arange(registers), counts)
    micros = np.rint(rng.uniform(0.0, horizon, size=register_ids.size) * _MICROSECONDS).astype(np.int64)
    order = np.lexsort((register_ids, micros))[: spec.total_txs]

    low, high = spec.payment_amount_range
    amounts = rng.integers(low, high + 1, size=spec.total_txs)
    intents = []
    for seq, idx in enumerate(order):
        store, register = divmod(int(register_ids[idx]), spec.registers_per_store)
        intents.append(
            PaymentIntent(
                seq=seq,
                t=Fraction(int(micros[idx]), _MICROSECONDS),
                store=store,
                register=register,
                customer=f"cust-{seq:05d}",
                amount=int(amounts[seq]),
            )
        )
    logger.debug("Generated %d intents over %.1f s", len(intents), float(intents[-1].t))
    return intents


def mean_interarrival_s(intents: List[PaymentIntent]) -> Fraction:
    """Mean gap between consecutive intents."""
    if len(intents) < 2:
        raise ValueError("need at least two intents")
    return (intents[-1].t - intents[0].t) / (len(intents) - 1)
