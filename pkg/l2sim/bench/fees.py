"""
Backend fee schedules and the per-backend fee burden of a workload.

Schedules ship as ``l2sim/data/fee_schedules.json`` and describe what each
backend pays on L1 and off-chain: channel open/close sizes and feerate,
Plasma deposit/exit/transfer gas and prices, rollup deposit gas and
off-chain fees, and direct L1 transfer prices per chain preset.
"""

import json
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, Optional

from ..chain.params import byte_fee, gas_fee, gwei, load_chain_params
from ..channels.network import ChannelConfig
from ..errors import BackendMisconfiguredError, InvalidParamsError
from ..plasma.chain import PlasmaConfig
from ..rollup.capacity import batch_fee_split
from ..rollup.params import RollupMode, RollupParams
from .workload import WorkloadSpec

logger = logging.getLogger(__name__)

_SCHEDULE_FILE = Path(__file__).parent.parent / "data" / "fee_schedules.json"

L2_BACKENDS = ("channels", "plasma", "rollup-zk", "rollup-optimistic")
BACKENDS = L2_BACKENDS + ("l1-direct",)
NATIVE_SUBUNITS = 10**8


@lru_cache(maxsize=None)
def _read_schedules() -> Dict[str, Any]:
    if not _SCHEDULE_FILE.exists():
        raise InvalidParamsError(f"Fee schedule file not found: {_SCHEDULE_FILE}")
    try:
        with open(_SCHEDULE_FILE, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise InvalidParamsError(f"Invalid JSON in fee schedule file {_SCHEDULE_FILE}: {e}") from e


def load_fee_schedule(backend: str, l1_preset: str = "bitcoin-2021") -> Dict[str, Any]:
    """
    Fee schedule of *backend*; ``l1-direct`` schedules are keyed by chain preset.

    Raises:
        BackendMisconfiguredError: For an unknown backend or preset.
    """
    schedules = _read_schedules()
    if backend not in schedules:
        raise BackendMisconfiguredError(f"Unknown backend '{backend}'. Available: {', '.join(BACKENDS)}")
    schedule = schedules[backend]
    if backend == "l1-direct":
        if l1_preset not in schedule:
            raise BackendMisconfiguredError(f"No direct-payment fee schedule for preset '{l1_preset}'")
        return dict(schedule[l1_preset], chain_preset=l1_preset)
    return dict(schedule)


def amount_scale(schedule: Dict[str, Any]) -> int:
    """Smallest units per workload amount unit (1 for satoshi, 10**10 for wei)."""
    per_unit = int(schedule["per_unit"])
    if per_unit % NATIVE_SUBUNITS:
        raise BackendMisconfiguredError(f"per_unit {per_unit} is not a multiple of {NATIVE_SUBUNITS}")
    return per_unit // NATIVE_SUBUNITS


# ---------------------------------------------------------------------------
# Backend configuration from schedules
# ---------------------------------------------------------------------------


def channel_config(schedule: Dict[str, Any]) -> ChannelConfig:
    return ChannelConfig(
        open_tx_bytes=schedule["open_tx_bytes"],
        close_tx_bytes=schedule["close_tx_bytes"],
        feerate=schedule["feerate"],
    )


def plasma_config(schedule: Dict[str, Any], block_interval_s: Optional[Fraction] = None) -> PlasmaConfig:
    kwargs: Dict[str, Any] = {
        "l1_gas_price": gwei(schedule["l1_gas_price_gwei"]),
        "deposit_gas": schedule["deposit_gas"],
        "exit_gas": schedule["exit_gas"],
        "child_gas_price": gwei(schedule["child_gas_price_gwei"]),
        "transfer_gas": schedule["transfer_gas"],
    }
    if block_interval_s is not None:
        kwargs["block_interval_s"] = Fraction(block_interval_s)
    return PlasmaConfig(**kwargs)


def rollup_params(backend: str, schedule: Dict[str, Any], batch_interval_s: Optional[Fraction] = None) -> RollupParams:
    mode = RollupMode.ZK if backend == "rollup-zk" else RollupMode.OPTIMISTIC
    kwargs: Dict[str, Any] = {
        "mode": mode,
        "l1_gas_price": gwei(schedule["l1_gas_price_gwei"]),
        "deposit_gas": schedule["deposit_gas"],
        "transfer_fee": schedule["transfer_fee"],
        "withdrawal_fee": schedule["withdrawal_fee"],
    }
    if batch_interval_s is not None:
        kwargs["batch_interval_s"] = batch_interval_s
    return RollupParams(**kwargs)


def l1_transfer_fee(schedule: Dict[str, Any]) -> int:
    """Fee of one direct L1 payment of average size on the schedule's chain."""
    params = load_chain_params(schedule["chain_preset"])
    if "feerate" in schedule:
        return byte_fee(params.avg_tx_size_bytes, schedule["feerate"])
    return gas_fee(schedule["transfer_gas"], gwei(schedule["gas_price_gwei"]))


# ---------------------------------------------------------------------------
# Fee burden
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FeeBurden:
    """
    Who pays what to use a backend, in the backend's smallest unit.

    ``merchant_periodic`` is the recurring cost of moving the merchant's
    takings back to L1 (closing and reopening the routing channel, or one
    withdrawal).
    """

    backend: str
    currency: str
    unit: str
    per_unit: int
    customer_one_time: int
    customer_per_tx: int
    merchant_per_tx: int
    merchant_periodic: int = 0
    items: Dict[str, int] = field(default_factory=dict)

    def native(self, value: int) -> Fraction:
        return Fraction(value, self.per_unit)

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"backend": self.backend, "currency": self.currency, "unit": self.unit}
        for name in ("customer_one_time", "customer_per_tx", "merchant_per_tx", "merchant_periodic"):
            value = getattr(self, name)
            out[name] = value
            out[f"{name}_native"] = str(self.native(value))
        out["items"] = dict(sorted(self.items.items()))
        return out


def fee_burden(backend: str, spec: Optional[WorkloadSpec] = None, l1_preset: str = "bitcoin-2021") -> FeeBurden:
    """
    Itemized fee burden of *backend*.

    Channels: customers pay the open and close transactions; the merchant
    absorbs the routing fee of every hop. Plasma: customers pay the deposit
    and the exit; the merchant absorbs the child transfer fee. Rollups:
    customers pay the deposit; the merchant absorbs the off-chain transfer
    fee, which covers the publisher's share of the batch cost.

    Args:
        backend: One of :data:`BACKENDS`.
        spec: Workload whose ``total_txs`` sizes the rollup batch (default
            spec when omitted).
        l1_preset: Chain preset of the ``l1-direct`` backend.

    Raises:
        BackendMisconfiguredError: For an unknown backend.

    Example:
        >>> burden = fee_burden("channels")
        >>> burden.items["open"], burden.items["close"]
        (23500, 30000)
        >>> str(fee_burden("rollup-zk").native(fee_burden("rollup-zk").customer_one_time))
        '27/16000'
    """
    spec = spec or WorkloadSpec()
    schedule = load_fee_schedule(backend, l1_preset)
    head = {"backend": backend, "currency": schedule["currency"], "unit": schedule["unit"], "per_unit": schedule["per_unit"]}

    if backend == "channels":
        config = channel_config(schedule)
        hop = schedule["hop_base_fee"]
        items = {"open": config.open_fee, "close": config.close_fee, "routing_per_hop": hop}
        return FeeBurden(
            **head,
            customer_one_time=config.open_fee + config.close_fee,
            customer_per_tx=0,
            merchant_per_tx=hop,
            merchant_periodic=config.open_fee + config.close_fee,
            items=items,
        )

    if backend == "plasma":
        config = plasma_config(schedule)
        deposit, exit_fee = config.l1_fee(config.deposit_gas), config.l1_fee(config.exit_gas)
        items = {"deposit": deposit, "withdraw": exit_fee, "transfer": config.transfer_fee}
        return FeeBurden(
            **head,
            customer_one_time=deposit + exit_fee,
            customer_per_tx=0,
            merchant_per_tx=config.transfer_fee,
            merchant_periodic=exit_fee,
            items=items,
        )

    if backend in ("rollup-zk", "rollup-optimistic"):
        params = rollup_params(backend, schedule)
        l1 = load_chain_params(schedule["chain_preset"])
        items = {"deposit": params.deposit_fee, "transfer": params.transfer_fee, "withdrawal": params.withdrawal_fee}
        if spec.total_txs:
            batch_cost = gas_fee(params.batch_gas(spec.total_txs, l1.gas_per_byte), params.l1_gas_price)
            items["batch_share"] = batch_fee_split(batch_cost, spec.total_txs)[0]
        return FeeBurden(
            **head,
            customer_one_time=params.deposit_fee,
            customer_per_tx=0,
            merchant_per_tx=params.transfer_fee,
            merchant_periodic=params.withdrawal_fee,
            items=items,
        )

    fee = l1_transfer_fee(schedule)
    return FeeBurden(**head, customer_one_time=0, customer_per_tx=fee, merchant_per_tx=0, items={"transfer": fee})
