"""
Layer-1 chain parameters, presets and capacity calculators.

Capacity follows the block-space argument: a block of ``B`` bytes holds
``TPB = B / avg_tx_size`` transactions, and one block every ``TB`` seconds
gives ``TPS = TPB / TB``. Blocks cannot be produced faster than the network
relays them, so a configuration is only sound when ``TB >= TR``.

All rationals are :class:`fractions.Fraction`; money is integer smallest
units (satoshi, wei).
"""

import json
import logging
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Union

from ..errors import InvalidParamsError

logger = logging.getLogger(__name__)

SAT_PER_BTC = 10**8
WEI_PER_GWEI = 10**9
WEI_PER_ETH = 10**18
SECONDS_PER_DAY = 86_400

_PRESET_DIR = Path(__file__).parent.parent / "data" / "presets"

_REQUIRED_KEYS = (
    "block_size_bytes",
    "block_interval_s",
    "relay_time_s",
    "avg_tx_size_bytes",
    "gas_limit_per_block",
    "gas_per_byte",
)
_OPTIONAL_KEYS = ("avg_block_time_s", "name", "description", "currency", "unit")


def to_fraction(value: Any, what: str = "value") -> Fraction:
    """Parse ints, decimal strings, ``"n/d"`` strings and floats exactly."""
    if isinstance(value, bool):
        raise InvalidParamsError(f"{what} must be numeric, got a boolean")
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(repr(value))
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except ValueError as e:
            raise InvalidParamsError(f"{what} is not a number: {value!r}") from e
    raise InvalidParamsError(f"{what} must be numeric, got {type(value).__name__}")


def _to_int(value: Any, what: str) -> int:
    frac = to_fraction(value, what)
    if frac.denominator != 1:
        raise InvalidParamsError(f"{what} must be an integer, got {value!r}")
    return int(frac)


@dataclass(frozen=True)
class ChainParams:
    """
    Capacity and fee-model parameters of a simulated L1 chain.

    ``avg_block_time_s`` defaults to ``block_interval_s``. Every field must
    be strictly positive; the relay constraint is checked separately by
    :func:`check_relay_constraint` because sub-relay configurations are legal
    inputs to study.

    Example:
        >>> p = ChainParams(1_048_576, 600, 14, 380, 1_048_576, 1)
        >>> tps_capacity(p).tps
        Fraction(32768, 7125)
    """

    block_size_bytes: int
    block_interval_s: Fraction
    relay_time_s: Fraction
    avg_tx_size_bytes: int
    gas_limit_per_block: int
    gas_per_byte: int
    avg_block_time_s: Optional[Fraction] = None
    name: str = "custom"
    currency: str = "native"
    unit: str = "unit"
    description: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        ints = ("block_size_bytes", "avg_tx_size_bytes", "gas_limit_per_block", "gas_per_byte")
        rationals = ("block_interval_s", "relay_time_s")
        for name in ints:
            object.__setattr__(self, name, _to_int(getattr(self, name), name))
        for name in rationals:
            object.__setattr__(self, name, to_fraction(getattr(self, name), name))
        if self.avg_block_time_s is None:
            object.__setattr__(self, "avg_block_time_s", self.block_interval_s)
        else:
            object.__setattr__(
                self, "avg_block_time_s", to_fraction(self.avg_block_time_s, "avg_block_time_s")
            )
        for name in ints + rationals + ("avg_block_time_s",):
            if getattr(self, name) <= 0:
                raise InvalidParamsError(f"{name} must be strictly positive, got {getattr(self, name)}")

    def replace(self, **changes: Any) -> "ChainParams":
        values = asdict(self)
        values.update(changes)
        if "block_interval_s" in changes and "avg_block_time_s" not in changes:
            values["avg_block_time_s"] = None
        return ChainParams(**values)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "block_size_bytes": self.block_size_bytes,
            "block_interval_s": str(self.block_interval_s),
            "relay_time_s": str(self.relay_time_s),
            "avg_tx_size_bytes": self.avg_tx_size_bytes,
            "gas_limit_per_block": self.gas_limit_per_block,
            "gas_per_byte": self.gas_per_byte,
            "avg_block_time_s": str(self.avg_block_time_s),
        }


@dataclass(frozen=True)
class Capacity:
    """Transactions per block and per second."""

    tpb: Fraction
    tps: Fraction

    def to_dict(self) -> Dict[str, str]:
        return {"tpb": str(self.tpb), "tps": str(self.tps)}


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------


def available_presets() -> List[str]:
    """Names of the chain presets shipped with the package."""
    return sorted(p.stem for p in _PRESET_DIR.glob("*.json"))


@lru_cache(maxsize=None)
def _read_preset(name: str) -> Dict[str, Any]:
    filepath = _PRESET_DIR / f"{name}.json"
    if not filepath.exists():
        available = ", ".join(available_presets())
        raise InvalidParamsError(f"Unknown chain preset '{name}'. Available presets: {available}")
    try:
        with open(filepath, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise InvalidParamsError(f"Invalid JSON in preset file {filepath}: {e}") from e


def params_from_mapping(data: Mapping[str, Any], name: str = "custom") -> ChainParams:
    """
    Build :class:`ChainParams` from a JSON-style mapping.

    Raises:
        InvalidParamsError: On missing or unknown keys, or invalid values.
    """
    unknown = set(data) - set(_REQUIRED_KEYS) - set(_OPTIONAL_KEYS)
    if unknown:
        raise InvalidParamsError(f"Unknown chain parameter keys: {', '.join(sorted(unknown))}")
    missing = [k for k in _REQUIRED_KEYS if k not in data]
    if missing:
        raise InvalidParamsError(f"Missing chain parameter keys: {', '.join(missing)}")
    kwargs = {k: data[k] for k in _REQUIRED_KEYS}
    for key in _OPTIONAL_KEYS:
        if key in data:
            kwargs[key] = data[key]
    kwargs.setdefault("name", name)
    return ChainParams(**kwargs)


def load_chain_params(preset: Union[str, Mapping[str, Any], ChainParams]) -> ChainParams:
    """
    Resolve a preset name, an inline mapping or a ready object.

    Example:
        >>> load_chain_params("bitcoin-2021").block_size_bytes
        1048576
    """
    if isinstance(preset, ChainParams):
        return preset
    if isinstance(preset, str):
        return params_from_mapping(_read_preset(preset), name=preset)
    if isinstance(preset, Mapping):
        return params_from_mapping(preset)
    raise InvalidParamsError(f"Cannot build chain parameters from {type(preset).__name__}")


# ---------------------------------------------------------------------------
# Calculators
# ---------------------------------------------------------------------------


def tps_capacity(params: ChainParams) -> Capacity:
    """
    Block-space capacity of *params*.

    Returns:
        ``Capacity(tpb=B / avg_tx_size, tps=tpb / TB)``, both exact.

    Example:
        >>> cap = tps_capacity(load_chain_params("bitcoin-2021"))
        >>> round(float(cap.tpb)), round(float(cap.tps), 1)
        (2759, 4.6)
    """
    tpb = Fraction(params.block_size_bytes, params.avg_tx_size_bytes)
    return Capacity(tpb=tpb, tps=tpb / params.block_interval_s)


def check_relay_constraint(params: ChainParams) -> bool:
    """True iff blocks are not produced faster than they propagate."""
    return params.block_interval_s >= params.relay_time_s


def byte_fee(size_bytes: int, feerate: int) -> int:
    """Fee of a byte-priced transaction: ``size_bytes * feerate``."""
    if size_bytes < 0 or feerate < 0:
        raise ValueError("size_bytes and feerate must be non-negative")
    return int(size_bytes) * int(feerate)


def gas_fee(gas: int, gas_price: int) -> int:
    """Fee of a gas-priced transaction in the chain's smallest unit."""
    if gas < 0 or gas_price < 0:
        raise ValueError("gas and gas_price must be non-negative")
    return int(gas) * int(gas_price)


def gwei(amount: Union[int, str, Fraction]) -> int:
    """Convert a Gwei figure to wei, exactly."""
    wei = to_fraction(amount, "gwei") * WEI_PER_GWEI
    if wei.denominator != 1:
        raise ValueError(f"{amount} Gwei is not a whole number of wei")
    return int(wei)


def to_native(amount: int, per_unit: int = WEI_PER_ETH) -> Fraction:
    """Smallest-unit integer to native units (ETH, BTC) as an exact rational."""
    return Fraction(amount, per_unit)


def improvement_ratio(l2_tps: Fraction, l1_tps: Fraction) -> Fraction:
    """How many times the L2 throughput exceeds the L1 one."""
    if l1_tps <= 0:
        raise InvalidParamsError("l1_tps must be positive")
    return Fraction(l2_tps) / Fraction(l1_tps)
