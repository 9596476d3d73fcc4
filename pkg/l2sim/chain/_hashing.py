"""
Hashing and canonical serialization primitives shared across l2sim.

Internal module. SHA-256 is the single hash for the whole build. Leaves and
interior merkle nodes are domain separated by a one-byte prefix so a leaf can
never be reinterpreted as an interior node.
"""

import dataclasses
import hashlib
import json
from enum import Enum
from fractions import Fraction
from typing import Any

HASH_SIZE = 32
LEAF_PREFIX = b"\x00"
NODE_PREFIX = b"\x01"
ZERO_HASH = b"\x00" * HASH_SIZE

# Root committed for blocks and states without leaves.
EMPTY_ROOT = hashlib.sha256(b"l2sim/empty-tree").digest()


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def hash_leaf(data: bytes) -> bytes:
    """Hash raw data into a leaf (``H(0x00 || data)``)."""
    return hashlib.sha256(LEAF_PREFIX + data).digest()


def hash_node(left: bytes, right: bytes) -> bytes:
    """Combine two child hashes into an interior node (``H(0x01 || l || r)``)."""
    return hashlib.sha256(NODE_PREFIX + left + right).digest()


def jsonable(value: Any) -> Any:
    """Convert simulator values into plain JSON types.

    Bytes become lowercase hex, rationals their exact ``"n/d"`` string,
    enums their value and dataclasses a dict of their fields.
    """
    if isinstance(value, bool) or value is None:
        return value
    if isinstance(value, Enum):
        return jsonable(value.value)
    if isinstance(value, (int, str)):
        return value
    if isinstance(value, Fraction):
        return str(value)
    if isinstance(value, float):
        return value
    if isinstance(value, (bytes, bytearray)):
        return bytes(value).hex()
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return {f.name: jsonable(getattr(value, f.name)) for f in dataclasses.fields(value)}
    if isinstance(value, dict):
        return {str(jsonable(k)): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, set, frozenset)):
        items = [jsonable(v) for v in value]
        if isinstance(value, (set, frozenset)):
            items.sort(key=lambda v: json.dumps(v, sort_keys=True))
        return items
    raise TypeError(f"Cannot serialize value of type {type(value).__name__}")


def canonical_json(value: Any) -> str:
    """Deterministic JSON text: sorted keys, compact separators."""
    return json.dumps(jsonable(value), sort_keys=True, separators=(",", ":"))


def canonical_bytes(value: Any) -> bytes:
    return canonical_json(value).encode("utf-8")


def digest(value: Any) -> bytes:
    """Leaf-domain hash of a value's canonical serialization."""
    return hash_leaf(canonical_bytes(value))


def keystream(key: bytes, length: int) -> bytes:
    """Expand *key* into *length* pseudo-random bytes (SHA-256 in counter mode)."""
    out = bytearray()
    counter = 0
    while len(out) < length:
        out.extend(hashlib.sha256(key + counter.to_bytes(4, "big")).digest())
        counter += 1
    return bytes(out[:length])
