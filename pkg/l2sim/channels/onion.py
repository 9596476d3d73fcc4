"""
Layered routing packets with per-hop visibility.

Every node after the sender gets one sealed record naming its predecessor,
its successor, the amount to forward and the expiry of the outgoing HTLC.
A record is tagged with ``H(secret || nonce)`` and its payload is XORed with
a keystream derived from the same secret, so only the owning node can find
and read it. Records are sorted by tag, which hides their position in the
route. This is a visibility model, not onion cryptography.
"""

import json
import logging
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

from ..chain._hashing import canonical_bytes, keystream, sha256
from ..chain.keys import KeyRing
from ..errors import NotAHopError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SealedRecord:
    tag: bytes
    nonce: bytes
    ciphertext: bytes


@dataclass(frozen=True)
class OnionPacket:
    records: Tuple[SealedRecord, ...]

    def __len__(self) -> int:
        return len(self.records)


def _xor(data: bytes, key: bytes) -> bytes:
    stream = keystream(key, len(data))
    return bytes(a ^ b for a, b in zip(data, stream))


def _record_key(secret: bytes, nonce: bytes) -> bytes:
    return sha256(b"onion-payload" + secret + nonce)


def build_onion(
    nodes: Sequence[str],
    amounts: Sequence[int],
    expiries: Sequence[int],
    keys: KeyRing,
) -> OnionPacket:
    """
    Seal one record per hop of a route.

    Args:
        nodes: Route nodes, sender first, payee last.
        amounts: Amount carried over each channel (``len(nodes) - 1`` items).
        expiries: HTLC expiry height of each channel.
        keys: Key ring holding every hop's secret.

    Returns:
        Packet with ``len(nodes) - 1`` records.

    Raises:
        ValueError: If the route has fewer than two nodes or the per-channel
            sequences do not match it.
    """
    if len(nodes) < 2:
        raise ValueError("an onion needs a route of at least two nodes")
    if len(amounts) != len(nodes) - 1 or len(expiries) != len(nodes) - 1:
        raise ValueError("amounts and expiries must have one entry per channel")

    records = []
    last = len(nodes) - 1
    for i in range(1, len(nodes)):
        hop = nodes[i]
        forward = i if i < last else i - 1
        payload = {
            "pred": nodes[i - 1],
            "succ": nodes[i + 1] if i < last else None,
            "amount": amounts[forward],
            "expiry": expiries[forward],
        }
        secret = keys.register(hop)
        nonce = keys.fresh_secret()[:16]
        records.append(
            SealedRecord(
                tag=sha256(secret + nonce),
                nonce=nonce,
                ciphertext=_xor(canonical_bytes(payload), _record_key(secret, nonce)),
            )
        )
    records.sort(key=lambda r: r.tag)
    return OnionPacket(tuple(records))


def open_record(record: SealedRecord, hop: str, keys: KeyRing) -> Dict:
    """
    Decrypt one record as *hop*.

    Raises:
        NotAHopError: If the record is not addressed to *hop*.
    """
    if hop not in keys:
        raise NotAHopError(f"{hop} has no key and cannot open onion records")
    secret = keys.secret(hop)
    if sha256(secret + record.nonce) != record.tag:
        raise NotAHopError(f"record is not addressed to {hop}")
    return json.loads(_xor(record.ciphertext, _record_key(secret, record.nonce)))


def hop_view(packet: OnionPacket, hop: str, keys: KeyRing) -> Dict[str, Optional[object]]:
    """
    What *hop* learns from *packet*: ``{pred, succ, amount, expiry}``.

    Raises:
        NotAHopError: If no record in the packet belongs to *hop*.
    """
    for record in packet.records:
        try:
            return open_record(record, hop, keys)
        except NotAHopError:
            continue
    raise NotAHopError(f"{hop} is not a hop of this route")
