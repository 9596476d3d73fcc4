"""
Simulated signing keys.

A signature is ``H(party_secret || message)``. This is enough to decide who
authorized what inside a deterministic simulation; it is not a real
signature scheme and offers no production security.
"""

import hmac
import logging
from typing import Dict, Iterable, Optional

import numpy as np

from ._hashing import sha256

logger = logging.getLogger(__name__)


class KeyRing:
    """
    Per-party secrets drawn from a seeded generator.

    Args:
        rng: numpy ``Generator`` supplying key material. A fresh generator
            seeded with 0 is used when omitted.

    Example:
        >>> keys = KeyRing(np.random.default_rng(7))
        >>> sig = keys.sign("alice", b"state-1")
        >>> keys.verify("alice", b"state-1", sig)
        True
    """

    def __init__(self, rng: Optional[np.random.Generator] = None):
        self._rng = rng if rng is not None else np.random.default_rng(0)
        self._secrets: Dict[str, bytes] = {}

    def register(self, party: str) -> bytes:
        """Create (or return) the secret of *party*."""
        if party not in self._secrets:
            self._secrets[party] = self._rng.bytes(32)
        return self._secrets[party]

    def register_all(self, parties: Iterable[str]) -> None:
        for party in parties:
            self.register(party)

    def __contains__(self, party: object) -> bool:
        return party in self._secrets

    def secret(self, party: str) -> bytes:
        if party not in self._secrets:
            raise KeyError(f"No key registered for '{party}'")
        return self._secrets[party]

    def public_id(self, party: str) -> bytes:
        return sha256(self.secret(party))

    def sign(self, party: str, message: bytes) -> bytes:
        return sha256(self.register(party) + message)

    def verify(self, party: str, message: bytes, signature: Optional[bytes]) -> bool:
        if signature is None or party not in self._secrets:
            return False
        return hmac.compare_digest(sha256(self._secrets[party] + message), signature)

    def fresh_secret(self) -> bytes:
        """32 random bytes not tied to any party (preimages, revocation secrets)."""
        return self._rng.bytes(32)
