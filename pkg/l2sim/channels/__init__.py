"""
Payment channels and channel networks.

Classes:
    Channel: Two-party commitment state machine with revocation and HTLCs
    ChannelNetwork: Funding, routing, closing and watching over an L1 chain
    ChannelConfig: Timelocks, hop limits and L1 transaction sizes
    FeePolicy: Base plus proportional forwarding fee
"""

from .channel import (
    Channel,
    ChannelStatus,
    CloseOutcome,
    Commitment,
    Direction,
    Htlc,
    PendingClose,
    RevocationEntry,
)
from .fees import FeePolicy, route_fee
from .network import (
    ChannelConfig,
    ChannelNetwork,
    Invoice,
    Monitor,
    Node,
    PaymentResult,
    Route,
    hub_and_spoke,
    network_stats,
    random_network,
    scale_free_network,
)
from .onion import OnionPacket, SealedRecord, build_onion, hop_view, open_record

__all__ = [
    "Channel",
    "ChannelConfig",
    "ChannelNetwork",
    "ChannelStatus",
    "CloseOutcome",
    "Commitment",
    "Direction",
    "FeePolicy",
    "Htlc",
    "Invoice",
    "Monitor",
    "Node",
    "OnionPacket",
    "PaymentResult",
    "PendingClose",
    "RevocationEntry",
    "Route",
    "SealedRecord",
    "build_onion",
    "hop_view",
    "hub_and_spoke",
    "network_stats",
    "open_record",
    "random_network",
    "route_fee",
    "scale_free_network",
]
