"""
Routing fee policies.

A forwarding node charges a fixed base plus a proportional part of the
amount it forwards, expressed in parts per million.
"""

from dataclasses import dataclass

_PPM = 1_000_000


@dataclass(frozen=True)
class FeePolicy:
    """
    Fee schedule advertised on one channel by the node forwarding over it.

    Example:
        >>> FeePolicy(base_fee=2, proportional_ppm=500).fee(3_000_000)
        1502
    """

    base_fee: int = 0
    proportional_ppm: int = 0

    def __post_init__(self) -> None:
        if self.base_fee < 0 or self.proportional_ppm < 0:
            raise ValueError("fee policy components must be non-negative")

    def fee(self, amount: int) -> int:
        return route_fee(self, amount)

    def to_dict(self) -> dict:
        return {"base_fee": self.base_fee, "proportional_ppm": self.proportional_ppm}


def route_fee(policy: FeePolicy, amount: int) -> int:
    """
    Fee for forwarding *amount*: ``base_fee + floor(amount * ppm / 10**6)``.

    Raises:
        ValueError: If *amount* is negative.
    """
    if amount < 0:
        raise ValueError("amount must be non-negative")
    return policy.base_fee + amount * policy.proportional_ppm // _PPM
