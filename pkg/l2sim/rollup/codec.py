"""
Compressed calldata encoding of rollup transactions.

Core record (12 bytes, big-endian)::

    from index   3 bytes
    to index     3 bytes   (0xFFFFFF marks a withdrawal)
    amount       4 bytes   27-bit mantissa << 5 | 5-bit decimal exponent
    fee          2 bytes   11-bit mantissa << 5 | 5-bit decimal exponent

Amounts and fees must be exactly ``mantissa * 10**exponent``; the encoder
picks the smallest exponent whose mantissa fits. Records of optimistic
rollups are padded to ``tx_size_bytes`` with a deterministic witness derived
from the core record, standing in for the signature data those rollups post.
"""

import logging
from typing import List, Sequence, Tuple

from ..chain._hashing import digest, keystream
from ..errors import InvalidTxError
from .state import RollupTx

logger = logging.getLogger(__name__)

RECORD_SIZE = 12
WITHDRAW_INDEX = 0xFFFFFF
MAX_ACCOUNT_INDEX = WITHDRAW_INDEX - 1

_EXP_BITS = 5
_AMOUNT_MANTISSA_BITS = 27
_FEE_MANTISSA_BITS = 11


def pack_decimal(value: int, mantissa_bits: int) -> int:
    """
    Encode *value* as ``mantissa << 5 | exponent``.

    Raises:
        ValueError: If no exponent below 32 gives an exact mantissa that fits.

    Example:
        >>> pack_decimal(10_840_000_000_000, 11) >> 5, pack_decimal(10_840_000_000_000, 11) & 31
        (1084, 10)
    """
    if value < 0:
        raise ValueError("value must be non-negative")
    limit = 1 << mantissa_bits
    exponent = 0
    mantissa = value
    while mantissa >= limit:
        if mantissa % 10 or exponent == (1 << _EXP_BITS) - 1:
            raise ValueError(f"{value} is not representable with a {mantissa_bits}-bit mantissa")
        mantissa //= 10
        exponent += 1
    return (mantissa << _EXP_BITS) | exponent


def unpack_decimal(packed: int) -> int:
    return (packed >> _EXP_BITS) * 10 ** (packed & ((1 << _EXP_BITS) - 1))


def is_representable(amount: int, fee: int = 0) -> bool:
    try:
        pack_decimal(amount, _AMOUNT_MANTISSA_BITS)
        pack_decimal(fee, _FEE_MANTISSA_BITS)
    except ValueError:
        return False
    return True


def _index_of(lookup: dict, account: str) -> int:
    try:
        index = lookup[account]
    except KeyError:
        raise ValueError(f"account {account!r} is not registered") from None
    if index > MAX_ACCOUNT_INDEX:
        raise ValueError(f"account index {index} exceeds the 3-byte range")
    return index


def encode_record(tx: RollupTx, lookup: dict) -> bytes:
    sender = _index_of(lookup, tx.sender)
    recipient = WITHDRAW_INDEX if tx.is_withdrawal else _index_of(lookup, tx.recipient)
    amount = pack_decimal(tx.amount, _AMOUNT_MANTISSA_BITS)
    fee = pack_decimal(tx.fee, _FEE_MANTISSA_BITS)
    return (
        sender.to_bytes(3, "big")
        + recipient.to_bytes(3, "big")
        + amount.to_bytes(4, "big")
        + fee.to_bytes(2, "big")
    )


def encode_batch(txs: Sequence[RollupTx], registry: Sequence[str], tx_size_bytes: int = RECORD_SIZE) -> bytes:
    """
    Encode *txs* into calldata of ``len(txs) * tx_size_bytes`` bytes.

    Args:
        txs: Transactions in application order.
        registry: Account names; an account's index is its position.
        tx_size_bytes: Record size; anything above 12 bytes is witness padding.

    Raises:
        InvalidTxError: With the index of the first transaction that cannot
            be encoded (unregistered account or unrepresentable value).
    """
    if tx_size_bytes < RECORD_SIZE:
        raise ValueError(f"records need at least {RECORD_SIZE} bytes")
    lookup = {name: i for i, name in enumerate(registry)}
    out = bytearray()
    for index, tx in enumerate(txs):
        try:
            record = encode_record(tx, lookup)
        except ValueError as e:
            raise InvalidTxError(index, str(e)) from e
        out += record
        if tx_size_bytes > RECORD_SIZE:
            out += keystream(digest(record), tx_size_bytes - RECORD_SIZE)
    return bytes(out)


def decode_batch(data: bytes, registry: Sequence[str], tx_size_bytes: int = RECORD_SIZE) -> List[RollupTx]:
    """
    Decode calldata produced by :func:`encode_batch`.

    Raises:
        ValueError: If the length is not a whole number of records or an
            index is unknown.
    """
    if len(data) % tx_size_bytes:
        raise ValueError(f"calldata of {len(data)} bytes is not a multiple of {tx_size_bytes}")
    txs = []
    for offset in range(0, len(data), tx_size_bytes):
        record = data[offset : offset + RECORD_SIZE]
        sender, recipient, amount, fee = _split(record)
        if sender >= len(registry) or (recipient != WITHDRAW_INDEX and recipient >= len(registry)):
            raise ValueError(f"record at offset {offset} references an unknown account")
        if recipient == WITHDRAW_INDEX:
            txs.append(RollupTx.withdraw(registry[sender], amount, fee))
        else:
            txs.append(RollupTx.transfer(registry[sender], registry[recipient], amount, fee))
    logger.debug("Decoded %d records", len(txs))
    return txs


def _split(record: bytes) -> Tuple[int, int, int, int]:
    return (
        int.from_bytes(record[0:3], "big"),
        int.from_bytes(record[3:6], "big"),
        unpack_decimal(int.from_bytes(record[6:10], "big")),
        unpack_decimal(int.from_bytes(record[10:12], "big")),
    )
