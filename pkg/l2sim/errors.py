"""
Exception hierarchy for l2sim.

Every protocol failure has its own class rooted at :class:`L2SimError`.
Precondition failures also derive from :class:`ValueError`, access
violations from :class:`PermissionError` and lookups from
:class:`LookupError`, so callers may catch either the domain class or the
builtin one.
"""

from typing import Optional


class L2SimError(Exception):
    """Base class for every error raised by l2sim."""


class InvariantViolation(L2SimError):
    """A runtime invariant checker detected an inconsistent state."""


class ScenarioError(L2SimError, ValueError):
    """A scenario file is malformed or fails schema validation."""


# ---------------------------------------------------------------------------
# l1-chain
# ---------------------------------------------------------------------------


class InvalidParamsError(L2SimError, ValueError):
    """Chain or protocol parameters are out of range."""


class EmptyLeavesError(L2SimError, ValueError):
    """A merkle tree was requested over zero leaves."""


class IndexOutOfRangeError(L2SimError, IndexError):
    """A merkle proof was requested for a leaf index outside the tree."""


class DuplicateTransactionError(L2SimError, ValueError):
    """A transaction id was already seen by the mempool or the chain."""


class InsufficientFundsError(L2SimError, ValueError):
    """An L1 account cannot cover an amount plus fee."""


# ---------------------------------------------------------------------------
# channels
# ---------------------------------------------------------------------------


class ChannelError(L2SimError):
    """Base class for payment-channel failures."""


class ChannelNotOpenError(ChannelError, ValueError):
    pass


class InsufficientBalanceError(ChannelError, ValueError):
    pass


class UnknownStateError(ChannelError, LookupError):
    """No broadcastable signed commitment exists for the requested state."""


class WindowExpiredError(ChannelError):
    """The penalty window closed before the revocation secret was used."""


class NotEndpointError(ChannelError, ValueError):
    pass


class CounterpartyRefusedError(ChannelError):
    pass


class RouteNotFoundError(ChannelError, LookupError):
    pass


class NotAHopError(ChannelError, LookupError):
    pass


class AccessDeniedError(ChannelError, PermissionError):
    pass


class PreimageMismatchError(ChannelError, ValueError):
    """A preimage does not hash to the HTLC's payment hash."""


class HtlcExpiredError(ChannelError):
    """An HTLC was redeemed at or after its expiry height."""


class NotStaleError(ChannelError, ValueError):
    """A penalty was attempted against a close that broadcast the latest state."""


class TimelockActiveError(ChannelError):
    """A unilateral close cannot be swept before its timelock expires."""


class InvoiceError(ChannelError, ValueError):
    """An invoice is expired, already paid or does not match the route."""


# ---------------------------------------------------------------------------
# plasma
# ---------------------------------------------------------------------------


class PlasmaError(L2SimError):
    """Base class for Plasma child-chain and exit-game failures."""


class DoubleSpendError(PlasmaError, ValueError):
    pass


class BadAuthorizationError(PlasmaError, ValueError):
    pass


class ValueMismatchError(PlasmaError, ValueError):
    pass


class UnknownOutputError(PlasmaError, LookupError):
    pass


class UnacknowledgedDepositError(PlasmaError, ValueError):
    """The deposit output exists but its owner has not acknowledged it yet."""


class OutputLockedError(PlasmaError, ValueError):
    """The output is under a pending exit or a fast-withdrawal lock."""


class BadProofError(PlasmaError, ValueError):
    pass


class NotOwnerError(PlasmaError, PermissionError):
    pass


class PartialExitError(PlasmaError, ValueError):
    """Exits must claim the whole unspent output."""


class ExitInProgressError(PlasmaError, ValueError):
    pass


class BondUnavailableError(PlasmaError, ValueError):
    pass


class InvalidChallengeError(PlasmaError, ValueError):
    pass


class NotElapsedError(PlasmaError):
    pass


class AlreadyCancelledError(PlasmaError):
    pass


class AlreadyFinalizedError(PlasmaError):
    pass


class LpInsolventError(PlasmaError):
    pass


class LpRefusedError(PlasmaError):
    pass


class InsufficientSignaturesError(PlasmaError, ValueError):
    pass


class DataUnavailableError(PlasmaError, LookupError):
    pass


class ChainHaltedError(PlasmaError):
    """The child chain stopped accepting transactions after a mass exit."""


class MassExitNotWarrantedError(PlasmaError, ValueError):
    pass


# ---------------------------------------------------------------------------
# shared by plasma and rollup
# ---------------------------------------------------------------------------


class WindowClosedError(L2SimError):
    """A challenge arrived after its window closed."""


# ---------------------------------------------------------------------------
# rollup
# ---------------------------------------------------------------------------


class RollupError(L2SimError):
    """Base class for rollup failures."""


class InvalidTxError(RollupError, ValueError):
    """A rollup operation is invalid against the sequentially applied state.

    Attributes:
        index: Position of the offending operation in the submitted list.
    """

    def __init__(self, index: int, reason: str = "invalid transaction"):
        self.index = index
        self.reason = reason
        super().__init__(f"invalid tx at index {index}: {reason}")


class UntrustedProverError(RollupError, PermissionError):
    pass


class StaleRootError(RollupError, ValueError):
    pass


class MissingProofError(RollupError, ValueError):
    pass


class InvalidProofError(RollupError, ValueError):
    pass


class NoSuchBatchError(RollupError, LookupError):
    pass


class NotStakedError(RollupError, PermissionError):
    pass


class InsufficientRollupBalanceError(RollupError, ValueError):
    pass


class ProofExceedsGasLimitError(RollupError, ValueError):
    pass


class EmptyBatchError(RollupError, ValueError):
    pass


class TooManyAuthorsError(RollupError, ValueError):
    pass


class FeePayerInsolventError(RollupError, ValueError):
    pass


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------


class BenchError(L2SimError):
    pass


class BackendMisconfiguredError(BenchError, ValueError):
    pass


class EmptyResultsError(BenchError, ValueError):
    pass


def describe(exc: BaseException, context: Optional[str] = None) -> str:
    """Render an exception as ``"<Class>: message"`` for event logs."""
    text = f"{type(exc).__name__}: {exc}"
    return f"{context}: {text}" if context else text
