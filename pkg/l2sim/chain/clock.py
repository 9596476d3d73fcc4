"""
Deterministic discrete-event loop on a rational clock.

Events are ordered by ``(time, sequence)``; the sequence number is the order
of scheduling, which gives a total order for events sharing a timestamp.
"""

import heapq
import itertools
import logging
from fractions import Fraction
from typing import Callable, List, Optional, Tuple, Union

logger = logging.getLogger(__name__)

TimeLike = Union[Fraction, int, str]


class Timer:
    """Handle returned by the scheduling methods; ``cancel()`` stops it."""

    __slots__ = ("label", "cancelled", "interval")

    def __init__(self, label: str = "", interval: Optional[Fraction] = None):
        self.label = label
        self.cancelled = False
        self.interval = interval

    def cancel(self) -> None:
        self.cancelled = True


class EventLoop:
    """
    Single-threaded event scheduler.

    Args:
        start: Initial simulated time in seconds.

    Example:
        >>> loop = EventLoop()
        >>> fired = []
        >>> _ = loop.schedule_at(5, lambda: fired.append(loop.now))
        >>> loop.run_until(10)
        >>> fired, loop.now
        ([Fraction(5, 1)], Fraction(10, 1))
    """

    def __init__(self, start: TimeLike = 0):
        self._now = Fraction(start)
        self._queue: List[Tuple[Fraction, int, Timer, Callable[[], None]]] = []
        self._seq = itertools.count()

    @property
    def now(self) -> Fraction:
        return self._now

    def __len__(self) -> int:
        return sum(1 for _, _, timer, _ in self._queue if not timer.cancelled)

    def next_time(self) -> Optional[Fraction]:
        while self._queue and self._queue[0][2].cancelled:
            heapq.heappop(self._queue)
        return self._queue[0][0] if self._queue else None

    def schedule_at(self, at: TimeLike, callback: Callable[[], None], label: str = "") -> Timer:
        at = Fraction(at)
        if at < self._now:
            raise ValueError(f"Cannot schedule '{label}' at {at}, clock is already at {self._now}")
        timer = Timer(label)
        heapq.heappush(self._queue, (at, next(self._seq), timer, callback))
        return timer

    def schedule_in(self, delay: TimeLike, callback: Callable[[], None], label: str = "") -> Timer:
        return self.schedule_at(self._now + Fraction(delay), callback, label)

    def schedule_every(
        self,
        interval: TimeLike,
        callback: Callable[[], None],
        first_at: Optional[TimeLike] = None,
        label: str = "",
    ) -> Timer:
        """Run *callback* every *interval* seconds until the timer is cancelled."""
        interval = Fraction(interval)
        if interval <= 0:
            raise ValueError("interval must be positive")
        timer = Timer(label, interval)
        start = self._now + interval if first_at is None else Fraction(first_at)
        self._push_periodic(start, timer, callback)
        return timer

    def _push_periodic(self, at: Fraction, timer: Timer, callback: Callable[[], None]) -> None:
        def fire() -> None:
            callback()
            if not timer.cancelled:
                self._push_periodic(at + timer.interval, timer, callback)

        heapq.heappush(self._queue, (at, next(self._seq), timer, fire))

    def run_until(self, until: TimeLike) -> None:
        """Fire every event with time ``<= until`` and leave the clock at *until*."""
        until = Fraction(until)
        while self._queue and self._queue[0][0] <= until:
            at, _, timer, callback = heapq.heappop(self._queue)
            if timer.cancelled:
                continue
            self._now = at
            callback()
        if until > self._now:
            self._now = until
