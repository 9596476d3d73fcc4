"""
JSON-lines event log.

Every simulated state transition (channel updates, exit-game moves, batch
status changes, benchmark completions) is appended here with its simulated
timestamp. The rendering is canonical so that two runs with the same seed
produce byte-identical ``events.jsonl`` files.
"""

import logging
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable, Dict, Iterator, List, Optional, Union

from .chain._hashing import canonical_json, jsonable

logger = logging.getLogger(__name__)


class EventLog:
    """
    Append-only, in-memory event record with JSON-lines export.

    Args:
        clock: Zero-argument callable returning the current simulated time.
            Used when :meth:`emit` is called without an explicit ``t``.

    Example:
        >>> log = EventLog()
        >>> record = log.emit("channels", "open", t=0, channel="ch-00000")
        >>> record["seq"]
        0
    """

    def __init__(self, clock: Optional[Callable[[], Fraction]] = None):
        self._clock = clock
        self._records: List[Dict[str, Any]] = []

    def bind_clock(self, clock: Callable[[], Fraction]) -> None:
        """Attach a clock if none was given at construction."""
        if self._clock is None:
            self._clock = clock

    def emit(
        self,
        module: str,
        event: str,
        t: Optional[Union[Fraction, int]] = None,
        **data: Any,
    ) -> Dict[str, Any]:
        """Append one record and return it."""
        if t is None:
            t = self._clock() if self._clock is not None else Fraction(0)
        record = {
            "seq": len(self._records),
            "t": str(Fraction(t)),
            "module": module,
            "event": event,
        }
        record.update({k: jsonable(v) for k, v in data.items()})
        self._records.append(record)
        logger.debug("%s.%s %s", module, event, data)
        return record

    @property
    def records(self) -> List[Dict[str, Any]]:
        return list(self._records)

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[Dict[str, Any]]:
        return iter(self._records)

    def filter(self, module: Optional[str] = None, event: Optional[str] = None) -> List[Dict[str, Any]]:
        """Records matching *module* and/or *event*."""
        return [
            r
            for r in self._records
            if (module is None or r["module"] == module)
            and (event is None or r["event"] == event)
        ]

    def extend(self, other: "EventLog", **tags: Any) -> None:
        """Append another log's records, re-sequenced and optionally tagged."""
        for record in other:
            merged = dict(record)
            merged.update({k: jsonable(v) for k, v in tags.items()})
            merged["seq"] = len(self._records)
            self._records.append(merged)

    def to_jsonl(self) -> str:
        return "".join(canonical_json(r) + "\n" for r in self._records)

    def write(self, path: Union[str, Path]) -> Path:
        """Write the log as JSON-lines and return the path."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(self.to_jsonl())
        logger.info("Wrote %d events to %s", len(self._records), path)
        return path
