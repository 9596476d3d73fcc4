"""
Tests for l2sim.events and the canonical JSON helpers behind it.
"""

import json
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

import pytest

from l2sim.chain._hashing import canonical_json, jsonable
from l2sim.events import EventLog


class _Colour(Enum):
    RED = "red"


@dataclass
class _Point:
    x: int
    label: bytes


class TestJsonable:
    """Tests for jsonable and canonical_json."""

    def test_conversions(self):
        """Simulator values become plain JSON values."""
        assert jsonable(b"\x00\xff") == "00ff"
        assert jsonable(Fraction(1, 3)) == "1/3"
        assert jsonable(_Colour.RED) == "red"
        assert jsonable(_Point(1, b"\x01")) == {"x": 1, "label": "01"}
        assert jsonable({3: (1, 2)}) == {"3": [1, 2]}
        assert jsonable({"b", "a"}) == ["a", "b"]
        assert jsonable(True) is True
        assert jsonable(None) is None

    def test_unknown_type(self):
        """Values without a JSON form are rejected."""
        with pytest.raises(TypeError):
            jsonable(object())

    def test_canonical(self):
        """Keys are sorted and separators compact."""
        assert canonical_json({"b": 1, "a": Fraction(1, 2)}) == '{"a":"1/2","b":1}'


class TestEventLog:
    """Tests for EventLog."""

    def test_emit(self):
        """Records carry a sequence number, exact time and the payload."""
        log = EventLog()
        first = log.emit("chain", "block", t=Fraction(13), height=1)
        second = log.emit("chain", "block", t=26, height=2)
        assert first == {"seq": 0, "t": "13", "module": "chain", "event": "block", "height": 1}
        assert second["seq"] == 1
        assert len(log) == 2

    def test_clock(self):
        """Without an explicit time the bound clock is used, otherwise zero."""
        assert EventLog().emit("x", "y")["t"] == "0"
        now = [Fraction(7, 2)]
        log = EventLog(clock=lambda: now[0])
        assert log.emit("x", "y")["t"] == "7/2"
        log.bind_clock(lambda: Fraction(100))
        assert log.emit("x", "y")["t"] == "7/2"

    def test_bind_clock(self):
        """bind_clock attaches a clock to a log created without one."""
        log = EventLog()
        log.bind_clock(lambda: Fraction(5))
        assert log.emit("x", "y")["t"] == "5"

    def test_records_is_a_copy(self):
        """Mutating the returned list leaves the log alone."""
        log = EventLog()
        log.emit("x", "y")
        log.records.clear()
        assert len(log) == 1

    def test_filter(self):
        """Records are selected by module, event or both."""
        log = EventLog()
        log.emit("channels", "open")
        log.emit("channels", "penalty")
        log.emit("plasma", "open")
        assert len(log.filter("channels")) == 2
        assert len(log.filter(event="open")) == 2
        assert [r["seq"] for r in log.filter("plasma", "open")] == [2]

    def test_extend(self):
        """Merged records are re-sequenced and tagged."""
        base, other = EventLog(), EventLog()
        base.emit("a", "x")
        other.emit("b", "y")
        other.emit("b", "z")
        base.extend(other, backend="plasma")
        assert [r["seq"] for r in base] == [0, 1, 2]
        assert [r.get("backend") for r in base] == [None, "plasma", "plasma"]
        assert other.records[0]["seq"] == 0

    def test_jsonl(self, tmp_path):
        """Each record is one canonical JSON line; parent directories are created."""
        log = EventLog()
        log.emit("rollup", "batch", t=Fraction(1, 3), root=b"\xab", n=2)
        path = log.write(tmp_path / "nested" / "events.jsonl")
        text = path.read_text(encoding="utf-8")
        assert text == log.to_jsonl()
        assert text.endswith("\n")
        assert json.loads(text) == {"event": "batch", "module": "rollup", "n": 2, "root": "ab", "seq": 0, "t": "1/3"}
        assert text.index('"event"') < text.index('"module"') < text.index('"seq"')
