"""Millisecond clocks.

All timestamps in the system are integer milliseconds. Components never
call time.time() directly; they take a clock so tests can substitute a
SimulatedClock and drive rule evaluation deterministically.
"""

from __future__ import annotations

import threading
import time


class Clock:
    """Interface: now() returns integer milliseconds."""

    def now(self) -> int:
        raise NotImplementedError


class WallClock(Clock):
    """Wall time, forced monotone.

    time.time() can step backwards under NTP adjustment; repeated reads
    here never do. Thread-safe.
    """

    def __init__(self) -> None:
        self._last = 0
        self._lock = threading.Lock()

    def now(self) -> int:
        with self._lock:
            t = int(time.time() * 1000)
            if t < self._last:
                t = self._last
            self._last = t
            return t


class SimulatedClock(Clock):
    """Manually advanced clock for tests and scripted scenarios."""

    def __init__(self, start_ms: int = 0) -> None:
        self._now = int(start_ms)
        self._lock = threading.Lock()

    def now(self) -> int:
        with self._lock:
            return self._now

    def advance(self, ms: int) -> int:
        if ms < 0:
            raise ValueError("cannot advance a clock backwards")
        with self._lock:
            self._now += int(ms)
            return self._now


class MonotoneView(Clock):
    """Session-scoped view over a shared base clock.

    Guarantees non-decreasing reads even if the base is replaced or
    misbehaves, so per-session log timestamps never run backwards.
    """

    def __init__(self, base: Clock) -> None:
        self._base = base
        self._last = 0
        self._lock = threading.Lock()

    def now(self) -> int:
        with self._lock:
            t = self._base.now()
            if t < self._last:
                t = self._last
            self._last = t
            return t
