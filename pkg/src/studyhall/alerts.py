"""Telemetry-driven attention alerts.

Two rules watch each student:

  Inactivity          no activity event for inactivity_secs
  RepeatedIncorrect   >= incorrect_threshold wrong answers inside a
                      sliding incorrect_window_secs window

Activity means MouseClick, KeyInput, or AnswerSubmitted. Heartbeat is
liveness plumbing and deliberately does not count; an idle student's
client heartbeats forever.

Alerts are edge-triggered with state: while an instance is open (raised
and not yet cleared) the same (student, kind) is never raised again.
Inactivity clears on any activity; RepeatedIncorrect clears on a correct
answer, which also empties the window so the next alert needs a fresh
run of mistakes.

Timestamps arrive from a session-monotone clock, but a defensive clamp
(never let a student's time run backwards) keeps the window arithmetic
safe even if a caller misbehaves. All times are ms; configured rule
durations are seconds.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Deque, Dict, List, Optional

from .errors import UnknownStudent


@dataclass(frozen=True)
class AlertRuleConfig:
    inactivity_secs: int = 120
    incorrect_threshold: int = 3
    incorrect_window_secs: int = 300

    def validate(self) -> None:
        if self.inactivity_secs <= 0:
            raise ValueError("inactivity_secs must be positive")
        if self.incorrect_threshold <= 0:
            raise ValueError("incorrect_threshold must be positive")
        if self.incorrect_window_secs <= 0:
            raise ValueError("incorrect_window_secs must be positive")


ACTIVITY_KINDS = frozenset({"MouseClick", "KeyInput", "AnswerSubmitted"})


@dataclass(frozen=True)
class TelemetryEvent:
    student: str
    kind: str  # MouseClick | KeyInput | AnswerSubmitted | Heartbeat
    ts: int
    correct: Optional[bool] = None
    detail: Optional[str] = None


@dataclass
class Alert:
    student: str
    kind: str  # Inactivity | RepeatedIncorrect
    raised_at: int
    cleared_at: Optional[int] = None
    duration_secs: Optional[int] = None
    count: Optional[int] = None
    window_secs: Optional[int] = None

    def to_payload(self, text: str) -> dict:
        p = {"student": self.student, "kind": self.kind,
             "raised_at": self.raised_at, "cleared_at": self.cleared_at,
             "text": text}
        if self.kind == "Inactivity":
            p["duration_secs"] = self.duration_secs
        else:
            p["count"] = self.count
            p["window_secs"] = self.window_secs
        return p


def _plural(n: int, unit: str) -> str:
    return f"{n} {unit}" if n == 1 else f"{n} {unit}s"


def render_alert(alert: Alert, alias: str) -> str:
    """Human sentence for the dashboard. Byte-stable; tests pin it."""
    if alert.kind == "Inactivity":
        secs = alert.duration_secs or 0
        if secs >= 60 and secs % 60 == 0:
            span = _plural(secs // 60, "minute")
        else:
            span = _plural(secs, "second")
        return f"Student {alias} was inactive for {span}"
    if alert.kind == "RepeatedIncorrect":
        window = _plural(alert.window_secs // 60, "minute") \
            if alert.window_secs % 60 == 0 and alert.window_secs >= 60 \
            else _plural(alert.window_secs, "second")
        return (f"{alias} submitted {alert.count} incorrect answers "
                f"in the last {window}")
    raise ValueError(f"unknown alert kind {alert.kind!r}")


@dataclass
class _StudentState:
    last_seen: int  # clamp floor: a student's clock never runs backwards
    last_activity: int
    incorrect: Deque[int] = field(default_factory=deque)
    open_inactivity: Optional[Alert] = None
    open_repeated: Optional[Alert] = None


class AlertEngine:
    """Per-session rule evaluator. Not thread-safe; callers serialize."""

    def __init__(self, config: AlertRuleConfig = AlertRuleConfig()) -> None:
        config.validate()
        self.config = config
        self._students: Dict[str, _StudentState] = {}
        self._cleared: List[Alert] = []

    def register_student(self, student: str, now: int) -> None:
        """Start tracking; registration counts as the initial activity."""
        if student in self._students:
            return
        self._students[student] = _StudentState(last_seen=now,
                                                last_activity=now)

    def remove_student(self, student: str) -> None:
        """Stop tracking (student left). Open alerts die silently."""
        self._students.pop(student, None)

    def students(self) -> List[str]:
        return list(self._students)

    def open_alerts(self, student: Optional[str] = None) -> List[Alert]:
        out = []
        for sid, st in self._students.items():
            if student is not None and sid != student:
                continue
            if st.open_inactivity:
                out.append(st.open_inactivity)
            if st.open_repeated:
                out.append(st.open_repeated)
        return out

    def drain_cleared(self) -> List[Alert]:
        """Alerts cleared since the last drain, in clear order."""
        out, self._cleared = self._cleared, []
        return out

    def _clear(self, alert: Alert, ts: int) -> None:
        alert.cleared_at = ts
        self._cleared.append(alert)

    def ingest(self, event: TelemetryEvent) -> List[Alert]:
        """Feed one event; returns alerts newly raised by it."""
        st = self._students.get(event.student)
        if st is None:
            raise UnknownStudent(f"no such student {event.student!r}")
        ts = max(event.ts, st.last_seen)
        st.last_seen = ts
        if event.kind not in ACTIVITY_KINDS:
            return []  # Heartbeat: liveness only

        st.last_activity = ts
        if st.open_inactivity is not None:
            self._clear(st.open_inactivity, ts)
            st.open_inactivity = None

        raised: List[Alert] = []
        if event.kind == "AnswerSubmitted":
            if event.correct is None:
                raise ValueError("AnswerSubmitted event requires correct flag")
            if event.correct:
                if st.open_repeated is not None:
                    self._clear(st.open_repeated, ts)
                    st.open_repeated = None
                st.incorrect.clear()
            else:
                st.incorrect.append(ts)
                cutoff = ts - self.config.incorrect_window_secs * 1000
                while st.incorrect and st.incorrect[0] < cutoff:
                    st.incorrect.popleft()
                if (len(st.incorrect) >= self.config.incorrect_threshold
                        and st.open_repeated is None):
                    alert = Alert(student=event.student,
                                  kind="RepeatedIncorrect", raised_at=ts,
                                  count=len(st.incorrect),
                                  window_secs=self.config.incorrect_window_secs)
                    st.open_repeated = alert
                    raised.append(alert)
        return raised

    def tick(self, now: int) -> List[Alert]:
        """Periodic sweep; raises Inactivity alerts that are due."""
        threshold_ms = self.config.inactivity_secs * 1000
        raised: List[Alert] = []
        for student in sorted(self._students):
            st = self._students[student]
            now_c = max(now, st.last_seen)
            idle = now_c - st.last_activity
            if idle >= threshold_ms and st.open_inactivity is None:
                alert = Alert(student=student, kind="Inactivity",
                              raised_at=now_c,
                              duration_secs=idle // 1000)
                st.open_inactivity = alert
                raised.append(alert)
        return raised
