"""Durable per-session event log.

One append-only text file per session, one record per line:

    <global_seq> <ts> <category> <subject> <body-json>\n

global_seq starts at 1 and is gapless within a session. category is one
of Chat, Telemetry, Alert, AvatarCommand, Signal, Lifecycle; subject is
a peer id or "-" (Chat uses "*" for broadcasts). The body is compact
JSON with sorted keys; json escapes control characters inside strings,
so a raw newline byte only ever terminates a record.

Durability contract: append() returns only after the line is written
and fsync'd. Concurrent appenders are group-committed: whoever finds no
flush in flight writes and syncs every pending line, the rest wait on
the condition until their seq is covered. Coalescing delay is bounded
by one in-flight fsync, comfortably inside a 50 ms batching budget, and
no acknowledgement ever precedes the sync.

Recovery tolerates exactly one kind of damage: a torn final line from a
crash mid-write, which is truncated away. Anything else (gaps, parse
failures mid-file) is real corruption and raises StorageFailure.

Log-record subject conventions (written by the hub, relied on by
transcript()): Chat records carry the student party as subject ("*"
when broadcast), AvatarCommand records carry the target student.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple

from .clock import Clock
from .errors import SessionNotFound, StorageFailure

CATEGORIES = ("Chat", "Telemetry", "Alert", "AvatarCommand", "Signal",
              "Lifecycle")

LOG_FILENAME = "records.log"
GROUP_COMMIT_WINDOW_MS = 50  # upper bound on coalescing delay


def _check_subject(subject: str) -> None:
    if not subject or len(subject) > 200:
        raise ValueError("subject must be 1..200 chars")
    if any(c.isspace() for c in subject):
        raise ValueError("subject must not contain whitespace")


@dataclass(frozen=True)
class LogRecord:
    seq: int
    ts: int
    category: str
    subject: str
    body: dict

    def encode_line(self) -> str:
        body = json.dumps(self.body, sort_keys=True, ensure_ascii=False,
                          allow_nan=False, separators=(",", ":"))
        return f"{self.seq} {self.ts} {self.category} {self.subject} {body}\n"

    @classmethod
    def parse_line(cls, line: str) -> "LogRecord":
        parts = line.rstrip("\n").split(" ", 4)
        if len(parts) != 5:
            raise ValueError("record needs 5 space-separated fields")
        seq_s, ts_s, category, subject, body_s = parts
        seq = int(seq_s)
        ts = int(ts_s)
        if category not in CATEGORIES:
            raise ValueError(f"unknown category {category!r}")
        _check_subject(subject)
        body = json.loads(body_s)
        if not isinstance(body, dict):
            raise ValueError("body must be a JSON object")
        return cls(seq, ts, category, subject, body)


class DurableLog:
    """Append-only log for one session. Thread-safe."""

    def __init__(self, directory: Path, clock: Clock) -> None:
        self._dir = Path(directory)
        self._path = self._dir / LOG_FILENAME
        self._clock = clock
        self._records: List[LogRecord] = []
        self._cond = threading.Condition()
        self._pending: List[Tuple[int, str]] = []
        self._flushing = False
        self._flushed_seq = 0
        self._closed = False
        self._dir.mkdir(parents=True, exist_ok=True)
        self._recover()
        self._file = open(self._path, "ab")
        self._fsync_dir()

    @property
    def path(self) -> Path:
        return self._path

    def _fsync_dir(self) -> None:
        # Make the directory entry itself durable so a crash right
        # after creation cannot lose the (empty) log file.
        try:
            fd = os.open(self._dir, os.O_RDONLY)
        except OSError:
            return
        try:
            os.fsync(fd)
        finally:
            os.close(fd)

    def _recover(self) -> None:
        if not self._path.exists():
            self._flushed_seq = 0
            return
        data = self._path.read_bytes()
        *complete, tail = data.split(b"\n")
        records: List[LogRecord] = []
        for raw in complete:
            try:
                rec = LogRecord.parse_line(raw.decode("utf-8"))
            except (ValueError, UnicodeDecodeError) as e:
                raise StorageFailure(
                    f"corrupt record at line {len(records) + 1}: {e}") from None
            if rec.seq != len(records) + 1:
                raise StorageFailure(
                    f"sequence gap: expected {len(records) + 1}, got {rec.seq}")
            records.append(rec)
        if tail:
            # Torn final write; drop it and truncate the file to match.
            with open(self._path, "r+b") as f:
                f.truncate(len(data) - len(tail))
                f.flush()
                os.fsync(f.fileno())
        self._records = records
        self._flushed_seq = len(records)

    def append(self, category: str, subject: str, body: dict,
               ts: Optional[int] = None) -> LogRecord:
        """Write one record; returns only after it is on disk."""
        if category not in CATEGORIES:
            raise ValueError(f"unknown category {category!r}")
        _check_subject(subject)
        if not isinstance(body, dict):
            raise ValueError("body must be a dict")
        with self._cond:
            if self._closed:
                raise StorageFailure("log is closed")
            seq = len(self._records) + 1
            rec = LogRecord(seq, ts if ts is not None else self._clock.now(),
                            category, subject, body)
            try:
                line = rec.encode_line()
            except (TypeError, ValueError) as e:
                raise ValueError(f"body is not JSON-serializable: {e}") from None
            self._records.append(rec)
            self._pending.append((seq, line))
            while self._flushed_seq < seq:
                if self._closed:
                    # A concurrent flush failed and poisoned the log.
                    raise StorageFailure("log failed while flushing")
                if not self._flushing:
                    self._flushing = True
                    batch = self._pending
                    self._pending = []
                    upto = batch[-1][0]
                    self._cond.release()
                    ok = False
                    try:
                        self._file.write(
                            "".join(l for _, l in batch).encode("utf-8"))
                        self._file.flush()
                        os.fsync(self._file.fileno())
                        ok = True
                    except OSError as e:
                        self._cond.acquire()
                        self._flushing = False
                        self._closed = True  # poison: batch is lost
                        self._cond.notify_all()
                        raise StorageFailure(f"append failed: {e}") from None
                    finally:
                        if ok:
                            self._cond.acquire()
                            self._flushing = False
                            self._flushed_seq = max(self._flushed_seq, upto)
                            self._cond.notify_all()
                else:
                    self._cond.wait(GROUP_COMMIT_WINDOW_MS / 1000)
        return rec

    def query(self, categories: Optional[Iterable[str]] = None,
              subject: Optional[str] = None,
              since_seq: Optional[int] = None,
              until_seq: Optional[int] = None,
              ts_from: Optional[int] = None,
              ts_to: Optional[int] = None) -> List[LogRecord]:
        """Filtered records in seq order. since_seq is exclusive."""
        if categories is not None:
            cats = set(categories)
            bad = cats - set(CATEGORIES)
            if bad:
                raise ValueError(f"unknown category {sorted(bad)[0]!r}")
        else:
            cats = None
        with self._cond:
            snapshot = list(self._records)
        out = []
        for rec in snapshot:
            if cats is not None and rec.category not in cats:
                continue
            if subject is not None and rec.subject != subject:
                continue
            if since_seq is not None and rec.seq <= since_seq:
                continue
            if until_seq is not None and rec.seq > until_seq:
                continue
            if ts_from is not None and rec.ts < ts_from:
                continue
            if ts_to is not None and rec.ts > ts_to:
                continue
            out.append(rec)
        return out

    def transcript(self, student: str) -> List[LogRecord]:
        """Chat and avatar traffic involving one student, in order.

        Broadcast chat (subject "*") is part of every student's
        conversation and is included.
        """
        _check_subject(student)
        with self._cond:
            snapshot = list(self._records)
        return [r for r in snapshot
                if r.category in ("Chat", "AvatarCommand")
                and r.subject in (student, "*")]

    def last_seq(self) -> int:
        with self._cond:
            return len(self._records)

    def close(self) -> None:
        with self._cond:
            if self._closed:
                return
            self._closed = True
            self._file.flush()
            os.fsync(self._file.fileno())
            self._file.close()


class LogManager:
    """Creates and tracks per-session logs under one data directory."""

    def __init__(self, data_dir: Path, clock: Clock) -> None:
        self._data_dir = Path(data_dir)
        self._clock = clock
        self._logs: Dict[str, DurableLog] = {}
        self._lock = threading.Lock()
        self._data_dir.mkdir(parents=True, exist_ok=True)

    def open(self, session_id: str) -> DurableLog:
        _check_subject(session_id)
        if "/" in session_id or session_id in (".", ".."):
            raise ValueError(f"unsafe session id {session_id!r}")
        with self._lock:
            log = self._logs.get(session_id)
            if log is None:
                log = DurableLog(self._data_dir / session_id, self._clock)
                self._logs[session_id] = log
            return log

    def get(self, session_id: str) -> DurableLog:
        with self._lock:
            log = self._logs.get(session_id)
        if log is None:
            raise SessionNotFound(f"no log for session {session_id!r}")
        return log

    def close_all(self) -> None:
        with self._lock:
            logs = list(self._logs.values())
        for log in logs:
            log.close()
