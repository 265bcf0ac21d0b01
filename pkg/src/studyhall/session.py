"""Session registry: rosters, bearer tokens, heartbeat presence.

A session is one tutor seat plus any number of students. Identity is
capability-style: creating a session mints the tutor token, joining
mints a student token, and whoever holds a token is that peer. The
tutor token always re-binds the seat (device-switch takeover evicts the
old tutor peer); a tutor join without it fails TutorSeatTaken when the
seat is occupied, InvalidToken when vacant.

Presence is heartbeat-driven: Connected under stale_after_secs, Stale
under disconnect_after_secs, Disconnected past that. The sweep reports
status transitions so the hub can push roster updates and treat
Disconnected as an implicit leave.

Closed sessions are kept (joins fail SessionClosed, logs stay readable)
until process shutdown. All state is in-memory by design.
"""

from __future__ import annotations

import secrets
import threading
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .errors import (InvalidToken, SessionClosed, SessionNotFound,
                     TutorSeatTaken, UnknownPeer)
from .protocol import ALIAS_MAX, ROLES

ROLE_TUTOR = "Tutor"
ROLE_STUDENT = "Student"


@dataclass(frozen=True)
class PresenceThresholds:
    heartbeat_interval_secs: int = 15
    stale_after_secs: int = 45
    disconnect_after_secs: int = 90

    def validate(self) -> None:
        if not (0 < self.heartbeat_interval_secs
                < self.stale_after_secs < self.disconnect_after_secs):
            raise ValueError(
                "need 0 < heartbeat_interval < stale_after < disconnect_after")

    def status(self, last_heartbeat: int, now: int) -> str:
        idle = max(0, now - last_heartbeat)
        if idle < self.stale_after_secs * 1000:
            return "Connected"
        if idle < self.disconnect_after_secs * 1000:
            return "Stale"
        return "Disconnected"


def new_peer_id() -> str:
    return "p-" + secrets.token_hex(8)


def new_session_id() -> str:
    return "s-" + secrets.token_hex(8)


def new_token() -> str:
    return secrets.token_hex(16)


@dataclass
class PeerInfo:
    peer: str
    alias: str
    role: str
    joined_at: int
    last_heartbeat: int
    last_status: str = "Connected"


@dataclass
class Session:
    id: str
    created_at: int
    tutor_alias: str
    tutor_token: str
    state: str = "Open"
    tutor: Optional[str] = None  # tutor PeerId once joined
    peers: Dict[str, PeerInfo] = field(default_factory=dict)  # join order
    tokens: Dict[str, Tuple[Optional[str], str]] = field(default_factory=dict)

    def students(self) -> List[str]:
        return [p for p, info in self.peers.items()
                if info.role == ROLE_STUDENT]

    def roster(self, now: int, thresholds: PresenceThresholds) -> dict:
        return {
            "state": self.state,
            "tutor": self.tutor,
            "peers": [
                {"peer": info.peer, "alias": info.alias, "role": info.role,
                 "status": thresholds.status(info.last_heartbeat, now)}
                for info in self.peers.values()
            ],
        }


@dataclass(frozen=True)
class JoinResult:
    peer: str
    token: str
    role: str
    alias: str
    evicted_tutor: Optional[str]  # takeover: PeerId that lost the seat


class SessionStore:
    """All sessions in one process. Thread-safe via one coarse lock."""

    def __init__(self,
                 thresholds: PresenceThresholds = PresenceThresholds()) -> None:
        thresholds.validate()
        self.thresholds = thresholds
        self._sessions: Dict[str, Session] = {}
        self._lock = threading.RLock()

    def _get(self, session_id: str) -> Session:
        s = self._sessions.get(session_id)
        if s is None:
            raise SessionNotFound(f"no such session {session_id!r}")
        return s

    def get(self, session_id: str) -> Session:
        with self._lock:
            return self._get(session_id)

    def session_ids(self) -> List[str]:
        with self._lock:
            return list(self._sessions)

    def create_session(self, tutor_alias: str, now: int) -> Session:
        if not tutor_alias or len(tutor_alias) > ALIAS_MAX:
            raise ValueError(f"tutor_alias must be 1..{ALIAS_MAX} chars")
        with self._lock:
            sid = new_session_id()
            while sid in self._sessions:
                sid = new_session_id()
            s = Session(id=sid, created_at=now, tutor_alias=tutor_alias,
                        tutor_token=new_token())
            s.tokens[s.tutor_token] = (None, ROLE_TUTOR)
            self._sessions[sid] = s
            return s

    def join(self, session_id: str, alias: str, role: str, now: int,
             token: Optional[str] = None) -> JoinResult:
        if role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}")
        if not alias or len(alias) > ALIAS_MAX:
            raise ValueError(f"alias must be 1..{ALIAS_MAX} chars")
        with self._lock:
            s = self._get(session_id)
            if s.state == "Closed":
                raise SessionClosed(f"session {session_id} is closed")
            if role == ROLE_TUTOR:
                return self._join_tutor(s, alias, now, token)
            return self._join_student(s, alias, now)

    def _join_tutor(self, s: Session, alias: str, now: int,
                    token: Optional[str]) -> JoinResult:
        if token != s.tutor_token:
            if s.tutor is not None:
                raise TutorSeatTaken("tutor seat is occupied")
            raise InvalidToken("tutor join requires the session's tutor token")
        evicted = None
        if s.tutor is not None:
            evicted = s.tutor
            s.peers.pop(evicted, None)
        peer = new_peer_id()
        s.tutor = peer
        s.tokens[s.tutor_token] = (peer, ROLE_TUTOR)
        s.peers[peer] = PeerInfo(peer=peer, alias=alias, role=ROLE_TUTOR,
                                 joined_at=now, last_heartbeat=now)
        return JoinResult(peer=peer, token=s.tutor_token, role=ROLE_TUTOR,
                          alias=alias, evicted_tutor=evicted)

    def _join_student(self, s: Session, alias: str, now: int) -> JoinResult:
        peer = new_peer_id()
        while peer in s.peers:
            peer = new_peer_id()
        token = new_token()
        while token in s.tokens:
            token = new_token()
        s.tokens[token] = (peer, ROLE_STUDENT)
        s.peers[peer] = PeerInfo(peer=peer, alias=alias, role=ROLE_STUDENT,
                                 joined_at=now, last_heartbeat=now)
        return JoinResult(peer=peer, token=token, role=ROLE_STUDENT,
                          alias=alias, evicted_tutor=None)

    def authenticate(self, session_id: str,
                     token: Optional[str]) -> Tuple[str, str, str]:
        """Token -> (peer, role, alias) for a joined peer, else InvalidToken."""
        with self._lock:
            s = self._get(session_id)
            entry = s.tokens.get(token or "")
            if entry is None or entry[0] is None:
                raise InvalidToken("token does not name a joined peer")
            peer, role = entry
            info = s.peers.get(peer)
            if info is None:
                raise InvalidToken("token's peer has left")
            return peer, role, info.alias

    def leave(self, session_id: str, peer: str) -> PeerInfo:
        with self._lock:
            s = self._get(session_id)
            info = s.peers.pop(peer, None)
            if info is None:
                raise UnknownPeer(f"no such peer {peer!r}")
            if s.tutor == peer:
                s.tutor = None
                # Tutor token survives for re-join from another device.
                s.tokens[s.tutor_token] = (None, ROLE_TUTOR)
            else:
                for tok, (p, _) in list(s.tokens.items()):
                    if p == peer:
                        del s.tokens[tok]
            return info

    def heartbeat(self, session_id: str, peer: str, now: int) -> str:
        with self._lock:
            s = self._get(session_id)
            info = s.peers.get(peer)
            if info is None:
                raise UnknownPeer(f"no such peer {peer!r}")
            info.last_heartbeat = max(info.last_heartbeat, now)
            info.last_status = self.thresholds.status(info.last_heartbeat, now)
            return info.last_status

    def close_session(self, session_id: str, token: Optional[str]) -> bool:
        """Close; returns False if it was already closed (idempotent)."""
        with self._lock:
            s = self._get(session_id)
            if token != s.tutor_token:
                raise InvalidToken("closing requires the tutor token")
            if s.state == "Closed":
                return False
            s.state = "Closed"
            return True

    def sweep(self, session_id: str, now: int) -> List[Tuple[str, str, str]]:
        """Recompute presence; returns (peer, old, new) transitions."""
        with self._lock:
            s = self._get(session_id)
            out = []
            for info in s.peers.values():
                new = self.thresholds.status(info.last_heartbeat, now)
                if new != info.last_status:
                    out.append((info.peer, info.last_status, new))
                    info.last_status = new
            return out
