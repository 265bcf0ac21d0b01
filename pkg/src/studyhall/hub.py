"""Classroom hub: everything between the wire and the domain modules.

The hub owns one Room per session. A Room bundles the session's log,
alert engine, signaling pairings, attention tracker, zoom state, and a
session-monotone clock view, all mutated under one re-entrant lock so
any transport (asyncio gateway, threaded harness, plain tests) gets the
same serialization the protocol promises.

Delivery is pluggable: transports attach a sink per peer, a callable
(sender, kind, payload) -> bool. The hub hands sinks fully validated
payload dicts; envelope seq/ts are assigned by the transport at write
time because seq numbering is a per-connection property. Sinks must
never block; returning False means the peer is unreachable and the hub
forgets it.

Noteworthy behavior knitted together here rather than in any one
domain module:

  - any inbound envelope counts as a presence heartbeat; explicit
    Heartbeat envelopes exist for idle-but-alive clients
  - alerts go to the tutor only; roster updates go to everyone
  - a tutor dispatch appends exactly two log records (AvatarCommand
    plus a Chat record so transcripts read chronologically)
  - attention_wave is decided per dispatch from the attention tracker;
    targeted tutor chat also counts as addressing a student
  - zoom changes, roster changes, and pairing completions all funnel
    through one quality reconciliation pass, which only renegotiates
    pairings that are currently Connected; a pairing mid-renegotiation
    is reconciled again when its answer lands
  - a student who goes Disconnected is treated as having left
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Tuple

from .alerts import AlertEngine, TelemetryEvent, render_alert
from .avatar import AttentionTracker, AvatarCommand, canned_prompts, compose_command
from .clock import Clock, MonotoneView, WallClock
from .config import GatewayConfig
from .errors import (RoleViolation, SessionClosed, SessionNotFound,
                     UnknownPeer, InvalidToken)
from .eventlog import DurableLog, LogManager
from .protocol import (BROADCAST, SERVER_SENDER, Envelope, MessageKind)
from .quality import allocate
from .session import (JoinResult, ROLE_STUDENT, ROLE_TUTOR,
                      SessionStore)
from .signaling import SignalingHub

SinkFn = Callable[[str, MessageKind, dict], bool]
CloseFn = Callable[[str], None]


@dataclass
class Room:
    session_id: str
    log: DurableLog
    clock: MonotoneView
    alerts: AlertEngine
    signaling: SignalingHub
    attention: AttentionTracker
    lock: threading.RLock = field(default_factory=threading.RLock)
    zoomed: Optional[str] = None
    attached: Dict[str, SinkFn] = field(default_factory=dict)
    close_cbs: Dict[str, CloseFn] = field(default_factory=dict)


class ClassroomHub:
    def __init__(self, config: GatewayConfig,
                 base_clock: Optional[Clock] = None) -> None:
        self.config = config
        self.base_clock = base_clock if base_clock is not None else WallClock()
        self.store = SessionStore(config.presence)
        self.logs = LogManager(Path(config.data_dir), self.base_clock)
        self._rooms: Dict[str, Room] = {}
        self._rooms_lock = threading.Lock()

    # room plumbing

    def _room(self, session_id: str) -> Room:
        with self._rooms_lock:
            room = self._rooms.get(session_id)
        if room is None:
            raise SessionNotFound(f"no such session {session_id!r}")
        return room

    def room_clock(self, session_id: str) -> MonotoneView:
        return self._room(session_id).clock

    def session_ids(self) -> List[str]:
        with self._rooms_lock:
            return list(self._rooms)

    def _send(self, room: Room, peer: str, sender: str, kind: MessageKind,
              payload: dict) -> bool:
        sink = room.attached.get(peer)
        if sink is None:
            return False
        if not sink(sender, kind, payload):
            room.attached.pop(peer, None)
            room.close_cbs.pop(peer, None)
            return False
        return True

    def _broadcast(self, room: Room, sender: str, kind: MessageKind,
                   payload: dict) -> None:
        for peer in list(room.attached):
            self._send(room, peer, sender, kind, payload)

    def _roster(self, room: Room) -> dict:
        s = self.store.get(room.session_id)
        return s.roster(room.clock.now(), self.store.thresholds)

    def _broadcast_roster(self, room: Room) -> None:
        self._broadcast(room, SERVER_SENDER, MessageKind.ROSTER_UPDATE,
                        self._roster(room))

    def _on_signal_transition(self, room: Room, student: str, old: str,
                              new: str, trigger: str, detail: dict) -> None:
        body = {"student": student, "from": old, "to": new, "input": trigger}
        body.update(detail)
        room.log.append("Signal", student, body, ts=room.clock.now())
        if new == "Connected":
            self._reconcile_quality(room)

    # session lifecycle

    def create_session(self, tutor_alias: str) -> Tuple[str, str]:
        session = self.store.create_session(tutor_alias,
                                            self.base_clock.now())
        clock = MonotoneView(self.base_clock)
        log = self.logs.open(session.id)
        room = Room(session_id=session.id, log=log, clock=clock,
                    alerts=AlertEngine(self.config.alert_rules),
                    signaling=None,  # set below; needs the room
                    attention=AttentionTracker())
        room.signaling = SignalingHub(
            get_tutor=lambda: self.store.get(session.id).tutor,
            is_student=lambda p: (
                (info := self.store.get(session.id).peers.get(p)) is not None
                and info.role == ROLE_STUDENT),
            deliver=lambda to, sender, kind, payload: self._send(
                room, to, sender, kind, payload),
            on_transition=lambda st, old, new, trig, det: (
                self._on_signal_transition(room, st, old, new, trig, det)))
        with self._rooms_lock:
            self._rooms[session.id] = room
        log.append("Lifecycle", "-",
                   {"event": "session_created", "tutor_alias": tutor_alias},
                   ts=clock.now())
        return session.id, session.tutor_token

    def join(self, session_id: str, alias: str, role: str,
             token: Optional[str] = None) -> Tuple[JoinResult, dict]:
        room = self._room(session_id)
        with room.lock:
            now = room.clock.now()
            res = self.store.join(session_id, alias, role, now, token)
            if res.evicted_tutor is not None:
                room.signaling.close_all("tutor takeover")
                room.log.append("Lifecycle", res.evicted_tutor,
                                {"event": "takeover",
                                 "new_peer": res.peer}, ts=now)
                self._close_peer(room, res.evicted_tutor, "tutor takeover")
            if role == ROLE_STUDENT:
                room.alerts.register_student(res.peer, now)
                room.signaling.ensure_pairing(res.peer)
            else:
                for s in self.store.get(session_id).students():
                    room.signaling.ensure_pairing(s)
            room.log.append("Lifecycle", res.peer,
                            {"event": "join", "alias": alias, "role": role},
                            ts=now)
            roster = self._roster(room)
            self._broadcast(room, SERVER_SENDER, MessageKind.ROSTER_UPDATE,
                            roster)
            self._reconcile_quality(room)
            return res, roster

    def authenticate(self, session_id: str,
                     token: Optional[str]) -> Tuple[str, str, str]:
        return self.store.authenticate(session_id, token)

    def attach(self, session_id: str, peer: str, sink: SinkFn,
               close_cb: Optional[CloseFn] = None) -> None:
        room = self._room(session_id)
        with room.lock:
            if self.store.get(session_id).peers.get(peer) is None:
                raise UnknownPeer(f"peer {peer!r} is not in the roster")
            old_cb = room.close_cbs.pop(peer, None)
            if old_cb is not None:
                old_cb("replaced by a new connection")
            room.attached[peer] = sink
            if close_cb is not None:
                room.close_cbs[peer] = close_cb

    def detach(self, session_id: str, peer: str) -> None:
        """Socket gone; roster membership survives until presence timeout."""
        try:
            room = self._room(session_id)
        except SessionNotFound:
            return
        with room.lock:
            room.attached.pop(peer, None)
            room.close_cbs.pop(peer, None)

    def _close_peer(self, room: Room, peer: str, reason: str) -> None:
        cb = room.close_cbs.pop(peer, None)
        room.attached.pop(peer, None)
        if cb is not None:
            cb(reason)

    def leave(self, session_id: str, peer: str, reason: str = "leave") -> dict:
        room = self._room(session_id)
        with room.lock:
            return self._leave_locked(room, peer, reason)

    def _leave_locked(self, room: Room, peer: str, reason: str) -> dict:
        info = self.store.leave(room.session_id, peer)
        now = room.clock.now()
        if info.role == ROLE_TUTOR:
            room.signaling.close_all("tutor left")
            room.zoomed = None
        else:
            room.signaling.close_pairing(peer, "student left")
            room.alerts.remove_student(peer)
            room.attention.forget(peer)
            if room.zoomed == peer:
                room.zoomed = None
        room.log.append("Lifecycle", peer,
                        {"event": "leave", "alias": info.alias,
                         "role": info.role, "reason": reason}, ts=now)
        self._close_peer(room, peer, reason)
        roster = self._roster(room)
        self._broadcast(room, SERVER_SENDER, MessageKind.ROSTER_UPDATE, roster)
        self._reconcile_quality(room)
        return roster

    def heartbeat(self, session_id: str, peer: str) -> str:
        room = self._room(session_id)
        with room.lock:
            return self.store.heartbeat(session_id, peer, room.clock.now())

    def close_session(self, session_id: str, token: Optional[str]) -> dict:
        room = self._room(session_id)
        with room.lock:
            first = self.store.close_session(session_id, token)
            if first:
                now = room.clock.now()
                room.signaling.close_all("session closed")
                room.log.append("Lifecycle", "-", {"event": "close"}, ts=now)
                self._broadcast_roster(room)
                for peer in list(room.attached):
                    self._close_peer(room, peer, "session closed")
            return {"session_id": session_id,
                    "records": room.log.last_seq(),
                    "log_path": str(room.log.path)}

    # envelope routing (socket transport entry point)

    def handle_envelope(self, session_id: str, peer: str, role: str,
                        env: Envelope) -> None:
        """Apply one inbound client envelope. Raises StudyhallError
        subclasses for domain rejections; the transport turns those
        into Error envelopes without dropping the connection."""
        room = self._room(session_id)
        with room.lock:
            session = self.store.get(session_id)
            if session.state == "Closed":
                raise SessionClosed("session is closed")
            self.store.heartbeat(session_id, peer, room.clock.now())
            kind = env.kind
            p = env.payload
            if kind == MessageKind.HEARTBEAT:
                return
            if kind == MessageKind.JOIN:
                ack = {"peer": peer, "role": role,
                       "roster": self._roster(room),
                       "ice_servers": list(self.config.ice_servers),
                       "heartbeat_secs":
                           self.config.presence.heartbeat_interval_secs}
                self._send(room, peer, SERVER_SENDER, MessageKind.JOIN_ACK,
                           ack)
                return
            if kind == MessageKind.LEAVE:
                self._leave_locked(room, peer, p.get("reason") or "leave")
                return
            if kind == MessageKind.OFFER:
                room.signaling.relay_offer(peer, p["target"], p["sdp"])
                return
            if kind == MessageKind.ANSWER:
                room.signaling.relay_answer(peer, p["target"], p["sdp"])
                return
            if kind == MessageKind.ICE_CANDIDATE:
                room.signaling.relay_candidate(peer, p["target"],
                                               p["candidate"])
                return
            if kind == MessageKind.QUALITY_REQUEST:
                self._set_zoom_locked(room, peer, role, p["target"])
                return
            if kind == MessageKind.CHAT:
                self._chat_locked(room, peer, role, p)
                return
            if kind == MessageKind.TELEMETRY:
                self._telemetry_locked(room, peer, role, p, env.ts)
                return
            if kind == MessageKind.AVATAR_COMMAND:
                self._dispatch_locked(room, peer, role, p["target"],
                                      p["text"], p["show_bubble"])
                return
            raise RoleViolation(f"clients may not send {kind.value}")

    # chat

    def _chat_locked(self, room: Room, peer: str, role: str,
                     payload: dict) -> None:
        frm, to, text = payload["from"], payload["to"], payload["text"]
        if frm != peer:
            raise RoleViolation("chat 'from' must be the sending peer")
        session = self.store.get(room.session_id)
        now = room.clock.now()
        body = {"from": frm, "to": to, "text": text}
        if to == BROADCAST:
            if role != ROLE_TUTOR:
                raise RoleViolation("only the tutor broadcasts chat")
            room.log.append("Chat", BROADCAST, body, ts=now)
            for s in session.students():
                self._send(room, s, frm, MessageKind.CHAT, payload)
            return
        target = session.peers.get(to)
        if target is None:
            raise UnknownPeer(f"chat target {to!r} is not in the roster")
        if role == ROLE_STUDENT and target.role != ROLE_TUTOR:
            raise RoleViolation("students chat with the tutor only")
        subject = to if target.role == ROLE_STUDENT else frm
        room.log.append("Chat", subject, body, ts=now)
        if role == ROLE_TUTOR and target.role == ROLE_STUDENT:
            room.attention.note_addressed(to, now)
        self._send(room, to, frm, MessageKind.CHAT, payload)

    # telemetry and alerts

    def _telemetry_locked(self, room: Room, peer: str, role: str,
                          payload: dict, client_ts: int) -> None:
        if role != ROLE_STUDENT:
            raise RoleViolation("only students emit telemetry")
        now = room.clock.now()
        body = {"kind": payload["kind"], "client_ts": client_ts}
        if "correct" in payload:
            body["correct"] = payload["correct"]
        if "detail" in payload:
            body["detail"] = payload["detail"]
        room.log.append("Telemetry", peer, body, ts=now)
        event = TelemetryEvent(student=peer, kind=payload["kind"], ts=now,
                               correct=payload.get("correct"),
                               detail=payload.get("detail"))
        raised = room.alerts.ingest(event)
        self._route_alerts(room, raised, "raised")
        self._route_alerts(room, room.alerts.drain_cleared(), "cleared")

    def ingest_telemetry(self, session_id: str, peer: str, kind: str,
                         correct: Optional[bool] = None,
                         detail: Optional[str] = None) -> None:
        room = self._room(session_id)
        with room.lock:
            payload = {"kind": kind}
            if correct is not None:
                payload["correct"] = correct
            if detail is not None:
                payload["detail"] = detail
            self._telemetry_locked(room, peer, ROLE_STUDENT, payload,
                                   room.clock.now())

    def _alias_of(self, room: Room, peer: str) -> str:
        info = self.store.get(room.session_id).peers.get(peer)
        return info.alias if info is not None else peer

    def _route_alerts(self, room: Room, alerts: Iterable, phase: str) -> None:
        session = self.store.get(room.session_id)
        for alert in alerts:
            text = render_alert(alert, self._alias_of(room, alert.student))
            payload = alert.to_payload(text)
            body = dict(payload)
            body["phase"] = phase
            room.log.append("Alert", alert.student, body,
                            ts=room.clock.now())
            if session.tutor is not None:
                self._send(room, session.tutor, SERVER_SENDER,
                           MessageKind.ALERT, payload)

    # avatar dispatch

    def dispatch(self, session_id: str, peer: str, target: str, text: str,
                 show_bubble: bool) -> AvatarCommand:
        room = self._room(session_id)
        with room.lock:
            session = self.store.get(session_id)
            role = (ROLE_TUTOR if session.tutor == peer else ROLE_STUDENT)
            return self._dispatch_locked(room, peer, role, target, text,
                                         show_bubble)

    def _dispatch_locked(self, room: Room, peer: str, role: str, target: str,
                         text: str, show_bubble: bool) -> AvatarCommand:
        if role != ROLE_TUTOR:
            raise RoleViolation("only the tutor dispatches avatar commands")
        session = self.store.get(room.session_id)
        info = session.peers.get(target)
        if info is None or info.role != ROLE_STUDENT:
            raise UnknownPeer(f"dispatch target {target!r} is not a student")
        now = room.clock.now()
        wave = room.attention.wave_due(target, now)
        cmd = compose_command(target, text, show_bubble, wave,
                              lexicon=self.config.lexicon)
        payload = cmd.to_payload()
        room.log.append("AvatarCommand", target, payload, ts=now)
        room.log.append("Chat", target,
                        {"from": peer, "to": target, "text": text}, ts=now)
        room.attention.note_addressed(target, now)
        self._send(room, target, SERVER_SENDER, MessageKind.AVATAR_COMMAND,
                   payload)
        return cmd

    def prompts(self) -> List[str]:
        return canned_prompts(self.config.extra_prompts)

    # zoom and quality

    def set_zoom(self, session_id: str, peer: str,
                 target: Optional[str]) -> None:
        room = self._room(session_id)
        with room.lock:
            session = self.store.get(session_id)
            role = ROLE_TUTOR if session.tutor == peer else ROLE_STUDENT
            self._set_zoom_locked(room, peer, role, target)

    def _set_zoom_locked(self, room: Room, peer: str, role: str,
                         target: Optional[str]) -> None:
        if role != ROLE_TUTOR:
            raise RoleViolation("only the tutor zooms")
        session = self.store.get(room.session_id)
        if target is not None:
            info = session.peers.get(target)
            if info is None or info.role != ROLE_STUDENT:
                raise UnknownPeer(f"zoom target {target!r} is not a student")
        room.zoomed = target
        room.log.append("Lifecycle", target or "-",
                        {"event": "zoom", "target": target},
                        ts=room.clock.now())
        self._reconcile_quality(room)

    def _reconcile_quality(self, room: Room) -> None:
        session = self.store.get(room.session_id)
        feeds = [s for s in session.students()
                 if room.signaling.state_of(s) not in (None, "Closed")]
        if not feeds:
            return
        zoom = room.zoomed if room.zoomed in feeds else None
        alloc = allocate(feeds, zoom, self.config.bandwidth_budget_kbps,
                         self.config.tiers)
        for s in feeds:
            pairing = room.signaling.pairing(s)
            desired = alloc.assignments[s]
            if (pairing.state == "Connected"
                    and pairing.current_tier != desired):
                params = self.config.tiers[desired].to_params()
                room.signaling.request_renegotiation(s, desired, params)

    # periodic work

    def tick(self) -> None:
        """Presence sweep + inactivity rules across all open sessions."""
        for sid in self.session_ids():
            try:
                room = self._room(sid)
            except SessionNotFound:
                continue
            with room.lock:
                try:
                    session = self.store.get(sid)
                except SessionNotFound:
                    continue
                if session.state == "Closed":
                    continue
                now = room.clock.now()
                transitions = self.store.sweep(sid, now)
                gone = [p for p, _, new in transitions
                        if new == "Disconnected"]
                for peer in gone:
                    if peer in session.peers:
                        self._leave_locked(room, peer, "presence timeout")
                if transitions and not gone:
                    self._broadcast_roster(room)
                self._route_alerts(room, room.alerts.tick(now), "raised")
                self._route_alerts(room, room.alerts.drain_cleared(),
                                   "cleared")

    # log access

    def query_events(self, session_id: str, token: Optional[str],
                     since_seq: Optional[int] = None,
                     categories: Optional[Iterable[str]] = None) -> List[dict]:
        room = self._room(session_id)
        session = self.store.get(session_id)
        if token != session.tutor_token:
            raise InvalidToken("event queries require the tutor token")
        records = room.log.query(categories=categories, since_seq=since_seq)
        return [{"seq": r.seq, "ts": r.ts, "category": r.category,
                 "subject": r.subject, "body": r.body} for r in records]

    def transcript(self, session_id: str, token: Optional[str],
                   student: str) -> List[dict]:
        room = self._room(session_id)
        session = self.store.get(session_id)
        if token != session.tutor_token:
            raise InvalidToken("transcripts require the tutor token")
        return [{"seq": r.seq, "ts": r.ts, "category": r.category,
                 "subject": r.subject, "body": r.body}
                for r in room.log.transcript(student)]

    def shutdown(self) -> None:
        """Flush and close every session log."""
        self.logs.close_all()
