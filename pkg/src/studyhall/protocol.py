"""Wire protocol: message taxonomy, envelope framing, canonical encoding.

Every frame on a session socket is exactly one JSON document in UTF-8.
Encoding is canonical so identical envelopes are identical bytes:

  - top-level fields in the fixed order v, seq, ts, session, sender,
    type, payload
  - payload object keys sorted lexicographically at every depth
  - no insignificant whitespace, non-ASCII kept literal (UTF-8)

decode() is the trust boundary for remote input. It never raises
anything but the typed errors below, no matter how hostile the bytes:
MalformedFrame for structural damage, UnknownKind for an unrecognized
type, VersionMismatch for a foreign protocol version. Unknown top-level
or payload fields are rejected rather than ignored; lenient parsing of
a protocol this small only hides sender bugs.

Note on ints: bool is an int subclass in Python, so every integer check
here explicitly rejects bools. Without that, {"seq": true} passes for
seq == 1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable

PROTOCOL_VERSION = 1
MAX_FRAME_BYTES = 256 * 1024

SERVER_SENDER = "server"
BROADCAST = "*"

CHAT_TEXT_MAX = 2000
ALIAS_MAX = 120
SDP_MAX = 200_000
CANDIDATE_MAX = 2048
DETAIL_MAX = 2000
REASON_MAX = 500

ROLES = ("Tutor", "Student")
TIER_NAMES = ("High", "Mid", "Low", "Frozen")
VISEME_NAMES = ("Rest", "Open", "Closed", "LipTeeth", "Round", "Silence")
GESTURE_NAMES = ("Wave", "Nod", "ThumbsUp", "None")
TELEMETRY_KINDS = ("MouseClick", "KeyInput", "AnswerSubmitted", "Heartbeat")
ALERT_KINDS = ("Inactivity", "RepeatedIncorrect")
PRESENCE_STATES = ("Connected", "Stale", "Disconnected")
SESSION_STATES = ("Open", "Closed")


class MessageKind(str, Enum):
    JOIN = "Join"
    JOIN_ACK = "JoinAck"
    LEAVE = "Leave"
    ROSTER_UPDATE = "RosterUpdate"
    OFFER = "Offer"
    ANSWER = "Answer"
    ICE_CANDIDATE = "IceCandidate"
    QUALITY_REQUEST = "QualityRequest"
    CHAT = "Chat"
    AVATAR_COMMAND = "AvatarCommand"
    TELEMETRY = "Telemetry"
    ALERT = "Alert"
    HEARTBEAT = "Heartbeat"
    ERROR = "Error"


_KIND_BY_NAME = {k.value: k for k in MessageKind}


class ProtocolError(Exception):
    """Base for framing/validation failures; .code feeds Error envelopes."""

    code = "protocol error"


class MalformedFrame(ProtocolError):
    code = "malformed frame"


class UnknownKind(ProtocolError):
    code = "unknown kind"


class VersionMismatch(ProtocolError):
    code = "version mismatch"


class InvalidEnvelope(ProtocolError):
    """Raised by encode() when handed a locally constructed bad envelope."""

    code = "invalid envelope"


class SequenceViolation(ProtocolError):
    code = "sequence violation"


@dataclass(frozen=True)
class Envelope:
    seq: int
    ts: int
    session_id: str
    sender: str
    kind: MessageKind
    payload: dict
    version: int = PROTOCOL_VERSION


def _fail(msg: str) -> None:
    raise MalformedFrame(msg)


def _check_str(v: Any, name: str, min_len: int = 1, max_len: int = 10_000) -> None:
    if not isinstance(v, str):
        _fail(f"{name} must be a string")
    if not (min_len <= len(v) <= max_len):
        _fail(f"{name} length must be in [{min_len}, {max_len}]")


def _check_int(v: Any, name: str, lo: int = 0, hi: int = 2**63 - 1) -> None:
    if isinstance(v, bool) or not isinstance(v, int):
        _fail(f"{name} must be an integer")
    if not (lo <= v <= hi):
        _fail(f"{name} must be in [{lo}, {hi}]")


def _check_bool(v: Any, name: str) -> None:
    if not isinstance(v, bool):
        _fail(f"{name} must be a boolean")


def _check_enum(v: Any, name: str, allowed: tuple) -> None:
    if not isinstance(v, str) or v not in allowed:
        _fail(f"{name} must be one of {allowed}")


def _check_keys(p: dict, required: tuple, optional: tuple = ()) -> None:
    for k in required:
        if k not in p:
            _fail(f"missing payload field {k!r}")
    extra = set(p) - set(required) - set(optional)
    if extra:
        _fail(f"unexpected payload field {sorted(extra)[0]!r}")


def _check_roster(v: Any, name: str) -> None:
    if not isinstance(v, dict):
        _fail(f"{name} must be an object")
    _check_keys(v, ("state", "tutor", "peers"))
    _check_enum(v["state"], f"{name}.state", SESSION_STATES)
    if v["tutor"] is not None:
        _check_str(v["tutor"], f"{name}.tutor", 1, 200)
    peers = v["peers"]
    if not isinstance(peers, list) or len(peers) > 500:
        _fail(f"{name}.peers must be a list of at most 500 entries")
    for entry in peers:
        if not isinstance(entry, dict):
            _fail(f"{name}.peers entries must be objects")
        _check_keys(entry, ("peer", "alias", "role", "status"))
        _check_str(entry["peer"], "peer", 1, 200)
        _check_str(entry["alias"], "alias", 1, ALIAS_MAX)
        _check_enum(entry["role"], "role", ROLES)
        _check_enum(entry["status"], "status", PRESENCE_STATES)


def _check_timeline(v: Any, name: str) -> None:
    if not isinstance(v, dict):
        _fail(f"{name} must be an object")
    _check_keys(v, ("total_ms", "entries"))
    _check_int(v["total_ms"], f"{name}.total_ms", 0, 86_400_000)
    entries = v["entries"]
    if not isinstance(entries, list) or len(entries) > 4000:
        _fail(f"{name}.entries must be a list of at most 4000 entries")
    for e in entries:
        if not isinstance(e, list) or len(e) != 3:
            _fail(f"{name}.entries items must be [viseme, start_ms, duration_ms]")
        _check_enum(e[0], "viseme", VISEME_NAMES)
        _check_int(e[1], "start_ms", 0, 86_400_000)
        _check_int(e[2], "duration_ms", 1, 86_400_000)


def _v_join(p: dict) -> None:
    _check_keys(p, ("alias", "role"))
    _check_str(p["alias"], "alias", 1, ALIAS_MAX)
    _check_enum(p["role"], "role", ROLES)


def _v_join_ack(p: dict) -> None:
    _check_keys(p, ("peer", "role", "roster", "ice_servers", "heartbeat_secs"))
    _check_str(p["peer"], "peer", 1, 200)
    _check_enum(p["role"], "role", ROLES)
    _check_roster(p["roster"], "roster")
    servers = p["ice_servers"]
    if not isinstance(servers, list) or len(servers) > 16:
        _fail("ice_servers must be a list of at most 16 entries")
    for s in servers:
        _check_str(s, "ice_servers entry", 1, 500)
    _check_int(p["heartbeat_secs"], "heartbeat_secs", 1, 3600)


def _v_leave(p: dict) -> None:
    _check_keys(p, (), ("reason",))
    if "reason" in p:
        _check_str(p["reason"], "reason", 0, REASON_MAX)


def _v_roster_update(p: dict) -> None:
    _check_roster(p, "payload")


def _v_offer(p: dict) -> None:
    _check_keys(p, ("target", "sdp"))
    _check_str(p["target"], "target", 1, 200)
    _check_str(p["sdp"], "sdp", 1, SDP_MAX)


def _v_ice(p: dict) -> None:
    _check_keys(p, ("target", "candidate"))
    _check_str(p["target"], "target", 1, 200)
    _check_str(p["candidate"], "candidate", 1, CANDIDATE_MAX)


_PARAM_KEYS = ("width", "height", "bitrate_kbps", "frame_interval_ms")


def _v_quality(p: dict) -> None:
    # Two shapes share the kind: a tutor zoom request carries target
    # only (null means zoom out); the server-to-student renegotiation
    # directive adds tier and params.
    _check_keys(p, ("target",), ("tier", "params"))
    if p["target"] is not None:
        _check_str(p["target"], "target", 1, 200)
    if "tier" in p:
        _check_enum(p["tier"], "tier", TIER_NAMES)
        if p["target"] is None:
            _fail("tier requires a concrete target")
    if "params" in p:
        params = p["params"]
        if not isinstance(params, dict):
            _fail("params must be an object")
        _check_keys(params, (), _PARAM_KEYS)
        for k, v in params.items():
            _check_int(v, f"params.{k}", 0, 1_000_000)


def _v_chat(p: dict) -> None:
    _check_keys(p, ("from", "to", "text"))
    _check_str(p["from"], "from", 1, 200)
    _check_str(p["to"], "to", 1, 200)
    _check_str(p["text"], "text", 1, CHAT_TEXT_MAX)


def _v_avatar(p: dict) -> None:
    # Sparse form (tutor dispatch request): target/text/show_bubble.
    # Full form (server to student) adds gesture/attention_wave/timeline.
    _check_keys(p, ("target", "text", "show_bubble"),
                ("gesture", "attention_wave", "timeline"))
    _check_str(p["target"], "target", 1, 200)
    _check_str(p["text"], "text", 1, CHAT_TEXT_MAX)
    _check_bool(p["show_bubble"], "show_bubble")
    if "gesture" in p:
        _check_enum(p["gesture"], "gesture", GESTURE_NAMES)
    if "attention_wave" in p:
        _check_bool(p["attention_wave"], "attention_wave")
    if "timeline" in p:
        _check_timeline(p["timeline"], "timeline")


def _v_telemetry(p: dict) -> None:
    _check_keys(p, ("kind",), ("correct", "detail"))
    _check_enum(p["kind"], "kind", TELEMETRY_KINDS)
    if p["kind"] == "AnswerSubmitted":
        if "correct" not in p:
            _fail("AnswerSubmitted requires 'correct'")
        _check_bool(p["correct"], "correct")
    elif "correct" in p:
        _fail(f"'correct' is only valid for AnswerSubmitted, not {p['kind']}")
    if "detail" in p:
        _check_str(p["detail"], "detail", 0, DETAIL_MAX)


def _v_alert(p: dict) -> None:
    _check_keys(p, ("student", "kind", "raised_at", "text"),
                ("cleared_at", "duration_secs", "count", "window_secs"))
    _check_str(p["student"], "student", 1, 200)
    _check_enum(p["kind"], "kind", ALERT_KINDS)
    _check_int(p["raised_at"], "raised_at")
    _check_str(p["text"], "text", 1, 1000)
    if "cleared_at" in p and p["cleared_at"] is not None:
        _check_int(p["cleared_at"], "cleared_at")
    if p["kind"] == "Inactivity":
        if "duration_secs" not in p:
            _fail("Inactivity alert requires duration_secs")
        _check_int(p["duration_secs"], "duration_secs")
        if "count" in p or "window_secs" in p:
            _fail("count/window_secs are not valid for Inactivity")
    else:
        if "count" not in p or "window_secs" not in p:
            _fail("RepeatedIncorrect alert requires count and window_secs")
        _check_int(p["count"], "count", 1)
        _check_int(p["window_secs"], "window_secs", 1)
        if "duration_secs" in p:
            _fail("duration_secs is not valid for RepeatedIncorrect")


def _v_heartbeat(p: dict) -> None:
    _check_keys(p, ())


def _v_error(p: dict) -> None:
    _check_keys(p, ("code", "message"))
    _check_str(p["code"], "code", 1, 100)
    _check_str(p["message"], "message", 0, 2000)


_VALIDATORS: dict[MessageKind, Callable[[dict], None]] = {
    MessageKind.JOIN: _v_join,
    MessageKind.JOIN_ACK: _v_join_ack,
    MessageKind.LEAVE: _v_leave,
    MessageKind.ROSTER_UPDATE: _v_roster_update,
    MessageKind.OFFER: _v_offer,
    MessageKind.ANSWER: _v_offer,
    MessageKind.ICE_CANDIDATE: _v_ice,
    MessageKind.QUALITY_REQUEST: _v_quality,
    MessageKind.CHAT: _v_chat,
    MessageKind.AVATAR_COMMAND: _v_avatar,
    MessageKind.TELEMETRY: _v_telemetry,
    MessageKind.ALERT: _v_alert,
    MessageKind.HEARTBEAT: _v_heartbeat,
    MessageKind.ERROR: _v_error,
}


def validate_payload(kind: MessageKind, payload: Any) -> None:
    """Raise MalformedFrame unless payload is a valid object for kind."""
    if not isinstance(payload, dict):
        _fail("payload must be an object")
    for k in payload:
        if not isinstance(k, str):
            _fail("payload keys must be strings")
    _VALIDATORS[kind](payload)


def _canonical(value: Any) -> Any:
    # Rebuild dicts with sorted keys at every depth; dict literals keep
    # insertion order, so the rebuilt structure serializes sorted.
    if isinstance(value, dict):
        return {k: _canonical(value[k]) for k in sorted(value)}
    if isinstance(value, (list, tuple)):
        return [_canonical(v) for v in value]
    return value


def encode(env: Envelope) -> bytes:
    """Serialize to canonical wire bytes; InvalidEnvelope on a bad one."""
    try:
        _validate_envelope_fields(env.version, env.seq, env.ts,
                                  env.session_id, env.sender)
        if not isinstance(env.kind, MessageKind):
            _fail("kind must be a MessageKind")
        validate_payload(env.kind, env.payload)
    except MalformedFrame as e:
        raise InvalidEnvelope(str(e)) from None
    doc = {
        "v": env.version,
        "seq": env.seq,
        "ts": env.ts,
        "session": env.session_id,
        "sender": env.sender,
        "type": env.kind.value,
        "payload": _canonical(env.payload),
    }
    data = json.dumps(doc, ensure_ascii=False, allow_nan=False,
                      separators=(",", ":")).encode("utf-8")
    if len(data) > MAX_FRAME_BYTES:
        raise InvalidEnvelope(f"frame exceeds {MAX_FRAME_BYTES} bytes")
    return data


def _validate_envelope_fields(version: Any, seq: Any, ts: Any,
                              session_id: Any, sender: Any) -> None:
    _check_int(version, "v", 1, 1)
    _check_int(seq, "seq", 1)
    _check_int(ts, "ts", 0)
    _check_str(session_id, "session", 1, 200)
    _check_str(sender, "sender", 1, 200)


_TOP_FIELDS = ("v", "seq", "ts", "session", "sender", "type", "payload")


def _reject_constant(name: str) -> None:
    # NaN/Infinity are JSON extensions json.loads would otherwise accept.
    _fail(f"non-finite number {name!r}")


def decode(data: bytes | str) -> Envelope:
    """Parse one frame into a validated Envelope.

    Raises MalformedFrame, UnknownKind, or VersionMismatch; nothing
    else escapes, including RecursionError from deeply nested input.
    """
    if isinstance(data, bytes):
        if len(data) > MAX_FRAME_BYTES:
            _fail(f"frame exceeds {MAX_FRAME_BYTES} bytes")
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError:
            _fail("frame is not valid UTF-8")
    elif isinstance(data, str):
        text = data
        if len(text) > MAX_FRAME_BYTES:
            _fail(f"frame exceeds {MAX_FRAME_BYTES} bytes")
    else:
        _fail("frame must be bytes or str")
    try:
        doc = json.loads(text, parse_constant=_reject_constant)
    except MalformedFrame:
        raise
    except (ValueError, RecursionError):
        raise MalformedFrame("frame is not valid JSON") from None
    if not isinstance(doc, dict):
        _fail("frame must be a JSON object")
    for k in _TOP_FIELDS:
        if k not in doc:
            _fail(f"missing field {k!r}")
    extra = set(doc) - set(_TOP_FIELDS)
    if extra:
        _fail(f"unexpected field {sorted(extra)[0]!r}")
    v = doc["v"]
    if isinstance(v, bool) or not isinstance(v, int):
        _fail("v must be an integer")
    if v != PROTOCOL_VERSION:
        raise VersionMismatch(f"unsupported protocol version {v}")
    kind_name = doc["type"]
    if not isinstance(kind_name, str):
        _fail("type must be a string")
    kind = _KIND_BY_NAME.get(kind_name)
    if kind is None:
        raise UnknownKind(f"unknown message type {kind_name!r}")
    _validate_envelope_fields(v, doc["seq"], doc["ts"],
                              doc["session"], doc["sender"])
    try:
        validate_payload(kind, doc["payload"])
    except RecursionError:
        raise MalformedFrame("payload nests too deeply") from None
    return Envelope(seq=doc["seq"], ts=doc["ts"], session_id=doc["session"],
                    sender=doc["sender"], kind=kind, payload=doc["payload"],
                    version=v)


class SequenceTracker:
    """Enforces gapless 1,2,3,... numbering per sender on one connection."""

    def __init__(self) -> None:
        self._last: dict[str, int] = {}

    def feed(self, sender: str, seq: int) -> None:
        expected = self._last.get(sender, 0) + 1
        if seq != expected:
            raise SequenceViolation(
                f"sender {sender!r}: expected seq {expected}, got {seq}")
        self._last[sender] = seq


class SequenceCounter:
    """Allocates outbound seq numbers per sender stream on one connection."""

    def __init__(self) -> None:
        self._next: dict[str, int] = {}

    def next(self, sender: str) -> int:
        n = self._next.get(sender, 0) + 1
        self._next[sender] = n
        return n
