"""Wire protocol: round-trips, canonical bytes, strict rejection."""

import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from studyhall.protocol import (MAX_FRAME_BYTES, Envelope, InvalidEnvelope,
                                MalformedFrame, MessageKind, ProtocolError,
                                SequenceCounter, SequenceTracker,
                                SequenceViolation, UnknownKind,
                                VersionMismatch, decode, encode,
                                validate_payload)

from _gen import make_envelope, mutate_frame, random_payload


def _frame(kind=MessageKind.CHAT, payload=None, **over):
    doc = {"v": 1, "seq": 1, "ts": 0, "session": "s-1", "sender": "p-1",
           "type": kind.value,
           "payload": payload if payload is not None
           else {"from": "p-1", "to": "p-2", "text": "hi"}}
    doc.update(over)
    return json.dumps(doc).encode("utf-8")


class TestRoundTrip:
    def test_every_kind_round_trips(self):
        rng = random.Random(7)
        for kind in MessageKind:
            for _ in range(50):
                env = make_envelope(rng, kind)
                assert decode(encode(env)) == env

    def test_str_input_equivalent_to_bytes(self):
        rng = random.Random(8)
        env = make_envelope(rng, MessageKind.CHAT)
        data = encode(env)
        assert decode(data) == decode(data.decode("utf-8"))

    def test_canonical_bytes_stable_under_key_order(self):
        a = Envelope(seq=1, ts=5, session_id="s-1", sender="p-1",
                     kind=MessageKind.CHAT,
                     payload={"to": "p-2", "text": "hi", "from": "p-1"})
        b = Envelope(seq=1, ts=5, session_id="s-1", sender="p-1",
                     kind=MessageKind.CHAT,
                     payload={"from": "p-1", "text": "hi", "to": "p-2"})
        assert encode(a) == encode(b)

    def test_top_level_field_order_fixed(self):
        env = Envelope(seq=3, ts=9, session_id="s-1", sender="p-1",
                       kind=MessageKind.HEARTBEAT, payload={})
        assert encode(env) == (b'{"v":1,"seq":3,"ts":9,"session":"s-1",'
                               b'"sender":"p-1","type":"Heartbeat",'
                               b'"payload":{}}')

    def test_payload_keys_sorted_recursively(self):
        env = Envelope(seq=1, ts=0, session_id="s", sender="p",
                       kind=MessageKind.QUALITY_REQUEST,
                       payload={"tier": "Mid", "target": "p-9",
                                "params": {"width": 640, "height": 360,
                                           "bitrate_kbps": 400}})
        raw = encode(env).decode("utf-8")
        assert ('"payload":{"params":{"bitrate_kbps":400,"height":360,'
                '"width":640},"target":"p-9","tier":"Mid"}') in raw

    def test_unicode_survives(self):
        env = Envelope(seq=1, ts=0, session_id="s", sender="p",
                       kind=MessageKind.CHAT,
                       payload={"from": "p", "to": "q", "text": "π 🐼 数学"})
        out = decode(encode(env))
        assert out.payload["text"] == "π 🐼 数学"
        assert "🐼".encode("utf-8") in encode(env)


class TestEncodeRejection:
    def test_unknown_payload_key(self):
        env = Envelope(seq=1, ts=0, session_id="s", sender="p",
                       kind=MessageKind.HEARTBEAT, payload={"x": 1})
        with pytest.raises(InvalidEnvelope):
            encode(env)

    def test_bool_not_accepted_as_int(self):
        env = Envelope(seq=True, ts=0, session_id="s", sender="p",
                       kind=MessageKind.HEARTBEAT, payload={})
        with pytest.raises(InvalidEnvelope):
            encode(env)

    def test_oversize_sdp_field(self):
        env = Envelope(seq=1, ts=0, session_id="s", sender="p",
                       kind=MessageKind.OFFER,
                       payload={"target": "q", "sdp": "x" * 300_000})
        with pytest.raises(InvalidEnvelope):
            encode(env)

    def test_near_cap_frame_accepted(self):
        env = Envelope(seq=1, ts=0, session_id="s", sender="p",
                       kind=MessageKind.OFFER,
                       payload={"target": "q", "sdp": "x" * 199_000})
        data = encode(env)
        assert len(data) < MAX_FRAME_BYTES
        assert decode(data) == env

    def test_wrong_version(self):
        env = Envelope(seq=1, ts=0, session_id="s", sender="p",
                       kind=MessageKind.HEARTBEAT, payload={}, version=2)
        with pytest.raises(InvalidEnvelope):
            encode(env)

    def test_chat_text_cap(self):
        env = Envelope(seq=1, ts=0, session_id="s", sender="p",
                       kind=MessageKind.CHAT,
                       payload={"from": "p", "to": "q", "text": "x" * 2001})
        with pytest.raises(InvalidEnvelope):
            encode(env)


class TestDecodeRejection:
    def test_not_json(self):
        with pytest.raises(MalformedFrame):
            decode(b"{nope")

    def test_not_utf8(self):
        with pytest.raises(MalformedFrame):
            decode(b"\xff\xfe\x00")

    def test_top_level_array(self):
        with pytest.raises(MalformedFrame):
            decode(b"[1,2,3]")

    def test_missing_field(self):
        doc = json.loads(_frame())
        del doc["sender"]
        with pytest.raises(MalformedFrame):
            decode(json.dumps(doc))

    def test_extra_top_field(self):
        doc = json.loads(_frame())
        doc["hop"] = 1
        with pytest.raises(MalformedFrame):
            decode(json.dumps(doc))

    def test_version_mismatch(self):
        with pytest.raises(VersionMismatch):
            decode(_frame(v=2))
        with pytest.raises(MalformedFrame):
            decode(_frame(v="1"))
        with pytest.raises(MalformedFrame):
            decode(_frame(v=True))

    def test_unknown_kind(self):
        with pytest.raises(UnknownKind):
            decode(_frame().replace(b'"Chat"', b'"Chats"'))

    def test_seq_zero_rejected(self):
        with pytest.raises(MalformedFrame):
            decode(_frame(seq=0))

    def test_seq_bool_rejected(self):
        with pytest.raises(MalformedFrame):
            decode(_frame(seq=True))

    def test_seq_float_rejected(self):
        with pytest.raises(MalformedFrame):
            decode(_frame(seq=1.0))

    def test_negative_ts_rejected(self):
        with pytest.raises(MalformedFrame):
            decode(_frame(ts=-1))

    def test_nan_rejected(self):
        raw = _frame().decode().replace('"ts": 0', '"ts": NaN')
        assert "NaN" in raw
        with pytest.raises(MalformedFrame):
            decode(raw)

    def test_infinity_rejected(self):
        raw = _frame().decode().replace('"ts": 0', '"ts": Infinity')
        assert "Infinity" in raw
        with pytest.raises(MalformedFrame):
            decode(raw)

    def test_depth_bomb_handled(self):
        with pytest.raises(MalformedFrame):
            decode(b'{"v":1,' + b'"a":{' * 100_000)
        deep = b"[" * 50_000 + b"]" * 50_000
        with pytest.raises(MalformedFrame):
            decode(deep)

    def test_oversize_frame(self):
        with pytest.raises(MalformedFrame):
            decode(b"x" * (MAX_FRAME_BYTES + 1))

    def test_non_bytes_input(self):
        with pytest.raises(MalformedFrame):
            decode(12345)  # type: ignore[arg-type]

    def test_payload_not_object(self):
        with pytest.raises(MalformedFrame):
            decode(_frame(payload=[1]))

    def test_telemetry_correct_coupling(self):
        ok = {"kind": "AnswerSubmitted", "correct": False}
        validate_payload(MessageKind.TELEMETRY, ok)
        with pytest.raises(MalformedFrame):
            validate_payload(MessageKind.TELEMETRY,
                             {"kind": "AnswerSubmitted"})
        with pytest.raises(MalformedFrame):
            validate_payload(MessageKind.TELEMETRY,
                             {"kind": "MouseClick", "correct": True})
        with pytest.raises(MalformedFrame):
            validate_payload(MessageKind.TELEMETRY,
                             {"kind": "AnswerSubmitted", "correct": 1})

    def test_alert_field_coupling(self):
        base = {"student": "p", "kind": "Inactivity", "raised_at": 1,
                "text": "t"}
        with pytest.raises(MalformedFrame):
            validate_payload(MessageKind.ALERT, base)  # no duration
        with pytest.raises(MalformedFrame):
            validate_payload(MessageKind.ALERT,
                             dict(base, duration_secs=5, count=3))
        validate_payload(MessageKind.ALERT, dict(base, duration_secs=5))

    def test_quality_tier_requires_target(self):
        with pytest.raises(MalformedFrame):
            validate_payload(MessageKind.QUALITY_REQUEST,
                             {"target": None, "tier": "Mid"})

    def test_timeline_zero_duration_rejected(self):
        p = {"target": "p", "text": "hi", "show_bubble": True,
             "gesture": "Nod", "attention_wave": False,
             "timeline": {"total_ms": 0, "entries": [["Rest", 0, 0]]}}
        with pytest.raises(MalformedFrame):
            validate_payload(MessageKind.AVATAR_COMMAND, p)


class TestSequenceDiscipline:
    def test_gapless_accepted(self):
        t = SequenceTracker()
        for i in range(1, 100):
            t.feed("a", i)

    def test_gap_rejected(self):
        t = SequenceTracker()
        t.feed("a", 1)
        with pytest.raises(SequenceViolation):
            t.feed("a", 3)

    def test_duplicate_rejected(self):
        t = SequenceTracker()
        t.feed("a", 1)
        with pytest.raises(SequenceViolation):
            t.feed("a", 1)

    def test_must_start_at_one(self):
        with pytest.raises(SequenceViolation):
            SequenceTracker().feed("a", 2)

    def test_senders_independent(self):
        t = SequenceTracker()
        t.feed("a", 1)
        t.feed("b", 1)
        t.feed("a", 2)
        t.feed("b", 2)

    def test_counter_matches_tracker(self):
        c, t = SequenceCounter(), SequenceTracker()
        rng = random.Random(3)
        for _ in range(500):
            sender = rng.choice("abc")
            t.feed(sender, c.next(sender))


class TestFuzz:
    def test_mutations_yield_typed_errors_only(self):
        rng = random.Random(99)
        survived = 0
        for _ in range(2000):
            frame = encode(make_envelope(rng))
            bad = mutate_frame(rng, frame)
            try:
                decode(bad)
                survived += 1
            except ProtocolError:
                pass
        # some mutations legitimately stay valid; most must not
        assert survived < 1200


@settings(max_examples=200, deadline=None)
@given(st.recursive(
    st.none() | st.booleans() | st.integers(-2**40, 2**40)
    | st.text(max_size=20),
    lambda inner: st.lists(inner, max_size=4)
    | st.dictionaries(st.text(max_size=8), inner, max_size=4),
    max_leaves=20))
def test_decode_total_on_arbitrary_json(doc):
    raw = json.dumps(doc)
    try:
        decode(raw)
    except ProtocolError:
        pass


@settings(max_examples=200, deadline=None)
@given(st.binary(max_size=4096))
def test_decode_total_on_arbitrary_bytes(data):
    try:
        decode(data)
    except ProtocolError:
        pass
