"""Pairing machine: exhaustive transition table, FIFO relay, tier handling."""

import random
from collections import defaultdict

import pytest

from studyhall.errors import IllegalTransition, NotPaired, RoleViolation
from studyhall.protocol import SERVER_SENDER, MessageKind
from studyhall.signaling import STATES, SignalingHub


class Harness:
    """SignalingHub wired to recorders instead of sockets."""

    def __init__(self, tutor="T", students=("A", "B")):
        self.tutor = tutor
        self.students = set(students)
        self.delivered = []    # (to, sender, kind, payload)
        self.transitions = []  # (student, old, new, trigger, detail)
        self.hub = SignalingHub(
            get_tutor=lambda: self.tutor,
            is_student=lambda p: p in self.students,
            deliver=lambda to, s, k, pl: self.delivered.append((to, s, k, pl)),
            on_transition=lambda *a: self.transitions.append(a))


def drive(state: str) -> Harness:
    """Fresh harness with pairing A in the requested state."""
    h = Harness()
    if state == "missing":
        return h
    h.hub.ensure_pairing("A")
    if state in ("OfferPending", "Connected", "Renegotiating", "Closed"):
        h.hub.relay_offer("A", "T", "sdp-drive-0")
    if state in ("Connected", "Renegotiating", "Closed"):
        h.hub.relay_answer("T", "A", "sdp-drive-1")
    if state == "Renegotiating":
        h.hub.request_renegotiation("A", "High", {"bitrate_kbps": 1500})
    if state == "Closed":
        h.hub.close_pairing("A", "test teardown")
    h.delivered.clear()
    h.transitions.clear()
    return h


def apply_input(h: Harness, name: str) -> None:
    if name == "offer":
        h.hub.relay_offer("A", "T", "sdp-x")
    elif name == "answer":
        h.hub.relay_answer("T", "A", "sdp-y")
    elif name == "cand_s2t":
        h.hub.relay_candidate("A", "T", "c-up")
    elif name == "cand_t2s":
        h.hub.relay_candidate("T", "A", "c-down")
    elif name == "renegotiate":
        h.hub.request_renegotiation("A", "Mid", {"bitrate_kbps": 400})
    else:
        raise AssertionError(name)


INPUTS = ("offer", "answer", "cand_s2t", "cand_t2s", "renegotiate")

# (state, input) -> ("ok", final_state, [delivered kinds]) | (ExcClass,)
TABLE = {
    ("missing", "offer"): (NotPaired,),
    ("missing", "answer"): (NotPaired,),
    ("missing", "cand_s2t"): (NotPaired,),
    ("missing", "cand_t2s"): (NotPaired,),
    ("missing", "renegotiate"): (IllegalTransition,),

    ("Idle", "offer"): ("ok", "OfferPending", [MessageKind.OFFER]),
    ("Idle", "answer"): (IllegalTransition,),
    ("Idle", "cand_s2t"): ("ok", "Idle", []),   # queued, not delivered
    ("Idle", "cand_t2s"): ("ok", "Idle", []),
    ("Idle", "renegotiate"): (IllegalTransition,),

    ("OfferPending", "offer"): (IllegalTransition,),
    ("OfferPending", "answer"): ("ok", "Connected", [MessageKind.ANSWER]),
    ("OfferPending", "cand_s2t"): ("ok", "OfferPending",
                                   [MessageKind.ICE_CANDIDATE]),
    ("OfferPending", "cand_t2s"): ("ok", "OfferPending",
                                   [MessageKind.ICE_CANDIDATE]),
    ("OfferPending", "renegotiate"): (IllegalTransition,),

    ("Connected", "offer"): (IllegalTransition,),
    ("Connected", "answer"): (IllegalTransition,),
    ("Connected", "cand_s2t"): ("ok", "Connected",
                                [MessageKind.ICE_CANDIDATE]),
    ("Connected", "cand_t2s"): ("ok", "Connected",
                                [MessageKind.ICE_CANDIDATE]),
    ("Connected", "renegotiate"): ("ok", "Renegotiating",
                                   [MessageKind.QUALITY_REQUEST]),

    ("Renegotiating", "offer"): ("ok", "Renegotiating", [MessageKind.OFFER]),
    ("Renegotiating", "answer"): ("ok", "Connected", [MessageKind.ANSWER]),
    ("Renegotiating", "cand_s2t"): ("ok", "Renegotiating",
                                    [MessageKind.ICE_CANDIDATE]),
    ("Renegotiating", "cand_t2s"): ("ok", "Renegotiating",
                                    [MessageKind.ICE_CANDIDATE]),
    ("Renegotiating", "renegotiate"): (IllegalTransition,),

    ("Closed", "offer"): (NotPaired,),
    ("Closed", "answer"): (NotPaired,),
    ("Closed", "cand_s2t"): (NotPaired,),
    ("Closed", "cand_t2s"): (NotPaired,),
    ("Closed", "renegotiate"): (IllegalTransition,),
}


def run_table_check() -> int:
    """Every (state, input) cell behaves as documented. Returns cell count."""
    checked = 0
    for state in ("missing",) + STATES:
        for name in INPUTS:
            expect = TABLE[(state, name)]
            h = drive(state)
            before = h.hub.state_of("A")
            if expect[0] == "ok":
                apply_input(h, name)
                assert h.hub.state_of("A") == expect[1], (state, name)
                assert [k for _, _, k, _ in h.delivered] == expect[2], \
                    (state, name)
            else:
                try:
                    apply_input(h, name)
                except expect[0]:
                    pass
                else:
                    raise AssertionError(f"{state}/{name}: expected "
                                         f"{expect[0].__name__}")
                # illegal inputs never mutate or deliver
                assert h.hub.state_of("A") == before, (state, name)
                assert h.delivered == [], (state, name)
            checked += 1
    return checked


def run_fifo_trial(seed: int, n_students: int = 3,
                   per_direction: int = 50) -> int:
    """Randomly interleaved candidates keep per-direction FIFO order.

    Returns the number of relayed messages verified.
    """
    rng = random.Random(seed)
    names = tuple(f"S{i}" for i in range(n_students))
    h = Harness(students=names)
    for s in names:
        h.hub.ensure_pairing(s)
        h.hub.relay_offer(s, "T", f"sdp-{s}")
        h.hub.relay_answer("T", s, f"sdp-ans-{s}")
    h.delivered.clear()

    queues = {}
    for s in names:
        queues[(s, "T")] = [f"{s}>T#{i}" for i in range(per_direction)]
        queues[("T", s)] = [f"T>{s}#{i}" for i in range(per_direction)]
    live = [k for k in queues if queues[k]]
    while live:
        frm, to = rng.choice(live)
        h.hub.relay_candidate(frm, to, queues[(frm, to)].pop(0))
        if not queues[(frm, to)]:
            live.remove((frm, to))

    seen = defaultdict(list)
    for to, sender, kind, payload in h.delivered:
        assert kind is MessageKind.ICE_CANDIDATE
        assert payload["target"] == to
        seen[(sender, to)].append(payload["candidate"])
    total = 0
    for (frm, to), lst in seen.items():
        assert [int(c.split("#")[1]) for c in lst] == \
            list(range(per_direction)), (frm, to)
        total += len(lst)
    assert total == 2 * n_students * per_direction
    return total


class TestTransitionTable:
    def test_every_cell_matches_documentation(self):
        assert run_table_check() == 6 * 5

    def test_illegal_transition_messages_name_the_state(self):
        h = drive("missing")
        with pytest.raises(IllegalTransition, match="while missing"):
            h.hub.request_renegotiation("A", "Mid", {})
        h = drive("Closed")
        with pytest.raises(IllegalTransition, match="while Closed"):
            h.hub.request_renegotiation("A", "Mid", {})
        h = drive("OfferPending")
        with pytest.raises(IllegalTransition, match="offer while OfferPending"):
            h.hub.relay_offer("A", "T", "x")
        h = drive("Idle")
        with pytest.raises(IllegalTransition, match="answer while Idle"):
            h.hub.relay_answer("T", "A", "x")


class TestRoleRules:
    def test_tutor_cannot_offer(self):
        h = drive("Idle")
        with pytest.raises(RoleViolation, match="only students send offers"):
            h.hub.relay_offer("T", "A", "sdp")

    def test_offer_to_student_is_role_violation(self):
        h = drive("Idle")
        with pytest.raises(RoleViolation):
            h.hub.relay_offer("A", "B", "sdp")

    def test_offer_to_stranger_is_not_paired(self):
        h = drive("Idle")
        with pytest.raises(NotPaired):
            h.hub.relay_offer("A", "X", "sdp")

    def test_offer_without_tutor(self):
        h = Harness(tutor=None)
        with pytest.raises(NotPaired):
            h.hub.relay_offer("A", "T", "sdp")

    def test_answer_to_non_student(self):
        h = drive("OfferPending")
        with pytest.raises(NotPaired):
            h.hub.relay_answer("T", "T", "sdp")

    def test_answer_from_non_tutor(self):
        h = drive("OfferPending")
        with pytest.raises(IllegalTransition):
            h.hub.relay_answer("B", "A", "sdp")

    def test_candidate_between_students(self):
        h = drive("Connected")
        with pytest.raises(NotPaired):
            h.hub.relay_candidate("A", "B", "c")

    def test_candidate_from_stranger(self):
        h = drive("Connected")
        with pytest.raises(NotPaired):
            h.hub.relay_candidate("X", "T", "c")


class TestCandidateQueue:
    def test_flush_right_after_offer_in_fifo_order(self):
        h = drive("Idle")
        h.hub.relay_candidate("A", "T", "c0")
        h.hub.relay_candidate("T", "A", "c1")
        h.hub.relay_candidate("A", "T", "c2")
        assert h.delivered == []
        h.hub.relay_offer("A", "T", "sdp")
        kinds = [k for _, _, k, _ in h.delivered]
        assert kinds == [MessageKind.OFFER] + [MessageKind.ICE_CANDIDATE] * 3
        cands = [pl["candidate"] for _, _, k, pl in h.delivered
                 if k is MessageKind.ICE_CANDIDATE]
        assert cands == ["c0", "c1", "c2"]
        # queued direction is preserved on flush
        assert h.delivered[2][0] == "A" and h.delivered[2][1] == "T"

    def test_nothing_retained_after_flush(self):
        h = drive("Idle")
        h.hub.relay_candidate("A", "T", "stale")
        h.hub.relay_offer("A", "T", "sdp")
        h.hub.close_pairing("A", "done")
        h.delivered.clear()
        h.hub.ensure_pairing("A")
        h.hub.relay_offer("A", "T", "sdp2")
        assert [k for _, _, k, _ in h.delivered] == [MessageKind.OFFER]

    def test_queue_dropped_on_close(self):
        h = drive("Idle")
        h.hub.relay_candidate("A", "T", "c")
        h.hub.close_pairing("A", "bye")
        assert h.hub.pairing("A").pending_candidates == []


class TestTierPromotion:
    def test_tier_promoted_only_on_answer(self):
        h = drive("Connected")
        assert h.hub.pairing("A").current_tier == "Low"
        h.hub.request_renegotiation("A", "High", {"bitrate_kbps": 1500})
        p = h.hub.pairing("A")
        assert p.current_tier == "Low"       # mid-renegotiation: old tier
        assert p.pending_tier == "High"
        h.hub.relay_answer("T", "A", "sdp-new")
        assert p.current_tier == "High"
        assert p.pending_tier is None
        assert h.transitions[-1] == \
            ("A", "Renegotiating", "Connected", "answer", {"tier": "High"})

    def test_quality_request_payload_and_sender(self):
        h = drive("Connected")
        h.hub.request_renegotiation("A", "Mid", {"bitrate_kbps": 400})
        to, sender, kind, payload = h.delivered[0]
        assert (to, sender, kind) == ("A", SERVER_SENDER,
                                      MessageKind.QUALITY_REQUEST)
        assert payload == {"target": "A", "tier": "Mid",
                           "params": {"bitrate_kbps": 400}}

    def test_reoffer_during_renegotiation_stays_put(self):
        h = drive("Renegotiating")
        h.hub.relay_offer("A", "T", "sdp-re")
        assert h.hub.state_of("A") == "Renegotiating"
        assert h.transitions == \
            [("A", "Renegotiating", "Renegotiating", "offer", {})]


class TestPairingLifecycle:
    def test_ensure_without_tutor_returns_none(self):
        h = Harness(tutor=None)
        assert h.hub.ensure_pairing("A") is None
        assert h.hub.pairing("A") is None

    def test_ensure_is_idempotent_while_live(self):
        h = Harness()
        p1 = h.hub.ensure_pairing("A")
        assert h.hub.ensure_pairing("A") is p1
        assert h.transitions == [("A", "-", "Idle", "paired", {})]

    def test_recreate_after_close_is_fresh(self):
        h = drive("Renegotiating")
        h.hub.close_pairing("A", "net drop")
        p2 = h.hub.ensure_pairing("A")
        assert p2.state == "Idle"
        assert p2.current_tier == "Low"
        assert p2.pending_tier is None
        assert h.transitions[-1] == ("A", "-", "Idle", "paired", {})

    def test_close_returns_liveness(self):
        h = drive("Connected")
        assert h.hub.close_pairing("A", "bye") is True
        assert h.hub.close_pairing("A", "bye") is False
        assert h.hub.close_pairing("ghost", "bye") is False

    def test_close_all(self):
        h = Harness(students=("A", "B", "C"))
        for s in ("A", "B"):
            h.hub.ensure_pairing(s)
        h.hub.ensure_pairing("C")
        h.hub.close_pairing("C", "early")
        assert sorted(h.hub.close_all("shutdown")) == ["A", "B"]
        assert h.hub.active_students() == []

    def test_student_listings(self):
        h = Harness(students=("A", "B"))
        h.hub.ensure_pairing("A")
        h.hub.ensure_pairing("B")
        h.hub.relay_offer("A", "T", "s")
        h.hub.relay_answer("T", "A", "s")
        assert set(h.hub.active_students()) == {"A", "B"}
        assert h.hub.connected_students() == ["A"]


class TestFifo:
    def test_randomized_interleavings_preserve_order(self):
        for seed in range(20):
            assert run_fifo_trial(seed, n_students=3, per_direction=40) == 240
