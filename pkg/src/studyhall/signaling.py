"""Pairing state machines and the SDP/candidate relay.

Each student has one pairing with the tutor. The server never parses
SDP; it relays opaque strings and tracks only where the handshake
stands. Per pairing:

    state     | offer            | answer         | candidate | renegotiate
    ----------+------------------+----------------+-----------+------------
    Idle      | -> OfferPending  | illegal        | queue     | illegal
    OfferPend | illegal          | -> Connected   | deliver   | illegal
    Connected | illegal          | illegal        | deliver   | -> Renegotiating
    Renegot.  | deliver (stay)   | -> Connected   | deliver   | illegal
    Closed    | not paired       | not paired     | not paired| illegal

Offers flow student->tutor only (tutors answer); anything else is a
RoleViolation on offers and an IllegalTransition on answers, because an
answer from the wrong side is a wrong input to the machine rather than
a forbidden capability. Illegal inputs never mutate state.

Candidates sent while Idle are queued FIFO and flushed right after the
offer that moves the pairing to OfferPending; once flushed nothing is
retained. current_tier reflects the last *completed* renegotiation: the
requested tier parks in pending_tier and is promoted when the answer
lands, so a pairing mid-renegotiation still reports the tier the tutor
is actually receiving.

Deliveries happen synchronously inside the relay call under the
session's serialization, so per-direction FIFO order is inherited from
call order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

from .errors import IllegalTransition, NotPaired, RoleViolation
from .protocol import SERVER_SENDER, MessageKind

STATES = ("Idle", "OfferPending", "Connected", "Renegotiating", "Closed")

# deliver(to_peer, sender, kind, payload)
DeliverFn = Callable[[str, str, MessageKind, dict], None]
# on_transition(student, old_state, new_state, trigger, detail)
TransitionFn = Callable[[str, str, str, str, dict], None]


@dataclass
class Pairing:
    student: str
    tutor: str
    state: str = "Idle"
    pending_candidates: List[Tuple[str, str, str]] = field(default_factory=list)
    current_tier: str = "Low"
    pending_tier: Optional[str] = None


class SignalingHub:
    """All pairings of one session. Callers serialize per session."""

    def __init__(self, get_tutor: Callable[[], Optional[str]],
                 is_student: Callable[[str], bool],
                 deliver: DeliverFn,
                 on_transition: Optional[TransitionFn] = None) -> None:
        self._get_tutor = get_tutor
        self._is_student = is_student
        self._deliver = deliver
        self._on_transition = on_transition or (lambda *a: None)
        self._pairings: Dict[str, Pairing] = {}

    def pairing(self, student: str) -> Optional[Pairing]:
        return self._pairings.get(student)

    def state_of(self, student: str) -> Optional[str]:
        p = self._pairings.get(student)
        return p.state if p else None

    def active_students(self) -> List[str]:
        return [s for s, p in self._pairings.items() if p.state != "Closed"]

    def connected_students(self) -> List[str]:
        return [s for s, p in self._pairings.items() if p.state == "Connected"]

    def _move(self, p: Pairing, new: str, trigger: str,
              detail: Optional[dict] = None) -> None:
        old = p.state
        p.state = new
        self._on_transition(p.student, old, new, trigger, detail or {})

    def ensure_pairing(self, student: str) -> Optional[Pairing]:
        """Create (or recreate after Closed) the student's pairing."""
        tutor = self._get_tutor()
        if tutor is None:
            return None
        existing = self._pairings.get(student)
        if existing is not None and existing.state != "Closed":
            return existing
        p = Pairing(student=student, tutor=tutor)
        self._pairings[student] = p
        self._on_transition(student, "-", "Idle", "paired", {})
        return p

    def _live(self, student: str) -> Pairing:
        p = self._pairings.get(student)
        if p is None or p.state == "Closed":
            raise NotPaired(f"no active pairing for {student!r}")
        return p

    def relay_offer(self, frm: str, to: str, sdp: str) -> None:
        if not self._is_student(frm):
            raise RoleViolation("only students send offers")
        tutor = self._get_tutor()
        if tutor is None or to != tutor:
            if self._is_student(to):
                raise RoleViolation("offers go to the tutor, not a student")
            raise NotPaired(f"offer target {to!r} is not the tutor")
        p = self._live(frm)
        if p.state == "Idle":
            self._deliver(to, frm, MessageKind.OFFER,
                          {"target": to, "sdp": sdp})
            self._move(p, "OfferPending", "offer")
            self._flush_candidates(p)
        elif p.state == "Renegotiating":
            # Re-offer carrying the new encoding; machine stays put
            # until the tutor answers.
            self._deliver(to, frm, MessageKind.OFFER,
                          {"target": to, "sdp": sdp})
            self._on_transition(frm, p.state, p.state, "offer", {})
        else:
            raise IllegalTransition(f"offer while {p.state}")

    def relay_answer(self, frm: str, to: str, sdp: str) -> None:
        tutor = self._get_tutor()
        if not self._is_student(to):
            raise NotPaired(f"answer target {to!r} is not a student")
        p = self._live(to)
        if frm != tutor:
            raise IllegalTransition("answers flow from the tutor to a student")
        if p.state not in ("OfferPending", "Renegotiating"):
            raise IllegalTransition(f"answer while {p.state}")
        self._deliver(to, frm, MessageKind.ANSWER, {"target": to, "sdp": sdp})
        detail = {}
        if p.state == "Renegotiating" and p.pending_tier is not None:
            p.current_tier = p.pending_tier
            p.pending_tier = None
            detail["tier"] = p.current_tier
        self._move(p, "Connected", "answer", detail)

    def relay_candidate(self, frm: str, to: str, candidate: str) -> None:
        tutor = self._get_tutor()
        if self._is_student(frm) and to == tutor and tutor is not None:
            p = self._live(frm)
        elif frm == tutor and tutor is not None and self._is_student(to):
            p = self._live(to)
        else:
            raise NotPaired("candidates flow between a paired student and tutor")
        if p.state == "Idle":
            p.pending_candidates.append((frm, to, candidate))
            return
        self._deliver(to, frm, MessageKind.ICE_CANDIDATE,
                      {"target": to, "candidate": candidate})

    def _flush_candidates(self, p: Pairing) -> None:
        queued, p.pending_candidates = p.pending_candidates, []
        for frm, to, candidate in queued:
            self._deliver(to, frm, MessageKind.ICE_CANDIDATE,
                          {"target": to, "candidate": candidate})

    def request_renegotiation(self, student: str, tier: str,
                              params: dict) -> None:
        """Ask a connected student to re-offer at a new tier."""
        p = self._pairings.get(student)
        if p is None or p.state != "Connected":
            state = p.state if p else "missing"
            raise IllegalTransition(f"renegotiation while {state}")
        p.pending_tier = tier
        self._deliver(student, SERVER_SENDER, MessageKind.QUALITY_REQUEST,
                      {"target": student, "tier": tier, "params": params})
        self._move(p, "Renegotiating", "renegotiate", {"tier": tier})

    def close_pairing(self, student: str, reason: str) -> bool:
        """Tear down one pairing; True if it was live."""
        p = self._pairings.get(student)
        if p is None or p.state == "Closed":
            return False
        p.pending_candidates.clear()
        p.pending_tier = None
        self._move(p, "Closed", reason)
        return True

    def close_all(self, reason: str) -> List[str]:
        closed = []
        for student in list(self._pairings):
            if self.close_pairing(student, reason):
                closed.append(student)
        return closed
