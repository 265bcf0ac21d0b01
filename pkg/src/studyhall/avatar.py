"""Avatar command composition: semantic cues, gestures, lip-sync timing.

The tutor types text; the server decides how the student-side avatar
performs it. Classification is plain lowercase keyword counting, which
sounds crude but is the point: it is deterministic, auditable, and a
tutor can learn what phrasing triggers which gesture.

The viseme timeline drives a six-pose mouth atlas. Characters map to
poses; consecutive identical poses merge into one entry whose duration
is rounded once (per-character rounding accumulates error and breaks
rate scaling), and runs of non-alphanumerics collapse into a single
fixed-length Silence no matter how long the run is. Entry durations
are floored at 1 ms so starts stay strictly increasing at extreme
speech rates.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from .errors import EmptyText, InvalidRate
from .protocol import CHAT_TEXT_MAX

VISEME_MS = 70
SILENCE_MS = 120
ATTENTION_GAP_MS = 30_000


class SemanticCue(str, Enum):
    GREETING = "Greeting"
    ENCOURAGEMENT = "Encouragement"
    CORRECTIVE = "Corrective"
    NEUTRAL = "Neutral"


class Gesture(str, Enum):
    WAVE = "Wave"
    NOD = "Nod"
    THUMBS_UP = "ThumbsUp"
    NONE = "None"


class Viseme(str, Enum):
    REST = "Rest"
    OPEN = "Open"
    CLOSED = "Closed"
    LIP_TEETH = "LipTeeth"
    ROUND = "Round"
    SILENCE = "Silence"


DEFAULT_LEXICON: Dict[SemanticCue, Tuple[str, ...]] = {
    SemanticCue.GREETING: (
        "hi", "hello", "hey", "welcome", "good morning"),
    SemanticCue.ENCOURAGEMENT: (
        "great", "good job", "well done", "nice", "excellent", "awesome",
        "keep it up"),
    SemanticCue.CORRECTIVE: (
        "try", "instead", "incorrect", "check", "let's break", "revisit",
        "step by step", "isolating"),
}

# Tie-break precedence when keyword counts are equal.
_CUE_ORDER = (SemanticCue.GREETING, SemanticCue.ENCOURAGEMENT,
              SemanticCue.CORRECTIVE)

_GESTURE_FOR = {
    SemanticCue.GREETING: Gesture.WAVE,
    SemanticCue.ENCOURAGEMENT: Gesture.THUMBS_UP,
    SemanticCue.CORRECTIVE: Gesture.NOD,
    SemanticCue.NEUTRAL: Gesture.NONE,
}

DEFAULT_PROMPTS: Tuple[str, ...] = (
    "Let's break this down step by step.",
    "Take another look at the last step.",
    "Great effort, keep going!",
    "Try isolating the variable on one side.",
    "Check your signs on both sides of the equation.",
)


def classify_intent(text: str,
                    lexicon: Optional[Mapping[SemanticCue, Sequence[str]]] = None,
                    ) -> SemanticCue:
    """Keyword-count classification; Neutral only when nothing matches.

    Counts case-insensitive substring presence (each keyword counts at
    most once). Highest count wins; ties resolve Greeting before
    Encouragement before Corrective.
    """
    lex = lexicon if lexicon is not None else DEFAULT_LEXICON
    low = text.lower()
    best = SemanticCue.NEUTRAL
    best_count = 0
    for cue in _CUE_ORDER:
        count = sum(1 for kw in lex.get(cue, ()) if kw in low)
        if count > best_count:
            best = cue
            best_count = count
    return best


def gesture_for(cue: SemanticCue) -> Gesture:
    return _GESTURE_FOR[cue]


@dataclass(frozen=True)
class VisemeTimeline:
    entries: Tuple[Tuple[str, int, int], ...]  # (viseme, start_ms, duration_ms)
    total_ms: int

    def to_payload(self) -> dict:
        return {"total_ms": self.total_ms,
                "entries": [[v, s, d] for v, s, d in self.entries]}

    @classmethod
    def from_payload(cls, p: dict) -> "VisemeTimeline":
        return cls(tuple((v, s, d) for v, s, d in p["entries"]),
                   p["total_ms"])


_ROUND_CHARS = frozenset("ou")
_OPEN_CHARS = frozenset("aei")
_CLOSED_CHARS = frozenset("mbp")
_LIPTEETH_CHARS = frozenset("fv")


def _viseme_of(ch: str) -> Viseme:
    if not ch.isalnum():
        return Viseme.SILENCE
    c = ch.lower()
    if c in _ROUND_CHARS:
        return Viseme.ROUND
    if c in _OPEN_CHARS:
        return Viseme.OPEN
    if c in _CLOSED_CHARS:
        return Viseme.CLOSED
    if c in _LIPTEETH_CHARS:
        return Viseme.LIP_TEETH
    return Viseme.REST


def build_timeline(text: str, rate: float = 1.0) -> VisemeTimeline:
    """Lip-sync schedule for text at a speech-rate multiplier.

    rate 2.0 plays twice as fast. The viseme sequence is independent of
    rate; only durations scale.
    """
    if not (rate > 0):
        raise InvalidRate(f"rate must be positive, got {rate}")
    # Accumulate unscaled durations per merged run first. A silence run
    # contributes one fixed unit regardless of length; a speech run
    # contributes VISEME_MS per character.
    runs: List[List] = []  # [viseme, unscaled_ms]
    for ch in text:
        v = _viseme_of(ch)
        if v is Viseme.SILENCE:
            if runs and runs[-1][0] is Viseme.SILENCE:
                continue
            runs.append([v, SILENCE_MS])
        elif runs and runs[-1][0] is v:
            runs[-1][1] += VISEME_MS
        else:
            runs.append([v, VISEME_MS])
    entries: List[Tuple[str, int, int]] = []
    start = 0
    for v, unscaled in runs:
        dur = max(1, round(unscaled / rate))
        entries.append((v.value, start, dur))
        start += dur
    return VisemeTimeline(tuple(entries), start)


@dataclass(frozen=True)
class AvatarCommand:
    target: str
    speech_text: str
    show_bubble: bool
    gesture: Gesture
    attention_wave: bool
    timeline: VisemeTimeline

    def to_payload(self) -> dict:
        return {"target": self.target, "text": self.speech_text,
                "show_bubble": self.show_bubble,
                "gesture": self.gesture.value,
                "attention_wave": self.attention_wave,
                "timeline": self.timeline.to_payload()}


def compose_command(target: str, text: str, show_bubble: bool,
                    attention_wave: bool,
                    lexicon: Optional[Mapping[SemanticCue, Sequence[str]]] = None,
                    rate: float = 1.0) -> AvatarCommand:
    """Turn raw tutor text into a full playable command."""
    if not text:
        raise EmptyText("avatar speech text must be non-empty")
    if len(text) > CHAT_TEXT_MAX:
        raise EmptyText(f"avatar speech text exceeds {CHAT_TEXT_MAX} chars")
    cue = classify_intent(text, lexicon)
    return AvatarCommand(target=target, speech_text=text,
                         show_bubble=show_bubble,
                         gesture=gesture_for(cue),
                         attention_wave=attention_wave,
                         timeline=build_timeline(text, rate))


def canned_prompts(extra: Optional[Sequence[str]] = None) -> List[str]:
    """Default one-click prompts, plus any configured additions."""
    prompts = list(DEFAULT_PROMPTS)
    for p in extra or ():
        if p and p not in prompts:
            prompts.append(p)
    return prompts


class AttentionTracker:
    """Remembers when each student was last addressed.

    A command raises attention_wave when the student has never been
    addressed or the last address is at least ATTENTION_GAP_MS old.
    Tutor chat to a student also counts as addressing them.
    """

    def __init__(self, gap_ms: int = ATTENTION_GAP_MS) -> None:
        self._gap = gap_ms
        self._last: Dict[str, int] = {}

    def wave_due(self, student: str, now: int) -> bool:
        last = self._last.get(student)
        return last is None or now - last >= self._gap

    def note_addressed(self, student: str, now: int) -> None:
        self._last[student] = now

    def forget(self, student: str) -> None:
        self._last.pop(student, None)
