"""Alert engine vs. a naive re-scan oracle, plus rendering and rules."""

import random

import pytest

from studyhall.alerts import (ACTIVITY_KINDS, Alert, AlertEngine,
                              AlertRuleConfig, TelemetryEvent, render_alert)
from studyhall.errors import UnknownStudent


def alert_key(a: Alert):
    return (a.student, a.kind, a.raised_at, a.cleared_at, a.duration_secs,
            a.count, a.window_secs)


class NaiveOracle:
    """Recomputes both rules from the full history at every step.

    Deliberately quadratic: no incremental state beyond the raw op
    list. Each step replays everything with plain lists and refilters.
    """

    def __init__(self, config: AlertRuleConfig) -> None:
        self.config = config
        self.history = []  # ("register", s, now) | ("remove", s)
        #                  | ("ingest", event) | ("tick", now)

    def _replay(self):
        cfg = self.config
        reg = {}
        last_seen = {}
        last_act = {}
        wrongs = {}  # student -> list of effective ts since last correct
        open_inact = {}
        open_rep = {}
        raised_steps = []
        cleared_steps = []
        for op in self.history:
            raised = []
            cleared = []
            if op[0] == "register":
                _, s, now = op
                if s not in reg:
                    reg[s] = now
                    last_seen[s] = now
                    last_act[s] = now
                    wrongs[s] = []
            elif op[0] == "remove":
                _, s = op
                for d in (reg, last_seen, last_act, wrongs, open_inact,
                          open_rep):
                    d.pop(s, None)
            elif op[0] == "ingest":
                ev = op[1]
                s = ev.student
                ts = max(ev.ts, last_seen[s])
                last_seen[s] = ts
                if ev.kind in ACTIVITY_KINDS:
                    last_act[s] = ts
                    if s in open_inact:
                        a = open_inact.pop(s)
                        a.cleared_at = ts
                        cleared.append(a)
                    if ev.kind == "AnswerSubmitted":
                        if ev.correct:
                            if s in open_rep:
                                a = open_rep.pop(s)
                                a.cleared_at = ts
                                cleared.append(a)
                            wrongs[s] = []
                        else:
                            window = [t for t in wrongs[s] + [ts]
                                      if t >= ts
                                      - cfg.incorrect_window_secs * 1000]
                            wrongs[s] = window
                            if (len(window) >= cfg.incorrect_threshold
                                    and s not in open_rep):
                                a = Alert(student=s,
                                          kind="RepeatedIncorrect",
                                          raised_at=ts, count=len(window),
                                          window_secs=(
                                              cfg.incorrect_window_secs))
                                open_rep[s] = a
                                raised.append(a)
            elif op[0] == "tick":
                _, now = op
                for s in sorted(reg):
                    now_c = max(now, last_seen[s])
                    idle = now_c - last_act[s]
                    if (idle >= cfg.inactivity_secs * 1000
                            and s not in open_inact):
                        a = Alert(student=s, kind="Inactivity",
                                  raised_at=now_c,
                                  duration_secs=idle // 1000)
                        open_inact[s] = a
                        raised.append(a)
            raised_steps.append(raised)
            cleared_steps.append(cleared)
        open_now = list(open_inact.values()) + list(open_rep.values())
        return raised_steps, cleared_steps, open_now

    def step(self, op):
        self.history.append(op)
        raised_steps, cleared_steps, open_now = self._replay()
        return raised_steps[-1], cleared_steps[-1], open_now


def random_ops(rng: random.Random, n_ops: int, n_students: int):
    students = [f"st-{i}" for i in range(n_students)]
    now = rng.randint(0, 10_000)
    registered = []
    ops = []
    for _ in range(n_ops):
        now += rng.randint(0, 120_000)
        roll = rng.random()
        if (roll < 0.12 or not registered) and len(registered) < n_students:
            s = rng.choice([x for x in students if x not in registered])
            registered.append(s)
            ops.append(("register", s, now))
        elif roll < 0.17 and len(registered) > 1:
            s = rng.choice(registered)
            registered.remove(s)
            ops.append(("remove", s))
        elif roll < 0.45:
            ops.append(("tick", now - rng.randint(0, 5000)))
        else:
            s = rng.choice(registered)
            kind = rng.choice(["MouseClick", "KeyInput", "Heartbeat",
                               "AnswerSubmitted", "AnswerSubmitted",
                               "AnswerSubmitted"])
            # jittered, sometimes backwards, to exercise clamping
            ts = now - rng.randint(0, 30_000)
            correct = rng.random() < 0.25 \
                if kind == "AnswerSubmitted" else None
            ops.append(("ingest", TelemetryEvent(
                student=s, kind=kind, ts=ts, correct=correct)))
    return ops


def run_equivalence(n_sequences: int, seed: int,
                    max_ops: int = 50, max_students: int = 5) -> int:
    rng = random.Random(seed)
    checked = 0
    for _ in range(n_sequences):
        cfg = AlertRuleConfig(
            inactivity_secs=rng.choice([30, 120, 120, 300]),
            incorrect_threshold=rng.choice([2, 3, 3, 4]),
            incorrect_window_secs=rng.choice([60, 300, 300, 900]))
        engine = AlertEngine(cfg)
        oracle = NaiveOracle(cfg)
        ops = random_ops(rng, rng.randint(1, max_ops),
                         rng.randint(1, max_students))
        for op in ops:
            if op[0] == "register":
                engine.register_student(op[1], op[2])
                got_raised = []
            elif op[0] == "remove":
                engine.remove_student(op[1])
                got_raised = []
            elif op[0] == "ingest":
                got_raised = engine.ingest(op[1])
            else:
                got_raised = engine.tick(op[1])
            got_cleared = engine.drain_cleared()
            want_raised, want_cleared, want_open = oracle.step(op)
            assert [alert_key(a) for a in got_raised] == \
                [alert_key(a) for a in want_raised], (op, ops)
            assert [alert_key(a) for a in got_cleared] == \
                [alert_key(a) for a in want_cleared], (op, ops)
            assert sorted(alert_key(a) for a in engine.open_alerts()) == \
                sorted(alert_key(a) for a in want_open), (op, ops)
            checked += 1
    return checked


class TestOracleEquivalence:
    def test_random_sequences_match_naive_rescan(self):
        assert run_equivalence(250, seed=2024) > 0


class TestRendering:
    def _inact(self, secs):
        return Alert(student="p", kind="Inactivity", raised_at=0,
                     duration_secs=secs)

    def test_two_minutes_exact(self):
        assert render_alert(self._inact(120), "X") == \
            "Student X was inactive for 2 minutes"

    def test_sub_minute_and_non_round_use_seconds(self):
        assert render_alert(self._inact(119), "X") == \
            "Student X was inactive for 119 seconds"
        assert render_alert(self._inact(59), "X") == \
            "Student X was inactive for 59 seconds"
        assert render_alert(self._inact(61), "X") == \
            "Student X was inactive for 61 seconds"

    def test_singular_units(self):
        assert render_alert(self._inact(60), "X") == \
            "Student X was inactive for 1 minute"
        assert render_alert(self._inact(1), "X") == \
            "Student X was inactive for 1 second"

    def test_hour_is_minutes(self):
        assert render_alert(self._inact(3600), "X") == \
            "Student X was inactive for 60 minutes"

    def test_repeated_incorrect_exact(self):
        a = Alert(student="p", kind="RepeatedIncorrect", raised_at=0,
                  count=3, window_secs=300)
        assert render_alert(a, "B") == \
            "B submitted 3 incorrect answers in the last 5 minutes"

    def test_repeated_incorrect_odd_window(self):
        a = Alert(student="p", kind="RepeatedIncorrect", raised_at=0,
                  count=4, window_secs=90)
        assert render_alert(a, "B") == \
            "B submitted 4 incorrect answers in the last 90 seconds"


class TestInactivityRule:
    def setup_method(self):
        self.engine = AlertEngine(AlertRuleConfig())
        self.engine.register_student("s", now=0)

    def test_none_before_threshold(self):
        assert self.engine.tick(119_000) == []

    def test_exactly_one_at_threshold(self):
        raised = self.engine.tick(120_000)
        assert len(raised) == 1
        a = raised[0]
        assert (a.kind, a.duration_secs, a.raised_at) == \
            ("Inactivity", 120, 120_000)

    def test_dedup_while_open(self):
        assert len(self.engine.tick(120_000)) == 1
        assert self.engine.tick(121_000) == []
        assert self.engine.tick(500_000) == []
        assert len(self.engine.open_alerts("s")) == 1

    def test_activity_clears_and_rearms(self):
        self.engine.tick(120_000)
        self.engine.ingest(TelemetryEvent("s", "MouseClick", 130_000))
        cleared = self.engine.drain_cleared()
        assert [a.cleared_at for a in cleared] == [130_000]
        assert self.engine.open_alerts() == []
        assert self.engine.tick(130_000 + 119_999) == []
        assert len(self.engine.tick(130_000 + 120_000)) == 1

    def test_heartbeat_is_not_activity(self):
        self.engine.ingest(TelemetryEvent("s", "Heartbeat", 119_000))
        raised = self.engine.tick(120_000)
        assert len(raised) == 1

    def test_immediate_tick_after_activity_raises_nothing(self):
        self.engine.ingest(TelemetryEvent("s", "KeyInput", 400_000))
        assert self.engine.tick(400_000) == []

    def test_clock_clamp_uses_last_seen(self):
        self.engine.ingest(TelemetryEvent("s", "Heartbeat", 300_000))
        # tick's now lags the student's clamped stream; idle still counts
        raised = self.engine.tick(10_000)
        assert len(raised) == 1
        assert raised[0].duration_secs == 300


class TestRepeatedIncorrectRule:
    def setup_method(self):
        self.engine = AlertEngine(AlertRuleConfig())
        self.engine.register_student("s", now=0)

    def wrong(self, ts):
        return self.engine.ingest(
            TelemetryEvent("s", "AnswerSubmitted", ts, correct=False))

    def right(self, ts):
        return self.engine.ingest(
            TelemetryEvent("s", "AnswerSubmitted", ts, correct=True))

    def test_three_in_window_raises_once(self):
        assert self.wrong(1000) == []
        assert self.wrong(2000) == []
        raised = self.wrong(3000)
        assert len(raised) == 1
        assert (raised[0].count, raised[0].window_secs) == (3, 300)
        assert self.wrong(4000) == []  # dedup while open

    def test_window_boundary_inclusive(self):
        self.wrong(0)
        self.wrong(150_000)
        raised = self.wrong(300_000)  # first is exactly window edge
        assert len(raised) == 1
        assert raised[0].count == 3

    def test_outside_window_does_not_count(self):
        self.wrong(0)
        self.wrong(150_000)
        assert self.wrong(300_001) == []

    def test_correct_answer_resets_window_and_clears(self):
        self.wrong(1000)
        self.wrong(2000)
        self.wrong(3000)
        assert len(self.engine.open_alerts("s")) == 1
        self.right(4000)
        cleared = self.engine.drain_cleared()
        assert [a.cleared_at for a in cleared] == [4000]
        # window restarted: two more wrongs are not enough
        assert self.wrong(5000) == []
        assert self.wrong(6000) == []
        assert len(self.wrong(7000)) == 1

    def test_unknown_student(self):
        with pytest.raises(UnknownStudent):
            self.engine.ingest(TelemetryEvent("ghost", "MouseClick", 0))

    def test_remove_drops_open_alerts(self):
        self.wrong(1000)
        self.wrong(2000)
        self.wrong(3000)
        self.engine.remove_student("s")
        assert self.engine.open_alerts() == []
        assert self.engine.students() == []

    def test_register_idempotent(self):
        self.engine.register_student("s", now=999_999)
        assert self.engine.tick(120_000)  # original registration stands


class TestReplayDeterminism:
    def test_double_replay_identical(self):
        rng = random.Random(77)
        ops = random_ops(rng, 50, 4)

        def replay():
            engine = AlertEngine(AlertRuleConfig())
            out = []
            for op in ops:
                if op[0] == "register":
                    engine.register_student(op[1], op[2])
                elif op[0] == "remove":
                    engine.remove_student(op[1])
                elif op[0] == "ingest":
                    out.extend(alert_key(a) for a in engine.ingest(op[1]))
                else:
                    out.extend(alert_key(a) for a in engine.tick(op[1]))
                out.extend(("cleared",) + alert_key(a)
                           for a in engine.drain_cleared())
            return out

        assert replay() == replay()


class TestConfigValidation:
    def test_rejects_non_positive(self):
        for bad in (AlertRuleConfig(inactivity_secs=0),
                    AlertRuleConfig(incorrect_threshold=0),
                    AlertRuleConfig(incorrect_window_secs=-5)):
            with pytest.raises(ValueError):
                bad.validate()
