"""Headless synthetic clients, scenario scripting, and load runs.

Everything here talks to a gateway exclusively through its public
surface (HTTP + socket), which doubles as proof that the documented
contract is sufficient to build a full client.

A SyntheticClient runs one socket with a single reader thread. The
reader validates every inbound envelope (decode, per-sender seq
discipline) and records violations instead of raising, because a load
run wants a violation count, not a crash in a daemon thread. Clients
can play two roles:

  tutor    auto-answers every Offer (plus two trickle candidates) and
           optionally echoes student chat for round-trip timing
  student  auto-offers once a tutor is present and re-offers on every
           QualityRequest, mimicking the browser client's renegotiation

Scenarios are JSON files: a student alias list plus ordered steps.
Under a real clock, steps pace against wall time via their at_ms;
under a simulated clock, at_ms only orders the steps and time moves
exclusively through advance_clock steps hitting the gateway's
test-only clock endpoint. expect_* steps produce assertion results;
the report carries the first failure with context, latency stats, and
a determinism signature (per-client sequence of Alert/AvatarCommand
observations, timestamps excluded).
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import httpx
from websockets.sync.client import connect as ws_connect

from .protocol import (BROADCAST, Envelope, MessageKind, ProtocolError,
                       SequenceTracker, decode, encode)

try:  # importlib.resources.files is 3.9+; keep the import local and tidy
    from importlib.resources import files as _resource_files
except ImportError:  # pragma: no cover
    _resource_files = None


class ScenarioParseError(Exception):
    pass


class ConnectionFailure(Exception):
    pass


def normalize_gateway(addr: str) -> Tuple[str, str]:
    """'host:port' or an http(s)/ws(s) URL -> (http_base, ws_base)."""
    addr = addr.strip()
    for scheme in ("http://", "https://", "ws://", "wss://"):
        if addr.startswith(scheme):
            host = addr[len(scheme):]
            break
    else:
        host = addr
    host = host.rstrip("/")
    if not host:
        raise ConnectionFailure(f"bad gateway address {addr!r}")
    return f"http://{host}", f"ws://{host}"


class GatewayHTTP:
    """Thin HTTP client for the management API."""

    def __init__(self, http_base: str) -> None:
        self.base = http_base
        self._client = httpx.Client(base_url=http_base, timeout=10.0)

    def close(self) -> None:
        self._client.close()

    def _check(self, resp: httpx.Response) -> dict:
        if resp.status_code != 200:
            raise ConnectionFailure(
                f"{resp.request.method} {resp.request.url.path} ->"
                f" {resp.status_code}: {resp.text[:200]}")
        return resp.json()

    def create_session(self, tutor_alias: str) -> Tuple[str, str]:
        doc = self._check(self._client.post(
            "/api/sessions", json={"tutor_alias": tutor_alias}))
        return doc["session_id"], doc["tutor_token"]

    def join(self, session_id: str, alias: str, role: str,
             token: Optional[str] = None) -> dict:
        body: dict = {"alias": alias, "role": role}
        if token is not None:
            body["token"] = token
        return self._check(self._client.post(
            f"/api/sessions/{session_id}/join", json=body))

    def close_session(self, session_id: str, token: str) -> dict:
        return self._check(self._client.post(
            f"/api/sessions/{session_id}/close",
            headers={"Authorization": f"Bearer {token}"}))

    def events(self, session_id: str, token: str,
               since_seq: Optional[int] = None,
               category: Optional[str] = None) -> List[dict]:
        params: dict = {}
        if since_seq is not None:
            params["since_seq"] = since_seq
        if category is not None:
            params["category"] = category
        doc = self._check(self._client.get(
            f"/api/sessions/{session_id}/events", params=params,
            headers={"Authorization": f"Bearer {token}"}))
        return doc["records"]

    def advance_clock(self, ms: int) -> int:
        doc = self._check(self._client.post("/api/clock/advance",
                                            json={"ms": ms}))
        return doc["now"]

    def healthz(self) -> float:
        """Returns the round-trip latency in ms; raises if unhealthy."""
        t0 = time.perf_counter()
        resp = self._client.get("/healthz")
        dt = (time.perf_counter() - t0) * 1000
        if resp.status_code != 200 or resp.text != "ok":
            raise ConnectionFailure(f"healthz failed: {resp.status_code}")
        return dt


class SyntheticClient:
    """One socket client with a validating reader thread."""

    def __init__(self, ws_base: str, session_id: str, token: str,
                 peer: str, role: str, alias: str,
                 auto_answer: bool = False, auto_offer: bool = False,
                 echo_chat: bool = False, heartbeat_secs: float = 0.0,
                 label: Optional[str] = None) -> None:
        self.session_id = session_id
        self.peer = peer
        self.role = role
        self.alias = alias
        self.label = label or alias
        self.auto_answer = auto_answer
        self.auto_offer = auto_offer
        self.echo_chat = echo_chat
        self.heartbeat_secs = heartbeat_secs

        self.inbox: List[Envelope] = []
        self.violations: List[str] = []
        self.signature: List[str] = []
        self.closed = False
        self.close_reason: Optional[str] = None
        self.connected_at: Optional[float] = None  # perf_counter seconds
        self.join_sent_at: Optional[float] = None

        self._cond = threading.Condition()
        self._send_lock = threading.Lock()
        self._seq = 0
        self._tracker = SequenceTracker()
        self._tutor_peer: Optional[str] = None
        self._offered_to: Optional[str] = None
        self._offer_count = 0
        self._last_heartbeat = time.monotonic()

        url = f"{ws_base}/ws/{session_id}?token={token}"
        try:
            self._ws = ws_connect(url, open_timeout=10, close_timeout=5,
                                  max_size=2**20)
        except Exception as e:
            raise ConnectionFailure(f"socket connect failed: {e}") from None
        self._reader = threading.Thread(target=self._read_loop, daemon=True,
                                        name=f"reader-{self.label}")
        self._reader.start()

    # outbound

    def send(self, kind: MessageKind, payload: dict) -> None:
        with self._send_lock:
            if self.closed:
                raise ConnectionFailure(f"{self.label}: socket is closed")
            self._seq += 1
            env = Envelope(seq=self._seq, ts=int(time.time() * 1000),
                           session_id=self.session_id, sender=self.peer,
                           kind=kind, payload=payload)
            try:
                self._ws.send(encode(env).decode("utf-8"))
            except Exception as e:
                self.closed = True
                raise ConnectionFailure(f"{self.label}: send failed: {e}") \
                    from None

    def join(self, timeout: float = 10.0) -> Envelope:
        """Send the socket-level Join and wait for the JoinAck."""
        self.join_sent_at = time.perf_counter()
        self.send(MessageKind.JOIN, {"alias": self.alias, "role": self.role})
        ack = self.wait_for(lambda e: e.kind == MessageKind.JOIN_ACK, timeout)
        if ack is None:
            raise ConnectionFailure(f"{self.label}: no JoinAck")
        return ack

    def heartbeat(self) -> None:
        self.send(MessageKind.HEARTBEAT, {})

    def chat(self, to: str, text: str) -> None:
        self.send(MessageKind.CHAT,
                  {"from": self.peer, "to": to, "text": text})

    def telemetry(self, kind: str, correct: Optional[bool] = None,
                  detail: Optional[str] = None) -> None:
        payload: dict = {"kind": kind}
        if correct is not None:
            payload["correct"] = correct
        if detail is not None:
            payload["detail"] = detail
        self.send(MessageKind.TELEMETRY, payload)

    def dispatch(self, target: str, text: str, show_bubble: bool) -> None:
        self.send(MessageKind.AVATAR_COMMAND,
                  {"target": target, "text": text,
                   "show_bubble": show_bubble})

    def zoom(self, target: Optional[str]) -> None:
        self.send(MessageKind.QUALITY_REQUEST, {"target": target})

    def leave(self, reason: str = "done") -> None:
        try:
            self.send(MessageKind.LEAVE, {"reason": reason})
        except ConnectionFailure:
            pass

    # inbound

    def wait_for(self, pred: Callable[[Envelope], bool],
                 timeout: float) -> Optional[Envelope]:
        deadline = time.monotonic() + timeout
        with self._cond:
            while True:
                for env in self.inbox:
                    if pred(env):
                        return env
                left = deadline - time.monotonic()
                if left <= 0 or self.closed:
                    for env in self.inbox:  # race: arrival vs close
                        if pred(env):
                            return env
                    return None
                self._cond.wait(min(left, 0.25))

    def count(self, pred: Callable[[Envelope], bool]) -> int:
        with self._cond:
            return sum(1 for env in self.inbox if pred(env))

    def _note_signature(self, env: Envelope) -> None:
        if env.kind == MessageKind.ALERT:
            p = env.payload
            self.signature.append(
                f"Alert:{p['kind']}:{p.get('count')}:{p.get('duration_secs')}"
                f":{'cleared' if p.get('cleared_at') is not None else 'open'}")
        elif env.kind == MessageKind.AVATAR_COMMAND:
            p = env.payload
            self.signature.append(
                f"AvatarCommand:{p.get('gesture')}:{p.get('attention_wave')}"
                f":{p['text'][:40]}")

    def _read_loop(self) -> None:
        while True:
            try:
                raw = self._ws.recv(timeout=0.5)
            except TimeoutError:
                self._maybe_heartbeat()
                continue
            except Exception:
                break
            try:
                env = decode(raw)
                self._tracker.feed(env.sender, env.seq)
                if env.session_id != self.session_id:
                    raise ProtocolError("session mismatch")
            except ProtocolError as e:
                with self._cond:
                    self.violations.append(f"{self.label}: {e}")
                    self._cond.notify_all()
                continue
            self._react(env)
            with self._cond:
                self.inbox.append(env)
                self._note_signature(env)
                self._cond.notify_all()
        with self._cond:
            self.closed = True
            self._cond.notify_all()

    def _maybe_heartbeat(self) -> None:
        if self.heartbeat_secs <= 0 or self.closed:
            return
        now = time.monotonic()
        if now - self._last_heartbeat >= self.heartbeat_secs:
            self._last_heartbeat = now
            try:
                self.heartbeat()
            except ConnectionFailure:
                pass

    # scripted client behavior

    def _react(self, env: Envelope) -> None:
        try:
            if env.kind == MessageKind.JOIN_ACK:
                self._tutor_peer = env.payload["roster"]["tutor"]
                if self.auto_offer:
                    self._offer_if_ready()
            elif env.kind == MessageKind.ROSTER_UPDATE:
                tutor = env.payload["tutor"]
                if tutor != self._tutor_peer:
                    self._tutor_peer = tutor
                    self._offered_to = None  # new tutor: fresh pairing
                if self.auto_offer:
                    self._offer_if_ready()
            elif env.kind == MessageKind.OFFER and self.auto_answer:
                self.send(MessageKind.ANSWER,
                          {"target": env.sender,
                           "sdp": f"sdp-answer-{env.sender}"})
                for i in range(2):
                    self.send(MessageKind.ICE_CANDIDATE,
                              {"target": env.sender,
                               "candidate": f"candidate-t{i}-{env.sender}"})
            elif env.kind == MessageKind.ANSWER:
                if self.connected_at is None:
                    self.connected_at = time.perf_counter()
            elif env.kind == MessageKind.QUALITY_REQUEST and self.auto_offer:
                tier = env.payload.get("tier", "?")
                if self._tutor_peer is not None:
                    self._offer_count += 1
                    self.send(MessageKind.OFFER,
                              {"target": self._tutor_peer,
                               "sdp": f"sdp-reoffer-{tier}-{self._offer_count}"})
            elif env.kind == MessageKind.CHAT and self.echo_chat:
                frm = env.payload["from"]
                if frm != self.peer:
                    self.chat(frm, env.payload["text"])
        except ConnectionFailure:
            pass

    def _offer_if_ready(self) -> None:
        if self._tutor_peer is None or self._offered_to == self._tutor_peer:
            return
        self._offered_to = self._tutor_peer
        self._offer_count += 1
        self.send(MessageKind.OFFER,
                  {"target": self._tutor_peer,
                   "sdp": f"sdp-offer-{self.peer}-{self._offer_count}"})
        for i in range(2):
            self.send(MessageKind.ICE_CANDIDATE,
                      {"target": self._tutor_peer,
                       "candidate": f"candidate-s{i}-{self.peer}"})

    def close(self) -> None:
        with self._send_lock:
            self.closed = True
        try:
            self._ws.close()
        except Exception:
            pass
        self._reader.join(timeout=5)


# scenarios

_SIMPLE_ACTIONS = frozenset({
    "join_tutor", "join_student", "telemetry", "chat", "dispatch", "zoom",
    "heartbeat", "advance_clock", "leave", "expect_connected",
    "expect_alert", "expect_avatar_command", "expect_chat",
})


@dataclass(frozen=True)
class ScenarioStep:
    at_ms: int
    action: str
    params: dict


@dataclass(frozen=True)
class Scenario:
    name: str
    clock: str  # "simulated" | "real"
    students: Tuple[str, ...]
    steps: Tuple[ScenarioStep, ...]


def parse_scenario(doc: Any, origin: str = "<scenario>") -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioParseError(f"{origin}: scenario must be an object")
    name = doc.get("name")
    if not isinstance(name, str) or not name:
        raise ScenarioParseError(f"{origin}: name must be a non-empty string")
    clock = doc.get("clock", "real")
    if clock not in ("simulated", "real"):
        raise ScenarioParseError(f"{origin}: clock must be simulated or real")
    students = doc.get("students", [])
    if (not isinstance(students, list)
            or not all(isinstance(s, str) and s for s in students)):
        raise ScenarioParseError(f"{origin}: students must be alias strings")
    raw_steps = doc.get("steps", [])
    if not isinstance(raw_steps, list):
        raise ScenarioParseError(f"{origin}: steps must be a list")
    steps: List[ScenarioStep] = []
    last_at = 0
    for i, raw in enumerate(raw_steps):
        where = f"{origin}: step {i}"
        if not isinstance(raw, dict):
            raise ScenarioParseError(f"{where} must be an object")
        at_ms = raw.get("at_ms")
        if isinstance(at_ms, bool) or not isinstance(at_ms, int) or at_ms < 0:
            raise ScenarioParseError(f"{where}: at_ms must be an int >= 0")
        if at_ms < last_at:
            raise ScenarioParseError(
                f"{where}: at_ms {at_ms} is before previous step {last_at}")
        last_at = at_ms
        action = raw.get("action")
        if action not in _SIMPLE_ACTIONS:
            raise ScenarioParseError(f"{where}: unknown action {action!r}")
        params = {k: v for k, v in raw.items()
                  if k not in ("at_ms", "action")}
        sref = params.get("student")
        if sref is not None and (isinstance(sref, bool)
                                 or not isinstance(sref, int)
                                 or not 0 <= sref < len(students)):
            raise ScenarioParseError(f"{where}: student index out of range")
        steps.append(ScenarioStep(at_ms, action, params))
    return Scenario(name=name, clock=clock, students=tuple(students),
                    steps=tuple(steps))


def load_scenario(path: Path) -> Scenario:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ScenarioParseError(f"cannot read {path}: {e}") from None
    try:
        doc = json.loads(text)
    except ValueError as e:
        raise ScenarioParseError(f"{path}: not valid JSON: {e}") from None
    return parse_scenario(doc, origin=str(path))


def bundled_scenario(name: str) -> Scenario:
    if _resource_files is None:  # pragma: no cover
        raise ScenarioParseError("importlib.resources unavailable")
    res = _resource_files("studyhall") / "scenarios" / f"{name}.json"
    try:
        text = res.read_text(encoding="utf-8")
    except OSError as e:
        raise ScenarioParseError(f"no bundled scenario {name!r}: {e}") \
            from None
    return parse_scenario(json.loads(text), origin=f"bundled:{name}")


@dataclass
class AssertionResult:
    name: str
    ok: bool
    detail: str = ""


@dataclass
class ScenarioReport:
    scenario: str
    assertions: List[AssertionResult] = field(default_factory=list)
    violations: List[str] = field(default_factory=list)
    signature: Dict[str, List[str]] = field(default_factory=dict)
    handshake_ms: List[float] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations and all(a.ok for a in self.assertions)

    @property
    def first_failure(self) -> Optional[AssertionResult]:
        for a in self.assertions:
            if not a.ok:
                return a
        return None

    def to_text(self) -> str:
        lines = [f"scenario {self.scenario}:"
                 f" {'PASS' if self.ok else 'FAIL'}"]
        for a in self.assertions:
            mark = "ok " if a.ok else "FAIL"
            lines.append(f"  [{mark}] {a.name}"
                         + (f" -- {a.detail}" if a.detail else ""))
        if self.violations:
            lines.append(f"  protocol violations: {len(self.violations)}")
            for v in self.violations[:5]:
                lines.append(f"    {v}")
        if self.handshake_ms:
            lines.append(
                f"  handshake ms: {_stats_line(self.handshake_ms)}")
        return "\n".join(lines)


def _stats_line(samples: List[float]) -> str:
    return (f"n={len(samples)} p50={_pct(samples, 50):.1f}"
            f" p95={_pct(samples, 95):.1f} max={max(samples):.1f}")


def _pct(samples: List[float], q: float) -> float:
    ordered = sorted(samples)
    if not ordered:
        return 0.0
    idx = max(0, min(len(ordered) - 1,
                     round(q / 100 * (len(ordered) - 1))))
    return ordered[idx]


class _ScenarioRunner:
    def __init__(self, scenario: Scenario, gateway: str) -> None:
        self.scenario = scenario
        http_base, ws_base = normalize_gateway(gateway)
        self.http = GatewayHTTP(http_base)
        self.ws_base = ws_base
        self.session_id: Optional[str] = None
        self.tutor_token: Optional[str] = None
        self.tutor: Optional[SyntheticClient] = None
        self.students: Dict[int, SyntheticClient] = {}
        self.report = ScenarioReport(scenario.name)
        self.started = time.monotonic()

    def client_for(self, params: dict) -> SyntheticClient:
        who = params.get("who", "student")
        if who == "tutor":
            if self.tutor is None:
                raise ConnectionFailure("tutor has not joined")
            return self.tutor
        idx = params.get("student", 0)
        c = self.students.get(idx)
        if c is None:
            raise ConnectionFailure(f"student {idx} has not joined")
        return c

    def run(self) -> ScenarioReport:
        try:
            for step in self.scenario.steps:
                if self.scenario.clock == "real":
                    due = self.started + step.at_ms / 1000
                    delay = due - time.monotonic()
                    if delay > 0:
                        time.sleep(delay)
                self._apply(step)
        except (ConnectionFailure, ScenarioParseError) as e:
            self.report.assertions.append(AssertionResult(
                "scenario execution", False, str(e)))
        finally:
            self._teardown()
        return self.report

    def _teardown(self) -> None:
        for c in list(self.students.values()) + (
                [self.tutor] if self.tutor else []):
            self.report.violations.extend(c.violations)
            self.report.signature[c.label] = list(c.signature)
            c.close()
        self.http.close()

    def _assert(self, name: str, ok: bool, detail: str = "") -> None:
        self.report.assertions.append(AssertionResult(name, ok, detail))

    def _apply(self, step: ScenarioStep) -> None:
        p = step.params
        timeout = p.get("timeout_ms", 5000) / 1000
        if step.action == "join_tutor":
            alias = p.get("alias", "Tutor")
            self.session_id, self.tutor_token = \
                self.http.create_session(alias)
            info = self.http.join(self.session_id, alias, "Tutor",
                                  token=self.tutor_token)
            self.tutor = SyntheticClient(
                self.ws_base, self.session_id, info["token"],
                info["peer_id"], "Tutor", alias, auto_answer=True,
                label="tutor")
            self.tutor.join()
        elif step.action == "join_student":
            idx = p.get("student", 0)
            alias = self.scenario.students[idx]
            info = self.http.join(self.session_id, alias, "Student")
            c = SyntheticClient(self.ws_base, self.session_id,
                                info["token"], info["peer_id"], "Student",
                                alias, auto_offer=True,
                                label=f"student{idx}")
            self.students[idx] = c
            c.join()
        elif step.action == "telemetry":
            self.client_for(p).telemetry(p["kind"], p.get("correct"),
                                         p.get("detail"))
        elif step.action == "chat":
            sender = self.client_for(p)
            to = p.get("to")
            if to is None:
                target = p.get("to_student")
                if target is not None:
                    to = self.students[target].peer
                elif sender.role == "Student":
                    to = self.tutor.peer
                else:
                    to = BROADCAST
            sender.chat(to, p["text"])
        elif step.action == "dispatch":
            target = self.students[p.get("student", 0)].peer
            self.tutor.dispatch(target, p["text"],
                                p.get("show_bubble", True))
        elif step.action == "zoom":
            idx = p.get("student")
            target = self.students[idx].peer if idx is not None else None
            self.tutor.zoom(target)
        elif step.action == "heartbeat":
            for c in self.students.values():
                c.heartbeat()
            if self.tutor is not None:
                self.tutor.heartbeat()
        elif step.action == "advance_clock":
            if self.scenario.clock != "simulated":
                raise ScenarioParseError(
                    "advance_clock requires a simulated-clock scenario")
            self.http.advance_clock(p["ms"])
        elif step.action == "leave":
            self.client_for(p).leave(p.get("reason", "scripted leave"))
        elif step.action == "expect_connected":
            c = self.client_for(p)
            env = c.wait_for(lambda e: e.kind == MessageKind.ANSWER, timeout)
            if env is not None and c.join_sent_at is not None \
                    and c.connected_at is not None:
                self.report.handshake_ms.append(
                    (c.connected_at - c.join_sent_at) * 1000)
            self._assert(f"{c.label} reaches Connected", env is not None,
                         "" if env else f"no Answer within {timeout}s")
        elif step.action == "expect_alert":
            kind = p["kind"]
            idx = p.get("student")
            student_peer = self.students[idx].peer if idx is not None \
                else None

            def match(e: Envelope) -> bool:
                if e.kind != MessageKind.ALERT:
                    return False
                pay = e.payload
                if pay["kind"] != kind or pay.get("cleared_at") is not None:
                    return False
                if student_peer is not None \
                        and pay["student"] != student_peer:
                    return False
                if "count" in p and pay.get("count") != p["count"]:
                    return False
                if "duration_secs" in p \
                        and pay.get("duration_secs") != p["duration_secs"]:
                    return False
                if "text" in p and pay.get("text") != p["text"]:
                    return False
                return True

            env = self.tutor.wait_for(match, timeout)
            self._assert(f"tutor sees {kind} alert", env is not None,
                         "" if env else f"no matching Alert within {timeout}s")
        elif step.action == "expect_avatar_command":
            c = self.client_for(p)

            def match_cmd(e: Envelope) -> bool:
                if e.kind != MessageKind.AVATAR_COMMAND:
                    return False
                pay = e.payload
                if "attention_wave" in p \
                        and pay.get("attention_wave") != p["attention_wave"]:
                    return False
                if "gesture" in p and pay.get("gesture") != p["gesture"]:
                    return False
                if "text" in p and pay.get("text") != p["text"]:
                    return False
                if "text_contains" in p \
                        and p["text_contains"] not in pay.get("text", ""):
                    return False
                return True

            env = c.wait_for(match_cmd, timeout)
            self._assert(f"{c.label} receives AvatarCommand",
                         env is not None,
                         "" if env else f"no matching command in {timeout}s")
        elif step.action == "expect_chat":
            c = self.client_for(p)
            text = p["text"]
            env = c.wait_for(
                lambda e: e.kind == MessageKind.CHAT
                and e.payload["text"] == text, timeout)
            self._assert(f"{c.label} receives chat", env is not None,
                         "" if env else f"no chat {text!r} in {timeout}s")
        else:  # unreachable; parse_scenario validates actions
            raise ScenarioParseError(f"unhandled action {step.action!r}")


def run_scenario(scenario: Scenario, gateway: str) -> ScenarioReport:
    """Execute one scenario against a reachable gateway."""
    return _ScenarioRunner(scenario, gateway).run()


@dataclass
class LoadReport:
    students: int
    duration_secs: float
    connected: int = 0
    join_to_connected_ms: List[float] = field(default_factory=list)
    chat_rtt_ms: List[float] = field(default_factory=list)
    healthz_ms: List[float] = field(default_factory=list)
    violations: List[str] = field(default_factory=list)
    envelopes_received: int = 0

    @property
    def all_connected(self) -> bool:
        return self.connected == self.students

    def to_text(self) -> str:
        lines = [
            f"load run: {self.students} students, "
            f"{self.duration_secs:.0f}s",
            f"  connected: {self.connected}/{self.students}",
        ]
        if self.join_to_connected_ms:
            lines.append("  join->Connected ms: "
                         + _stats_line(self.join_to_connected_ms))
        if self.chat_rtt_ms:
            lines.append("  chat rtt ms: " + _stats_line(self.chat_rtt_ms))
        if self.healthz_ms:
            lines.append("  healthz ms: " + _stats_line(self.healthz_ms))
        lines.append(f"  envelopes received: {self.envelopes_received}")
        lines.append(f"  protocol violations: {len(self.violations)}")
        return "\n".join(lines)


def load_run(n_students: int, duration_secs: float, gateway: str,
             event_rate_hz: float = 2.0,
             connect_timeout: float = 15.0) -> LoadReport:
    """Spin up n synthetic students, drive telemetry and chat, measure."""
    if n_students < 1:
        raise ValueError("n_students must be >= 1")
    http_base, ws_base = normalize_gateway(gateway)
    http = GatewayHTTP(http_base)
    report = LoadReport(students=n_students, duration_secs=duration_secs)
    clients: List[SyntheticClient] = []
    tutor: Optional[SyntheticClient] = None
    try:
        sid, tutor_token = http.create_session("LoadTutor")
        info = http.join(sid, "LoadTutor", "Tutor", token=tutor_token)
        tutor = SyntheticClient(ws_base, sid, info["token"],
                                info["peer_id"], "Tutor", "LoadTutor",
                                auto_answer=True, echo_chat=True,
                                heartbeat_secs=5.0, label="tutor")
        tutor.join()

        def spawn(i: int) -> SyntheticClient:
            alias = f"student-{i:03d}"
            j = http.join(sid, alias, "Student")
            c = SyntheticClient(ws_base, sid, j["token"], j["peer_id"],
                                "Student", alias, auto_offer=True,
                                heartbeat_secs=5.0, label=alias)
            c.join()
            return c

        threads: List[threading.Thread] = []
        spawn_lock = threading.Lock()
        spawn_errors: List[str] = []

        def spawn_into(i: int) -> None:
            try:
                c = spawn(i)
                with spawn_lock:
                    clients.append(c)
            except Exception as e:
                with spawn_lock:
                    spawn_errors.append(f"student {i}: {e}")

        for i in range(n_students):
            t = threading.Thread(target=spawn_into, args=(i,), daemon=True)
            t.start()
            threads.append(t)
        for t in threads:
            t.join(timeout=connect_timeout)
        report.violations.extend(spawn_errors)

        deadline = time.monotonic() + connect_timeout
        for c in clients:
            left = max(0.0, deadline - time.monotonic())
            env = c.wait_for(lambda e: e.kind == MessageKind.ANSWER, left)
            if env is not None and c.connected_at and c.join_sent_at:
                report.connected += 1
                report.join_to_connected_ms.append(
                    (c.connected_at - c.join_sent_at) * 1000)

        stop = time.monotonic() + duration_secs
        interval = 1.0 / max(0.1, event_rate_hz)
        i_round = 0
        while time.monotonic() < stop:
            i_round += 1
            for idx, c in enumerate(clients):
                if c.closed:
                    continue
                try:
                    if (i_round + idx) % 4 == 0:
                        c.chat(tutor.peer, f"echo-{c.peer}-{i_round}")
                    elif (i_round + idx) % 4 == 2:
                        c.telemetry("AnswerSubmitted",
                                    correct=(i_round % 3 != 0),
                                    detail=f"attempt {i_round}")
                    else:
                        c.telemetry("MouseClick")
                except ConnectionFailure:
                    continue
            try:
                report.healthz_ms.append(http.healthz())
            except ConnectionFailure as e:
                report.violations.append(str(e))
            time.sleep(interval)

        # RTT: one synchronous echo round per client at the end, so the
        # measurement is not polluted by the sender's own batching above
        settle = time.monotonic() + 2.0
        for c in clients:
            if not c.closed and time.monotonic() < settle:
                marker = f"rtt-final-{c.peer}"
                t0 = time.perf_counter()
                try:
                    c.chat(tutor.peer, marker)
                except ConnectionFailure:
                    continue
                env = c.wait_for(
                    lambda e, m=marker: e.kind == MessageKind.CHAT
                    and e.payload["text"] == m, 5.0)
                if env is not None:
                    report.chat_rtt_ms.append(
                        (time.perf_counter() - t0) * 1000)
    finally:
        for c in clients:
            report.violations.extend(c.violations)
            report.envelopes_received += len(c.inbox)
            c.close()
        if tutor is not None:
            report.violations.extend(tutor.violations)
            report.envelopes_received += len(tutor.inbox)
            tutor.close()
        http.close()
    return report
