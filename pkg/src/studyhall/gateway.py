"""Network front door: WebSocket envelopes plus a small HTTP API.

Transport model: one asyncio event loop; every hub mutation happens in
a synchronous call from that loop (or under the room lock from tests),
so per-session serialization comes for free and inbound envelopes keep
arrival order. Log appends fsync inline, which briefly blocks the loop;
at the intended scale (one tutor, tens of students) the group-commit
batching keeps that well under a millisecond of steady-state cost, and
correctness (ack-after-durable) is the priority.

Socket lifecycle:

  connect /ws/{session}?token=..  -> accept, authenticate
  bad token                       -> Error envelope, then close
  inbound frames                  -> decode, seq/session/sender checks
  protocol violation              -> Error envelope, then close
  domain rejection                -> Error envelope, connection survives
  outbound                        -> per-connection bounded queue;
                                     overflow kills the connection with
                                     a final Error envelope

Outbound envelopes get their seq at write time from per-(connection,
sender) counters, so every sender stream a client observes counts
1,2,3,... regardless of which peers it multiplexes.
"""

from __future__ import annotations

import asyncio
import contextlib
import json
import socket
from typing import List, Optional

import uvicorn
from fastapi import FastAPI, Request, WebSocket, WebSocketDisconnect
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, PlainTextResponse

from .clock import SimulatedClock, WallClock
from .config import GatewayConfig
from .errors import ConfigInvalid, SessionClosed, StudyhallError
from .eventlog import CATEGORIES
from .hub import ClassroomHub
from .protocol import (SERVER_SENDER, Envelope, MessageKind, ProtocolError,
                       SequenceCounter, SequenceTracker, decode, encode)

TICK_INTERVAL_SECS = 1.0
MAX_CLOCK_STEP_MS = 1000

_HTTP_STATUS = {
    "session not found": 404,
    "unknown peer": 404,
    "invalid token": 401,
    "tutor seat taken": 409,
    "session closed": 410,
    "config invalid": 400,
}


def _domain_response(e: StudyhallError) -> JSONResponse:
    return JSONResponse({"error": e.code, "message": str(e)},
                        status_code=_HTTP_STATUS.get(e.code, 400))


def _bad_request(message: str) -> JSONResponse:
    return JSONResponse({"error": "malformed body", "message": message},
                        status_code=400)


async def _json_body(request: Request) -> dict:
    raw = await request.body()
    if not raw:
        return {}
    try:
        doc = json.loads(raw)
    except ValueError:
        raise ValueError("body must be valid JSON") from None
    if not isinstance(doc, dict):
        raise ValueError("body must be a JSON object")
    return doc


def _bearer_token(request: Request, body: Optional[dict] = None) -> Optional[str]:
    auth = request.headers.get("authorization", "")
    if auth.lower().startswith("bearer "):
        return auth[7:].strip()
    tok = request.query_params.get("token")
    if tok:
        return tok
    if body and isinstance(body.get("token"), str):
        return body["token"]
    return None


class Connection:
    """Outbound side of one socket: bounded queue + seq assignment."""

    def __init__(self, ws: WebSocket, session_id: str, peer: str,
                 clock, limit: int) -> None:
        self.ws = ws
        self.session_id = session_id
        self.peer = peer
        self.clock = clock
        self.queue: asyncio.Queue = asyncio.Queue(maxsize=limit)
        self.counter = SequenceCounter()
        self.kill_error: Optional[tuple] = None  # (code, message)
        self.killed = False

    def offer(self, sender: str, kind: MessageKind, payload: dict) -> bool:
        """Hub-facing sink. Never blocks; False poisons the peer."""
        if self.killed:
            return False
        try:
            self.queue.put_nowait((sender, kind, payload))
            return True
        except asyncio.QueueFull:
            self.kill("backpressure overflow",
                      error=("backpressure overflow",
                             "outbound queue exceeded its bound"))
            return False

    def kill(self, reason: str, error: Optional[tuple] = None) -> None:
        """Stop the connection. A graceful kill (no error) lets frames
        already queued flush first; an error kill drops them."""
        if self.killed:
            return
        self.killed = True
        if error is not None:
            self.kill_error = error
        try:
            self.queue.put_nowait(None)  # stop sentinel
        except asyncio.QueueFull:
            # Full queue: make room so the writer is guaranteed to wake.
            with contextlib.suppress(asyncio.QueueEmpty):
                self.queue.get_nowait()
            with contextlib.suppress(asyncio.QueueFull):
                self.queue.put_nowait(None)

    def _envelope(self, sender: str, kind: MessageKind,
                  payload: dict) -> str:
        env = Envelope(seq=self.counter.next(sender), ts=self.clock.now(),
                       session_id=self.session_id, sender=sender,
                       kind=kind, payload=payload)
        return encode(env).decode("utf-8")

    async def send_now(self, sender: str, kind: MessageKind,
                       payload: dict) -> None:
        """Bypass the queue (pre-auth errors, final error frames)."""
        with contextlib.suppress(Exception):
            await self.ws.send_text(self._envelope(sender, kind, payload))

    async def write_loop(self) -> None:
        try:
            while True:
                item = await self.queue.get()
                if item is None or self.kill_error is not None:
                    break
                sender, kind, payload = item
                await self.ws.send_text(self._envelope(sender, kind, payload))
        except Exception:
            self.killed = True
        if self.kill_error is not None:
            code, message = self.kill_error
            await self.send_now(SERVER_SENDER, MessageKind.ERROR,
                                {"code": code, "message": message})
        with contextlib.suppress(Exception):
            await self.ws.close()


def build_app(hub: ClassroomHub, config: GatewayConfig) -> FastAPI:
    @contextlib.asynccontextmanager
    async def lifespan(app: FastAPI):
        ticker = None
        if not config.simulated_clock:
            ticker = asyncio.create_task(_tick_forever(hub))
        try:
            yield
        finally:
            if ticker is not None:
                ticker.cancel()
                with contextlib.suppress(asyncio.CancelledError):
                    await ticker
            hub.shutdown()

    app = FastAPI(title="studyhall gateway", docs_url=None, redoc_url=None,
                  lifespan=lifespan)
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])
    app.state.hub = hub
    app.state.config = config

    @app.get("/healthz")
    async def healthz() -> PlainTextResponse:
        return PlainTextResponse("ok")

    @app.get("/api/prompts")
    async def prompts() -> JSONResponse:
        return JSONResponse({"prompts": hub.prompts()})

    @app.post("/api/sessions")
    async def create_session(request: Request):
        try:
            body = await _json_body(request)
            alias = body.get("tutor_alias")
            if not isinstance(alias, str) or not alias:
                return _bad_request("tutor_alias must be a non-empty string")
            sid, token = hub.create_session(alias)
            return JSONResponse({"session_id": sid, "tutor_token": token})
        except ValueError as e:
            return _bad_request(str(e))
        except StudyhallError as e:
            return _domain_response(e)

    @app.post("/api/sessions/{session_id}/join")
    async def join(session_id: str, request: Request):
        try:
            body = await _json_body(request)
            alias = body.get("alias")
            role = body.get("role")
            if not isinstance(alias, str) or not alias:
                return _bad_request("alias must be a non-empty string")
            if role not in ("Tutor", "Student"):
                return _bad_request("role must be Tutor or Student")
            token = body.get("token")
            if token is not None and not isinstance(token, str):
                return _bad_request("token must be a string")
            res, roster = hub.join(session_id, alias, role, token)
            return JSONResponse({
                "peer_id": res.peer, "token": res.token, "role": res.role,
                "ice_servers": list(config.ice_servers),
                "heartbeat_secs": config.presence.heartbeat_interval_secs,
                "roster": roster,
            })
        except ValueError as e:
            return _bad_request(str(e))
        except StudyhallError as e:
            return _domain_response(e)

    @app.post("/api/sessions/{session_id}/close")
    async def close_session(session_id: str, request: Request):
        try:
            body = await _json_body(request)
            token = _bearer_token(request, body)
            summary = hub.close_session(session_id, token)
            return JSONResponse(summary)
        except ValueError as e:
            return _bad_request(str(e))
        except StudyhallError as e:
            return _domain_response(e)

    @app.get("/api/sessions/{session_id}/events")
    async def events(session_id: str, request: Request):
        try:
            token = _bearer_token(request)
            since_raw = request.query_params.get("since_seq")
            since_seq = None
            if since_raw is not None:
                try:
                    since_seq = int(since_raw)
                except ValueError:
                    return _bad_request("since_seq must be an integer")
            categories: Optional[List[str]] = None
            raw_cats = request.query_params.getlist("category")
            if raw_cats:
                categories = []
                for c in raw_cats:
                    categories.extend(x for x in c.split(",") if x)
                bad = set(categories) - set(CATEGORIES)
                if bad:
                    return _bad_request(f"unknown category {sorted(bad)[0]!r}")
            records = hub.query_events(session_id, token,
                                       since_seq=since_seq,
                                       categories=categories)
            return JSONResponse({"records": records})
        except StudyhallError as e:
            return _domain_response(e)

    @app.post("/api/clock/advance")
    async def advance_clock(request: Request):
        clock = hub.base_clock
        if not (config.simulated_clock and isinstance(clock, SimulatedClock)):
            return JSONResponse(
                {"error": "not found",
                 "message": "clock control requires simulated_clock"},
                status_code=404)
        try:
            body = await _json_body(request)
        except ValueError as e:
            return _bad_request(str(e))
        ms = body.get("ms")
        if isinstance(ms, bool) or not isinstance(ms, int) or ms < 0 \
                or ms > 86_400_000:
            return _bad_request("ms must be an integer in [0, 86400000]")
        remaining = ms
        while remaining > 0:
            step = min(MAX_CLOCK_STEP_MS, remaining)
            clock.advance(step)
            remaining -= step
            hub.tick()
        return JSONResponse({"now": clock.now()})

    @app.websocket("/ws/{session_id}")
    async def ws_endpoint(ws: WebSocket, session_id: str) -> None:
        await ws.accept()
        token = ws.query_params.get("token")
        try:
            peer, role, _alias = hub.authenticate(session_id, token)
            clock = hub.room_clock(session_id)
        except StudyhallError as e:
            conn = Connection(ws, session_id, "-", hub.base_clock, 8)
            await conn.send_now(SERVER_SENDER, MessageKind.ERROR,
                                {"code": "invalid token", "message": str(e)})
            with contextlib.suppress(Exception):
                await ws.close()
            return

        conn = Connection(ws, session_id, peer, clock,
                          config.outbound_queue_limit)
        loop = asyncio.get_running_loop()

        def close_cb(reason: str) -> None:
            conn.kill(reason)

        try:
            hub.attach(session_id, peer, conn.offer, close_cb)
        except StudyhallError as e:
            await conn.send_now(SERVER_SENDER, MessageKind.ERROR,
                                {"code": e.code, "message": str(e)})
            with contextlib.suppress(Exception):
                await ws.close()
            return

        writer = loop.create_task(conn.write_loop())
        tracker = SequenceTracker()
        try:
            while not conn.killed:
                msg = await ws.receive()
                if msg["type"] == "websocket.disconnect":
                    break
                data = msg.get("text")
                if data is None:
                    data = msg.get("bytes")
                if data is None:
                    continue
                try:
                    env = decode(data)
                    if env.session_id != session_id:
                        raise ProtocolError(
                            f"envelope session {env.session_id!r} does not"
                            f" match this socket")
                    if env.sender != peer:
                        raise ProtocolError(
                            f"envelope sender {env.sender!r} is not {peer!r}")
                    tracker.feed(env.sender, env.seq)
                except ProtocolError as e:
                    conn.kill("protocol violation",
                              error=(e.code, str(e)))
                    break
                try:
                    hub.handle_envelope(session_id, peer, role, env)
                except SessionClosed as e:
                    conn.kill("session closed", error=(e.code, str(e)))
                    break
                except StudyhallError as e:
                    conn.offer(SERVER_SENDER, MessageKind.ERROR,
                               {"code": e.code, "message": str(e)})
        except WebSocketDisconnect:
            pass
        except RuntimeError:
            pass  # receive on a socket torn down mid-await
        finally:
            hub.detach(session_id, peer)
            conn.kill("connection closed")
            with contextlib.suppress(Exception):
                await writer

    return app


async def _tick_forever(hub: ClassroomHub) -> None:
    while True:
        await asyncio.sleep(TICK_INTERVAL_SECS)
        hub.tick()


def serve(config: GatewayConfig) -> None:
    """Run until interrupted. Prints the bound address on startup."""
    config.validate()
    base_clock = SimulatedClock() if config.simulated_clock else WallClock()
    hub = ClassroomHub(config, base_clock=base_clock)
    app = build_app(hub, config)
    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    try:
        sock.bind((config.bind, config.port))
    except OSError as e:
        sock.close()
        raise ConfigInvalid(
            f"cannot bind {config.bind}:{config.port}: {e}") from None
    actual_port = sock.getsockname()[1]
    print(f"listening on {config.bind}:{actual_port}", flush=True)
    server = uvicorn.Server(uvicorn.Config(app=app, log_level="warning",
                                           lifespan="on"))
    server.run(sockets=[sock])
