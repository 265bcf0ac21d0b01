/**
 * WebSocket wrapper: joins the room, keeps the heartbeat going, stamps
 * outbound seq numbers and validates the inbound sequence discipline.
 */

import {
  Envelope, MessageKind, PROTOCOL_VERSION, ProtocolViolation,
  SequenceTracker, decodeEnvelope, encodeEnvelope,
} from "./protocol.js";

export interface JoinedInfo {
  peer: string;
  role: string;
  roster: Record<string, unknown>;
  iceServers: string[];
  heartbeatSecs: number;
}

export interface GatewaySocketOptions {
  wsBase: string;            // e.g. ws://127.0.0.1:8765
  sessionId: string;
  peer: string;
  token: string;
  alias: string;
  role: "Tutor" | "Student";
  onEnvelope: (env: Envelope) => void;
  onClose: (reason: string) => void;
}

export class GatewaySocket {
  private ws: WebSocket | null = null;
  private seq = 0;
  private tracker = new SequenceTracker();
  private heartbeatTimer: number | null = null;
  private closedReason: string | null = null;
  joined: JoinedInfo | null = null;

  constructor(private readonly opts: GatewaySocketOptions) {}

  /** Opens the socket and resolves once the JoinAck arrives. */
  connect(): Promise<JoinedInfo> {
    const o = this.opts;
    const url = `${o.wsBase}/ws/${encodeURIComponent(o.sessionId)}` +
      `?token=${encodeURIComponent(o.token)}&peer=${encodeURIComponent(o.peer)}`;
    this.ws = new WebSocket(url);
    return new Promise((resolve, reject) => {
      const ws = this.ws!;
      ws.onopen = () => {
        this.send("Join", { alias: o.alias, role: o.role });
      };
      ws.onmessage = (ev) => {
        let env: Envelope;
        try {
          env = decodeEnvelope(String(ev.data));
          this.tracker.accept(env);
        } catch (e) {
          // a malformed or out-of-order server frame is unrecoverable
          this.close(e instanceof ProtocolViolation ? e.message : String(e));
          reject(e as Error);
          return;
        }
        if (env.type === "JoinAck" && this.joined === null) {
          const p = env.payload as Record<string, any>;
          this.joined = {
            peer: p.peer, role: p.role, roster: p.roster,
            iceServers: p.ice_servers ?? [],
            heartbeatSecs: p.heartbeat_secs ?? 15,
          };
          this.startHeartbeat(this.joined.heartbeatSecs);
          resolve(this.joined);
        }
        o.onEnvelope(env);
      };
      ws.onclose = (ev) => {
        this.stopHeartbeat();
        const reason = this.closedReason ?? ev.reason ?? "socket closed";
        o.onClose(reason);
        if (this.joined === null) reject(new Error(reason));
      };
      ws.onerror = () => { /* onclose always follows */ };
    });
  }

  send(kind: MessageKind, payload: Record<string, unknown>): void {
    if (!this.ws || this.ws.readyState !== WebSocket.OPEN) return;
    this.seq += 1;
    const env: Envelope = {
      v: PROTOCOL_VERSION, seq: this.seq, ts: Date.now(),
      session: this.opts.sessionId, sender: this.opts.peer,
      type: kind, payload,
    };
    this.ws.send(encodeEnvelope(env));
  }

  close(reason = "client closed"): void {
    this.closedReason = reason;
    this.stopHeartbeat();
    this.ws?.close();
  }

  private startHeartbeat(secs: number): void {
    this.stopHeartbeat();
    this.heartbeatTimer = window.setInterval(
      () => this.send("Heartbeat", {}), Math.max(1, secs) * 1000);
  }

  private stopHeartbeat(): void {
    if (this.heartbeatTimer !== null) {
      window.clearInterval(this.heartbeatTimer);
      this.heartbeatTimer = null;
    }
  }
}
