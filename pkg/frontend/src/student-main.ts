/**
 * Student page. Joins a session, shares the screen toward the tutor
 * (this side always produces the offer), answers quality requests with a
 * renegotiation, feeds activity telemetry, and hosts the avatar overlay.
 */

import { GatewayAPI, normalizeGateway } from "./api.js";
import { AvatarCommandPayload, AvatarController } from "./avatar.js";
import { BROADCAST, Envelope } from "./protocol.js";
import {
  TierParams, applyTier, candidateFromWire, candidateToWire, rtcConfig,
} from "./rtc.js";
import { GatewaySocket } from "./wire.js";

const $ = <T extends HTMLElement>(sel: string): T =>
  document.querySelector(sel) as T;

const ANSWER_KEY = 3;          // 10 = 3k + 1
const TELEMETRY_GAP_MS = 1000; // at most one activity ping per second per kind

class StudentApp {
  socket: GatewaySocket | null = null;
  me = "";
  tutor: string | null = null;
  iceServers: string[] = [];
  pc: RTCPeerConnection | null = null;
  stream: MediaStream | null = null;
  avatar: AvatarController | null = null;
  tutorAlias = "tutor";
  lastPing = new Map<string, number>();

  async start(gatewayAddr: string, sessionId: string, alias: string):
      Promise<void> {
    const { httpBase, wsBase } = normalizeGateway(gatewayAddr);
    const api = new GatewayAPI(httpBase);
    const joined = await api.join(sessionId, alias, "Student");
    this.me = joined.peer_id;
    this.iceServers = joined.ice_servers;

    this.socket = new GatewaySocket({
      wsBase, sessionId, peer: this.me, token: joined.token,
      alias, role: "Student",
      onEnvelope: (env) => this.onEnvelope(env),
      onClose: (reason) => {
        $("#student-note").textContent = `connection closed: ${reason}`;
        this.pc?.close();
        this.pc = null;
      },
    });
    const info = await this.socket.connect();
    this.adoptRoster(info.roster);

    $("#join").hidden = true;
    $("#room").hidden = false;
    $("#room-label").textContent = `${alias} in ${sessionId}`;
    this.avatar = new AvatarController($("#avatar-slot"));
  }

  private adoptRoster(roster: any): void {
    const prev = this.tutor;
    this.tutor = roster.tutor ?? null;
    const t = (roster.peers as any[]).find((p) => p.peer === this.tutor);
    if (t) this.tutorAlias = t.alias;
    $("#tutor-label").textContent = this.tutor
      ? `tutor: ${this.tutorAlias}` : "waiting for a tutor…";
    // a takeover hands us a new tutor peer; the old pairing is gone
    if (this.tutor && this.tutor !== prev && this.stream) {
      void this.offer();
    }
  }

  onEnvelope(env: Envelope): void {
    const p = env.payload as any;
    switch (env.type) {
      case "RosterUpdate":
        this.adoptRoster(p);
        break;
      case "Answer":
        void this.pc?.setRemoteDescription(
          { type: "answer", sdp: String(p.sdp) })
          .catch((e) => console.warn("setRemoteDescription failed", e));
        break;
      case "IceCandidate":
        void this.pc?.addIceCandidate(candidateFromWire(String(p.candidate)))
          .catch((e) => console.warn("addIceCandidate failed", e));
        break;
      case "QualityRequest":
        this.onQuality(p.tier as string, p.params as TierParams);
        break;
      case "AvatarCommand":
        void this.avatar?.play(p as AvatarCommandPayload);
        break;
      case "Chat":
        this.appendChat(p.from === this.me ? "me" : this.tutorAlias,
          String(p.text), p.to === BROADCAST);
        break;
      case "Error":
        $("#student-note").textContent = `${p.code}: ${p.message}`;
        break;
      default:
        break;
    }
  }

  async share(): Promise<void> {
    try {
      this.stream = await navigator.mediaDevices.getDisplayMedia(
        { video: true });
    } catch {
      // denied or dismissed: keep the button around and say so
      $("#share-note").textContent =
        "Screen share was declined. You can try again whenever you like.";
      return;
    }
    $("#share-note").textContent = "sharing your screen";
    $("#share-btn").textContent = "Share again";
    ($("#preview") as unknown as HTMLVideoElement).srcObject = this.stream;
    this.stream.getVideoTracks()[0]?.addEventListener("ended", () => {
      $("#share-note").textContent = "screen share ended";
      this.stream = null;
    });
    if (this.tutor) await this.offer();
  }

  private async offer(): Promise<void> {
    if (!this.stream || !this.tutor) return;
    if (!this.pc) {
      this.pc = new RTCPeerConnection(rtcConfig(this.iceServers));
      this.pc.onicecandidate = (ev) => {
        if (ev.candidate && this.tutor) {
          this.socket?.send("IceCandidate", {
            target: this.tutor, candidate: candidateToWire(ev.candidate),
          });
        }
      };
      for (const track of this.stream.getTracks()) {
        this.pc.addTrack(track, this.stream);
      }
    }
    const offer = await this.pc.createOffer();
    await this.pc.setLocalDescription(offer);
    this.socket?.send("Offer", {
      target: this.tutor, sdp: offer.sdp ?? "",
    });
  }

  private onQuality(tier: string | undefined, params?: TierParams): void {
    $("#tier-label").textContent = tier ? `stream tier: ${tier}` : "";
    if (!this.pc || !params) return;
    void applyTier(this.pc, params).then(() => this.offer());
  }

  // worksheet and telemetry -------------------------------------------

  submitAnswer(raw: string): void {
    const value = Number(raw.trim());
    const correct = Number.isFinite(value) && value === ANSWER_KEY;
    this.socket?.send("Telemetry", {
      kind: "AnswerSubmitted", correct, detail: "10 = 3k + 1",
    });
    $("#worksheet-note").textContent = correct
      ? "Correct!" : "Not quite, try again.";
  }

  ping(kind: "MouseClick" | "KeyInput"): void {
    const now = Date.now();
    const last = this.lastPing.get(kind) ?? 0;
    if (now - last < TELEMETRY_GAP_MS) return;
    this.lastPing.set(kind, now);
    this.socket?.send("Telemetry", { kind });
  }

  sendChat(text: string): void {
    if (!text || !this.tutor) return;
    this.socket?.send("Chat", { from: this.me, to: this.tutor, text });
    this.appendChat("me", text, false);
  }

  private appendChat(who: string, text: string, broadcast: boolean): void {
    const log = $("#chat-log");
    const div = document.createElement("div");
    div.textContent = broadcast ? `${who} (to all): ${text}`
      : `${who}: ${text}`;
    log.appendChild(div);
    log.scrollTop = log.scrollHeight;
  }
}

const app = new StudentApp();

$("#join-form").addEventListener("submit", (ev) => {
  ev.preventDefault();
  const gateway = ($("#gateway") as unknown as HTMLInputElement).value;
  const session = ($("#session") as unknown as HTMLInputElement).value.trim();
  const alias = ($("#alias") as unknown as HTMLInputElement).value || "Student";
  $("#join-note").textContent = "joining…";
  app.start(gateway, session, alias).catch((e) => {
    $("#join-note").textContent = `failed: ${e.message ?? e}`;
  });
});

$("#share-btn").addEventListener("click", () => void app.share());

$("#worksheet-form").addEventListener("submit", (ev) => {
  ev.preventDefault();
  app.submitAnswer(($("#answer") as unknown as HTMLInputElement).value);
});

$("#chat-form").addEventListener("submit", (ev) => {
  ev.preventDefault();
  const input = $("#chat-text") as unknown as HTMLInputElement;
  app.sendChat(input.value.trim());
  input.value = "";
});

$("#worksheet").addEventListener("mousedown", () => app.ping("MouseClick"));
$("#worksheet").addEventListener("keydown", () => app.ping("KeyInput"));

const params = new URLSearchParams(location.search);
for (const key of ["gateway", "session"] as const) {
  const v = params.get(key);
  if (v) ($(`#${key}`) as unknown as HTMLInputElement).value = v;
}
