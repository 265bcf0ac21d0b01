/**
 * Tutor dashboard page. One RTCPeerConnection per student (the student
 * always offers, we answer), a thumbnail grid with presence dots, alert
 * flags, zoom, chat, and the hint dispatch box.
 */

import { GatewayAPI, normalizeGateway } from "./api.js";
import {
  DashboardState, applyEnvelope, initialState, noteInteraction, setZoom,
  students,
} from "./dashboard.js";
import { BROADCAST, Envelope } from "./protocol.js";
import { candidateFromWire, candidateToWire, rtcConfig } from "./rtc.js";
import { GatewaySocket } from "./wire.js";

const $ = <T extends HTMLElement>(sel: string): T =>
  document.querySelector(sel) as T;

interface Tile {
  root: HTMLElement;
  video: HTMLVideoElement;
  name: HTMLElement;
  status: HTMLElement;
  flags: HTMLElement;
  last: HTMLElement;
  zoomBtn: HTMLButtonElement;
  hintBtn: HTMLButtonElement;
}

class TutorApp {
  state: DashboardState = initialState();
  socket: GatewaySocket | null = null;
  me = "";
  sessionId = "";
  pcs = new Map<string, RTCPeerConnection>();
  tiles = new Map<string, Tile>();
  iceServers: string[] = [];
  prompts: string[] = [];
  dispatchTarget: string | null = null;

  async start(gatewayAddr: string, alias: string): Promise<void> {
    const { httpBase, wsBase } = normalizeGateway(gatewayAddr);
    const api = new GatewayAPI(httpBase);
    const created = await api.createSession(alias);
    this.sessionId = created.session_id;
    const joined = await api.join(
      this.sessionId, alias, "Tutor", created.tutor_token);
    this.me = joined.peer_id;
    this.iceServers = joined.ice_servers;
    this.prompts = await api.prompts().catch(() => []);

    this.socket = new GatewaySocket({
      wsBase, sessionId: this.sessionId, peer: this.me,
      token: joined.token, alias, role: "Tutor",
      onEnvelope: (env) => this.onEnvelope(env),
      onClose: (reason) => this.onSocketClose(reason),
    });
    await this.socket.connect();

    $("#setup").hidden = true;
    $("#dashboard").hidden = false;
    $("#session-label").textContent = this.sessionId;
    $("#student-hint").textContent =
      `Students join with session id ${this.sessionId} on student.html`;
    this.renderPrompts();
    this.render();
  }

  onEnvelope(env: Envelope): void {
    applyEnvelope(this.state, env);
    const p = env.payload as any;
    switch (env.type) {
      case "Offer":
        void this.answerOffer(env.sender, String(p.sdp));
        break;
      case "IceCandidate": {
        const pc = this.pcs.get(env.sender);
        if (pc) {
          void pc.addIceCandidate(candidateFromWire(String(p.candidate)))
            .catch((e) => console.warn("addIceCandidate failed", e));
        }
        break;
      }
      default:
        break;
    }
    this.render();
  }

  onSocketClose(reason: string): void {
    $("#dashboard-note").textContent = `connection closed: ${reason}`;
    for (const pc of this.pcs.values()) pc.close();
    this.pcs.clear();
  }

  private async answerOffer(student: string, sdp: string): Promise<void> {
    let pc = this.pcs.get(student);
    if (!pc) {
      pc = new RTCPeerConnection(rtcConfig(this.iceServers));
      this.pcs.set(student, pc);
      pc.onicecandidate = (ev) => {
        if (ev.candidate) {
          this.socket?.send("IceCandidate", {
            target: student, candidate: candidateToWire(ev.candidate),
          });
        }
      };
      pc.ontrack = (ev) => {
        const tile = this.ensureTile(student);
        tile.video.srcObject = ev.streams[0] ?? new MediaStream([ev.track]);
      };
    }
    await pc.setRemoteDescription({ type: "offer", sdp });
    const answer = await pc.createAnswer();
    await pc.setLocalDescription(answer);
    this.socket?.send("Answer", { target: student, sdp: answer.sdp ?? "" });
  }

  zoom(peer: string | null): void {
    setZoom(this.state, peer);
    this.socket?.send("QualityRequest", { target: peer });
    this.render();
  }

  sendChat(to: string, text: string): void {
    if (!text) return;
    this.socket?.send("Chat", { from: this.me, to, text });
    this.state.chat.push({ from: this.me, to, text, ts: Date.now() });
    if (to !== BROADCAST) noteInteraction(this.state, to, Date.now());
    this.render();
  }

  dispatchHint(target: string, text: string, bubble: boolean): void {
    if (!text) return;
    this.socket?.send("AvatarCommand", {
      target, text, show_bubble: bubble,
    });
    noteInteraction(this.state, target, Date.now());
    this.render();
  }

  // rendering ---------------------------------------------------------

  private ensureTile(peer: string): Tile {
    let tile = this.tiles.get(peer);
    if (tile) return tile;
    const root = document.createElement("div");
    root.className = "tile";
    root.innerHTML = `
      <video autoplay playsinline muted></video>
      <div class="tile-bar">
        <span class="dot"></span>
        <span class="tile-name"></span>
        <span class="tile-flags"></span>
      </div>
      <div class="tile-meta">
        <span class="tile-last"></span>
        <button class="zoom-btn">Zoom</button>
        <button class="hint-btn">Hint</button>
      </div>`;
    tile = {
      root,
      video: root.querySelector("video") as HTMLVideoElement,
      name: root.querySelector(".tile-name") as HTMLElement,
      status: root.querySelector(".dot") as HTMLElement,
      flags: root.querySelector(".tile-flags") as HTMLElement,
      last: root.querySelector(".tile-last") as HTMLElement,
      zoomBtn: root.querySelector(".zoom-btn") as HTMLButtonElement,
      hintBtn: root.querySelector(".hint-btn") as HTMLButtonElement,
    };
    tile.zoomBtn.onclick = () =>
      this.zoom(this.state.zoomed === peer ? null : peer);
    tile.hintBtn.onclick = () => {
      this.dispatchTarget = peer;
      this.render();
    };
    $("#grid").appendChild(root);
    this.tiles.set(peer, tile);
    return tile;
  }

  render(): void {
    const current = students(this.state);
    const liveIds = new Set(current.map((s) => s.peer));
    for (const [peer, tile] of [...this.tiles]) {
      if (!liveIds.has(peer)) {
        tile.root.remove();
        this.tiles.delete(peer);
        this.pcs.get(peer)?.close();
        this.pcs.delete(peer);
        if (this.dispatchTarget === peer) this.dispatchTarget = null;
      }
    }

    for (const s of current) {
      const tile = this.ensureTile(s.peer);
      tile.name.textContent = s.alias;
      tile.status.dataset.status = s.status;
      tile.status.title = s.status;
      const flags = this.state.flags.get(s.peer) ?? [];
      tile.flags.textContent = flags.length > 0 ? "⚠".repeat(flags.length) : "";
      tile.flags.title = flags.map((f) => f.text).join("\n");
      tile.root.classList.toggle("flagged", flags.length > 0);
      tile.root.classList.toggle("zoomed", this.state.zoomed === s.peer);
      tile.zoomBtn.textContent =
        this.state.zoomed === s.peer ? "Unzoom" : "Zoom";
      const last = this.state.lastInteraction.get(s.peer);
      tile.last.textContent = last
        ? `last contact ${new Date(last).toLocaleTimeString()}`
        : "no contact yet";
    }

    $("#grid").classList.toggle("has-zoom", this.state.zoomed !== null);

    const chatLog = $("#chat-log");
    chatLog.innerHTML = "";
    const aliasOf = (peer: string) =>
      this.state.peers.find((q) => q.peer === peer)?.alias ?? peer;
    for (const line of this.state.chat.slice(-50)) {
      const div = document.createElement("div");
      const who = line.from === this.me ? "me" : aliasOf(line.from);
      const to = line.to === BROADCAST ? "all" : aliasOf(line.to);
      div.textContent = `${who} → ${to}: ${line.text}`;
      chatLog.appendChild(div);
    }
    chatLog.scrollTop = chatLog.scrollHeight;

    const select = $("#chat-target") as unknown as HTMLSelectElement;
    const want = [["*", "everyone"] as const,
      ...current.map((s) => [s.peer, s.alias] as const)];
    if (select.options.length !== want.length ||
        [...select.options].some((o, i) => o.value !== want[i][0])) {
      const prev = select.value;
      select.innerHTML = "";
      for (const [value, label] of want) {
        const opt = document.createElement("option");
        opt.value = value;
        opt.textContent = label;
        select.appendChild(opt);
      }
      if ([...select.options].some((o) => o.value === prev)) {
        select.value = prev;
      }
    }

    const box = $("#dispatch");
    box.hidden = this.dispatchTarget === null;
    if (this.dispatchTarget !== null) {
      $("#dispatch-who").textContent = aliasOf(this.dispatchTarget);
    }

    if (this.state.errors.length > 0) {
      $("#dashboard-note").textContent =
        this.state.errors[this.state.errors.length - 1];
    }
    if (this.state.sessionState === "Closed") {
      $("#dashboard-note").textContent = "session closed";
    }
  }

  private renderPrompts(): void {
    const select = $("#dispatch-prompt") as unknown as HTMLSelectElement;
    select.innerHTML = "<option value=''>custom…</option>";
    for (const p of this.prompts) {
      const opt = document.createElement("option");
      opt.value = p;
      opt.textContent = p.length > 60 ? p.slice(0, 57) + "…" : p;
      select.appendChild(opt);
    }
    select.onchange = () => {
      if (select.value) {
        ($("#dispatch-text") as unknown as HTMLInputElement).value =
          select.value;
      }
    };
  }
}

const app = new TutorApp();

$("#setup-form").addEventListener("submit", (ev) => {
  ev.preventDefault();
  const gateway = ($("#gateway") as unknown as HTMLInputElement).value;
  const alias = ($("#alias") as unknown as HTMLInputElement).value || "Tutor";
  $("#setup-note").textContent = "connecting…";
  app.start(gateway, alias).catch((e) => {
    $("#setup-note").textContent = `failed: ${e.message ?? e}`;
  });
});

$("#chat-form").addEventListener("submit", (ev) => {
  ev.preventDefault();
  const input = $("#chat-text") as unknown as HTMLInputElement;
  const select = $("#chat-target") as unknown as HTMLSelectElement;
  app.sendChat(select.value, input.value.trim());
  input.value = "";
});

$("#dispatch-form").addEventListener("submit", (ev) => {
  ev.preventDefault();
  const text =
    ($("#dispatch-text") as unknown as HTMLInputElement).value.trim();
  const bubble =
    ($("#dispatch-bubble") as unknown as HTMLInputElement).checked;
  if (app.dispatchTarget) app.dispatchHint(app.dispatchTarget, text, bubble);
  app.dispatchTarget = null;
  app.render();
});

$("#dispatch-cancel").addEventListener("click", () => {
  app.dispatchTarget = null;
  app.render();
});

const params = new URLSearchParams(location.search);
if (params.get("gateway")) {
  ($("#gateway") as unknown as HTMLInputElement).value =
    params.get("gateway")!;
}
