/**
 * Avatar playback planning plus the DOM controller for the panda sprite.
 *
 * planCommand is pure so the ordering rules are testable without a
 * browser: the attention wave always plays first, then the gesture, then
 * speech/bubble/mouth run together. When platform speech is unavailable
 * the bubble is forced on regardless of show_bubble (degraded mode).
 */

import { Timeline, TimelinePlayer, Viseme, parseTimeline } from "./timeline.js";

export interface AvatarCommandPayload {
  target: string;
  text: string;
  show_bubble: boolean;
  gesture: string | null;
  attention_wave: boolean;
  timeline: unknown;
}

export type AvatarAction =
  | { kind: "wave" }
  | { kind: "gesture"; name: string }
  | { kind: "speak"; text: string }
  | { kind: "bubble"; text: string }
  | { kind: "mouth"; timeline: Timeline };

export function planCommand(cmd: AvatarCommandPayload,
                            speechAvailable: boolean): AvatarAction[] {
  const actions: AvatarAction[] = [];
  if (cmd.attention_wave) actions.push({ kind: "wave" });
  // neutral text comes through as the literal gesture name "None"
  if (cmd.gesture && cmd.gesture !== "None") {
    actions.push({ kind: "gesture", name: cmd.gesture });
  }
  if (speechAvailable) actions.push({ kind: "speak", text: cmd.text });
  if (cmd.show_bubble || !speechAvailable) {
    actions.push({ kind: "bubble", text: cmd.text });
  }
  const timeline = parseTimeline(cmd.timeline);
  if (timeline.entries.length > 0) {
    actions.push({ kind: "mouth", timeline });
  }
  return actions;
}

const WAVE_MS = 900;
const GESTURE_MS = 1200;
const BUBBLE_LINGER_MS = 3000;

/** Sprite overlay in the page corner: panda, mouth atlas, bubble. */
export class AvatarController {
  private readonly root: HTMLElement;
  private readonly mouth: HTMLElement;
  private readonly gestureBadge: HTMLElement;
  private readonly bubble: HTMLElement;
  private raf: number | null = null;
  private bubbleTimer: number | null = null;

  constructor(container: HTMLElement) {
    container.innerHTML = `
      <div class="avatar">
        <div class="avatar-face">🐼</div>
        <div class="avatar-mouth" data-viseme="Rest"></div>
        <div class="avatar-gesture" hidden></div>
        <div class="avatar-bubble" hidden></div>
      </div>`;
    this.root = container.querySelector(".avatar") as HTMLElement;
    this.mouth = container.querySelector(".avatar-mouth") as HTMLElement;
    this.gestureBadge =
      container.querySelector(".avatar-gesture") as HTMLElement;
    this.bubble = container.querySelector(".avatar-bubble") as HTMLElement;
  }

  play(cmd: AvatarCommandPayload): void {
    const speechOk = typeof window !== "undefined" &&
      "speechSynthesis" in window;
    const plan = planCommand(cmd, speechOk);
    let delay = 0;
    for (const action of plan) {
      if (action.kind === "wave") {
        this.runGesture("Wave", "👋");
        delay = WAVE_MS;
        continue;
      }
      const at = delay;
      switch (action.kind) {
        case "gesture": {
          const icon = action.name === "ThumbsUp" ? "👍"
            : action.name === "Nod" ? "🙂" : "👋";
          window.setTimeout(() => this.runGesture(action.name, icon), at);
          break;
        }
        case "speak":
          window.setTimeout(() => {
            const u = new SpeechSynthesisUtterance(action.text);
            window.speechSynthesis.speak(u);
          }, at);
          break;
        case "bubble":
          window.setTimeout(() => this.showBubble(action.text), at);
          break;
        case "mouth":
          window.setTimeout(() => this.animateMouth(action.timeline), at);
          break;
      }
    }
  }

  private runGesture(name: string, icon: string): void {
    this.gestureBadge.textContent = icon;
    this.gestureBadge.hidden = false;
    this.root.classList.remove("gesture-wave", "gesture-nod",
      "gesture-thumbsup");
    // reflow so re-adding the class restarts the css animation
    void this.root.offsetWidth;
    this.root.classList.add(`gesture-${name.toLowerCase()}`);
    window.setTimeout(() => {
      this.gestureBadge.hidden = true;
      this.root.classList.remove(`gesture-${name.toLowerCase()}`);
    }, name === "Wave" ? WAVE_MS : GESTURE_MS);
  }

  private showBubble(text: string): void {
    this.bubble.textContent = text;
    this.bubble.hidden = false;
    if (this.bubbleTimer !== null) window.clearTimeout(this.bubbleTimer);
    this.bubbleTimer = window.setTimeout(() => {
      this.bubble.hidden = true;
    }, BUBBLE_LINGER_MS + text.length * 40);
  }

  private animateMouth(timeline: Timeline): void {
    if (this.raf !== null) cancelAnimationFrame(this.raf);
    const player = new TimelinePlayer(timeline);
    const t0 = performance.now();
    const step = () => {
      const t = performance.now() - t0;
      const viseme: Viseme = player.at(t);
      this.mouth.dataset.viseme = viseme;
      if (t < player.totalMs) {
        this.raf = requestAnimationFrame(step);
      } else {
        this.mouth.dataset.viseme = "Rest";
        this.raf = null;
      }
    };
    this.raf = requestAnimationFrame(step);
  }
}
