/**
 * Dashboard state, kept as a plain structure mutated by envelopes so the
 * page can re-render from it after every message.
 *
 * Invariants the reducer maintains:
 *   - flags mirrors the uncleared Alert envelopes seen so far, keyed by
 *     student peer id; a clearing Alert (cleared_at set) removes its
 *     raised twin and nothing else.
 *   - at most one feed is zoomed.
 *   - roster is whatever the latest RosterUpdate/JoinAck said; state for
 *     peers that left is dropped.
 */

import { Envelope } from "./protocol.js";

export interface RosterPeer {
  peer: string;
  alias: string;
  role: string;
  status: string;          // Connected | Stale | Disconnected
}

export interface AlertFlag {
  kind: string;
  text: string;
  raisedAt: number;
  count: number | null;
}

export interface ChatLine {
  from: string;
  to: string;
  text: string;
  ts: number;
}

export interface DashboardState {
  sessionState: string;
  tutor: string | null;
  peers: RosterPeer[];
  flags: Map<string, AlertFlag[]>;
  zoomed: string | null;
  chat: ChatLine[];
  // last tutor interaction per student: ts of the most recent Chat or
  // AvatarCommand the tutor sent them (a choice; nothing on the wire
  // pins the definition down further)
  lastInteraction: Map<string, number>;
  errors: string[];
}

export function initialState(): DashboardState {
  return {
    sessionState: "Open",
    tutor: null,
    peers: [],
    flags: new Map(),
    zoomed: null,
    chat: [],
    lastInteraction: new Map(),
    errors: [],
  };
}

export function students(state: DashboardState): RosterPeer[] {
  return state.peers.filter((p) => p.role === "Student");
}

function applyRoster(state: DashboardState, roster: any): void {
  state.sessionState = roster.state ?? state.sessionState;
  state.tutor = roster.tutor ?? null;
  state.peers = (roster.peers ?? []) as RosterPeer[];
  const present = new Set(state.peers.map((p) => p.peer));
  for (const key of [...state.flags.keys()]) {
    if (!present.has(key)) state.flags.delete(key);
  }
  for (const key of [...state.lastInteraction.keys()]) {
    if (!present.has(key)) state.lastInteraction.delete(key);
  }
  if (state.zoomed !== null && !present.has(state.zoomed)) {
    state.zoomed = null;
  }
}

function applyAlert(state: DashboardState, p: any): void {
  const student = String(p.student);
  const open = state.flags.get(student) ?? [];
  if (p.cleared_at === null || p.cleared_at === undefined) {
    const dup = open.some(
      (f) => f.kind === p.kind && f.raisedAt === p.raised_at);
    if (!dup) {
      open.push({
        kind: String(p.kind),
        text: String(p.text),
        raisedAt: Number(p.raised_at),
        count: typeof p.count === "number" ? p.count : null,
      });
      state.flags.set(student, open);
    }
    return;
  }
  const kept = open.filter(
    (f) => !(f.kind === p.kind && f.raisedAt === p.raised_at));
  if (kept.length > 0) state.flags.set(student, kept);
  else state.flags.delete(student);
}

/** Mutates state according to one inbound envelope. */
export function applyEnvelope(state: DashboardState, env: Envelope): void {
  const p = env.payload as any;
  switch (env.type) {
    case "JoinAck":
      applyRoster(state, p.roster);
      break;
    case "RosterUpdate":
      applyRoster(state, p);
      break;
    case "Alert":
      applyAlert(state, p);
      break;
    case "Chat":
      state.chat.push({
        from: String(p.from), to: String(p.to),
        text: String(p.text), ts: env.ts,
      });
      break;
    case "Error":
      state.errors.push(`${p.code}: ${p.message}`);
      break;
    default:
      break;   // signaling kinds are handled by the RTC layer
  }
}

/** Local zoom toggle; a second zoom replaces the first. */
export function setZoom(state: DashboardState, peer: string | null): void {
  if (peer !== null && !state.peers.some((q) => q.peer === peer)) {
    throw new Error(`zoom target ${peer} is not in the roster`);
  }
  state.zoomed = peer;
}

/** Record an outbound tutor interaction (chat or dispatch). */
export function noteInteraction(state: DashboardState, student: string,
                                ts: number): void {
  state.lastInteraction.set(student, ts);
}
