/**
 * Wire protocol mirror for the browser clients.
 *
 * One JSON envelope per socket frame. The top-level key order is fixed
 * (v, seq, ts, session, sender, type, payload) and payload keys are
 * sorted recursively, so an encoded frame is byte-identical to what the
 * gateway itself would produce for the same envelope. seq is per sender
 * per connection, starts at 1, increments by exactly 1; a gap or repeat
 * on the inbound side is fatal to the connection.
 */

export const PROTOCOL_VERSION = 1;
export const SERVER_SENDER = "server";
export const BROADCAST = "*";
export const MAX_FRAME_BYTES = 256 * 1024;

export const MESSAGE_KINDS = [
  "Join", "JoinAck", "Leave", "RosterUpdate",
  "Offer", "Answer", "IceCandidate", "QualityRequest",
  "Chat", "AvatarCommand", "Telemetry", "Alert",
  "Heartbeat", "Error",
] as const;

export type MessageKind = (typeof MESSAGE_KINDS)[number];

const KIND_SET: ReadonlySet<string> = new Set(MESSAGE_KINDS);

export interface Envelope {
  v: typeof PROTOCOL_VERSION;
  seq: number;
  ts: number;
  session: string;
  sender: string;
  type: MessageKind;
  payload: Record<string, unknown>;
}

export class ProtocolViolation extends Error {
  constructor(public readonly code: string, detail: string) {
    super(`${code}: ${detail}`);
    this.name = "ProtocolViolation";
  }
}

/** JSON.stringify with object keys sorted at every depth. */
export function canonicalJson(value: unknown): string {
  if (value === null) return "null";
  switch (typeof value) {
    case "boolean":
      return value ? "true" : "false";
    case "number":
      if (!Number.isFinite(value)) {
        throw new ProtocolViolation("invalid envelope",
          "non-finite number in payload");
      }
      return JSON.stringify(value);
    case "string":
      return JSON.stringify(value);
    case "object":
      break;
    default:
      throw new ProtocolViolation("invalid envelope",
        `unsupported payload value of type ${typeof value}`);
  }
  if (Array.isArray(value)) {
    return "[" + value.map(canonicalJson).join(",") + "]";
  }
  const obj = value as Record<string, unknown>;
  const parts = Object.keys(obj).sort().map(
    (k) => JSON.stringify(k) + ":" + canonicalJson(obj[k]));
  return "{" + parts.join(",") + "}";
}

const ENCODER = new TextEncoder();

export function encodeEnvelope(env: Envelope): string {
  // top-level order is part of the contract, so assemble it by hand
  const frame =
    `{"v":${env.v},"seq":${env.seq},"ts":${env.ts},` +
    `"session":${JSON.stringify(env.session)},` +
    `"sender":${JSON.stringify(env.sender)},` +
    `"type":${JSON.stringify(env.type)},` +
    `"payload":${canonicalJson(env.payload)}}`;
  if (ENCODER.encode(frame).length > MAX_FRAME_BYTES) {
    throw new ProtocolViolation("malformed frame", "frame exceeds 256KB");
  }
  return frame;
}

function isPlainObject(v: unknown): v is Record<string, unknown> {
  return typeof v === "object" && v !== null && !Array.isArray(v);
}

export function decodeEnvelope(text: string): Envelope {
  if (ENCODER.encode(text).length > MAX_FRAME_BYTES) {
    throw new ProtocolViolation("malformed frame", "frame exceeds 256KB");
  }
  let doc: unknown;
  try {
    doc = JSON.parse(text);
  } catch {
    throw new ProtocolViolation("malformed frame", "frame is not valid JSON");
  }
  if (!isPlainObject(doc)) {
    throw new ProtocolViolation("malformed frame", "frame is not an object");
  }
  if (doc.v !== PROTOCOL_VERSION) {
    throw new ProtocolViolation("version mismatch",
      `expected v=${PROTOCOL_VERSION}`);
  }
  const seq = doc.seq;
  const ts = doc.ts;
  if (!Number.isSafeInteger(seq) || (seq as number) < 1) {
    throw new ProtocolViolation("invalid envelope", "seq must be an int >= 1");
  }
  if (!Number.isSafeInteger(ts) || (ts as number) < 0) {
    throw new ProtocolViolation("invalid envelope", "ts must be an int >= 0");
  }
  if (typeof doc.session !== "string" || !doc.session) {
    throw new ProtocolViolation("invalid envelope", "session must be a string");
  }
  if (typeof doc.sender !== "string" || !doc.sender) {
    throw new ProtocolViolation("invalid envelope", "sender must be a string");
  }
  if (typeof doc.type !== "string" || !KIND_SET.has(doc.type)) {
    throw new ProtocolViolation("unknown kind", String(doc.type));
  }
  if (!isPlainObject(doc.payload)) {
    throw new ProtocolViolation("invalid envelope", "payload must be an object");
  }
  return {
    v: PROTOCOL_VERSION,
    seq: seq as number,
    ts: ts as number,
    session: doc.session,
    sender: doc.sender,
    type: doc.type as MessageKind,
    payload: doc.payload,
  };
}

/** Enforces the per-sender seq discipline on inbound envelopes. */
export class SequenceTracker {
  private expected = new Map<string, number>();

  accept(env: Envelope): void {
    const want = this.expected.get(env.sender) ?? 1;
    if (env.seq !== want) {
      throw new ProtocolViolation("sequence violation",
        `expected seq ${want} from ${env.sender}, got ${env.seq}`);
    }
    this.expected.set(env.sender, want + 1);
  }
}
