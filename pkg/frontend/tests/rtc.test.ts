import { describe, expect, it } from "vitest";

import {
  candidateFromWire, candidateToWire, encodingForTier, rtcConfig,
} from "../src/rtc.js";

describe("encodingForTier", () => {
  it("maps kbps to maxBitrate in bps", () => {
    expect(encodingForTier({ width: 1280, height: 720, bitrate_kbps: 1500 }))
      .toEqual({ maxBitrate: 1_500_000 });
  });

  it("derives maxFramerate from the frame interval", () => {
    const enc = encodingForTier({
      width: 320, height: 180, bitrate_kbps: 80, frame_interval_ms: 2000,
    });
    expect(enc.maxBitrate).toBe(80_000);
    expect(enc.maxFramerate).toBe(0.5);
  });

  it("leaves maxFramerate unset without an interval", () => {
    const enc = encodingForTier(
      { width: 640, height: 360, bitrate_kbps: 400 });
    expect("maxFramerate" in enc).toBe(false);
    const zero = encodingForTier({
      width: 640, height: 360, bitrate_kbps: 400, frame_interval_ms: 0,
    });
    expect("maxFramerate" in zero).toBe(false);
  });
});

describe("rtcConfig", () => {
  it("wraps ice server urls", () => {
    expect(rtcConfig(["stun:stun.example.org:3478"])).toEqual({
      iceServers: [{ urls: "stun:stun.example.org:3478" }],
    });
    expect(rtcConfig([])).toEqual({ iceServers: [] });
  });
});

describe("candidate wire format", () => {
  it("round-trips a candidate as JSON", () => {
    const init = {
      candidate: "candidate:1 1 UDP 2122252543 192.0.2.1 54321 typ host",
      sdpMid: "0",
      sdpMLineIndex: 0,
      usernameFragment: "abcd",
    };
    // the browser object serializes via toJSON; a stub stands in here
    const wire = candidateToWire({ toJSON: () => init } as RTCIceCandidate);
    expect(JSON.parse(wire)).toEqual(init);
    expect(candidateFromWire(wire)).toEqual(init);
  });
});
