// WebRTC helpers shared by both pages. SDP and ICE candidates travel as
// opaque strings inside envelopes; candidates are JSON round-tripped.

export interface TierParams {
  width: number;
  height: number;
  bitrate_kbps: number;
  frame_interval_ms?: number;
}

/** Translate gateway tier params into sender encoding settings. */
export function encodingForTier(params: TierParams): RTCRtpEncodingParameters {
  const enc: RTCRtpEncodingParameters = {
    maxBitrate: params.bitrate_kbps * 1000,
  };
  if (params.frame_interval_ms && params.frame_interval_ms > 0) {
    enc.maxFramerate = 1000 / params.frame_interval_ms;
  }
  return enc;
}

export function rtcConfig(iceServers: string[]): RTCConfiguration {
  return { iceServers: iceServers.map((u) => ({ urls: u })) };
}

export async function applyTier(pc: RTCPeerConnection,
                                params: TierParams): Promise<void> {
  for (const sender of pc.getSenders()) {
    if (!sender.track || sender.track.kind !== "video") continue;
    const p = sender.getParameters();
    if (!p.encodings || p.encodings.length === 0) {
      p.encodings = [{}];
    }
    Object.assign(p.encodings[0], encodingForTier(params));
    await sender.setParameters(p);
  }
}

export function candidateToWire(c: RTCIceCandidate): string {
  return JSON.stringify(c.toJSON());
}

export function candidateFromWire(s: string): RTCIceCandidateInit {
  return JSON.parse(s) as RTCIceCandidateInit;
}
