// Thin fetch wrapper over the management HTTP API.

export interface GatewayBases {
  httpBase: string;
  wsBase: string;
}

/** Accepts "host:port" or a full http(s)/ws(s) URL. */
export function normalizeGateway(addr: string): GatewayBases {
  let trimmed = addr.trim();
  for (const scheme of ["http://", "https://", "ws://", "wss://"]) {
    if (trimmed.startsWith(scheme)) {
      trimmed = trimmed.slice(scheme.length);
      break;
    }
  }
  trimmed = trimmed.replace(/\/+$/, "");
  if (!trimmed) throw new Error(`bad gateway address: ${JSON.stringify(addr)}`);
  return { httpBase: `http://${trimmed}`, wsBase: `ws://${trimmed}` };
}

export class ApiError extends Error {
  constructor(public readonly status: number, message: string) {
    super(message);
    this.name = "ApiError";
  }
}

async function check(resp: Response): Promise<any> {
  const body = await resp.json().catch(() => ({}));
  if (!resp.ok) {
    throw new ApiError(resp.status, body.error ?? `HTTP ${resp.status}`);
  }
  return body;
}

export interface JoinResponse {
  peer_id: string;
  token: string;
  role: string;
  ice_servers: string[];
  heartbeat_secs: number;
  roster: Record<string, unknown>;
}

export class GatewayAPI {
  constructor(private readonly httpBase: string) {}

  async createSession(tutorAlias: string):
      Promise<{ session_id: string; tutor_token: string }> {
    return check(await fetch(`${this.httpBase}/api/sessions`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ tutor_alias: tutorAlias }),
    }));
  }

  async join(sessionId: string, alias: string, role: string,
             token?: string): Promise<JoinResponse> {
    const body: Record<string, unknown> = { alias, role };
    if (token) body.token = token;
    return check(await fetch(
      `${this.httpBase}/api/sessions/${encodeURIComponent(sessionId)}/join`, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(body),
      }));
  }

  async closeSession(sessionId: string, token: string): Promise<any> {
    return check(await fetch(
      `${this.httpBase}/api/sessions/${encodeURIComponent(sessionId)}/close`, {
        method: "POST",
        headers: { authorization: `Bearer ${token}` },
      }));
  }

  async prompts(): Promise<string[]> {
    const doc = await check(await fetch(`${this.httpBase}/api/prompts`));
    return doc.prompts ?? [];
  }
}
