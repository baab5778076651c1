// REST + event-stream client. The console talks to the design service and
// to nothing else.

import type { ServerEvent, StepAction, WireGraph } from "./types.js";

export class ApiConflict extends Error {
  constructor(public status: number, detail: string) {
    super(detail);
  }
}

async function expectJson(resp: Response): Promise<any> {
  if (!resp.ok) {
    let detail = resp.statusText;
    try {
      detail = (await resp.json()).detail ?? detail;
    } catch {
      /* body was not JSON */
    }
    throw new ApiConflict(resp.status, detail);
  }
  return resp.json();
}

export interface FieldBinding {
  preset?: string;
  seed?: number;
  n_packets?: number;
  external?: boolean;
}

export class ConsoleApi {
  constructor(
    public base: string,
    private token?: string,
  ) {}

  private headers(extra: Record<string, string> = {}): Record<string, string> {
    const h: Record<string, string> = { "content-type": "application/json", ...extra };
    if (this.token) h["x-relaynet-token"] = this.token;
    return h;
  }

  async createSession(scenario: object | string, field: FieldBinding): Promise<string> {
    const body = await expectJson(
      await fetch(`${this.base}/sessions`, {
        method: "POST",
        headers: this.headers(),
        body: JSON.stringify({ scenario, field }),
      }),
    );
    return body.session_id;
  }

  async step(sessionId: string, action: StepAction, trigger?: Record<string, number>) {
    return expectJson(
      await fetch(`${this.base}/sessions/${sessionId}/step`, {
        method: "POST",
        headers: this.headers(),
        body: JSON.stringify({ action, trigger: trigger ?? null }),
      }),
    );
  }

  async changeRelays(sessionId: string, add: string[], remove: string[]) {
    return expectJson(
      await fetch(`${this.base}/sessions/${sessionId}/relays`, {
        method: "POST",
        headers: this.headers(),
        body: JSON.stringify({ add, remove }),
      }),
    );
  }

  async metrics(sessionId: string) {
    return expectJson(
      await fetch(`${this.base}/sessions/${sessionId}/metrics`, { headers: this.headers() }),
    );
  }

  async graph(sessionId: string, view: "model" | "learnt" | "hybrid"): Promise<WireGraph> {
    return expectJson(
      await fetch(`${this.base}/sessions/${sessionId}/graph?view=${view}`, {
        headers: this.headers(),
      }),
    );
  }

  async pollEvents(sessionId: string, since = 0): Promise<ServerEvent[]> {
    return expectJson(
      await fetch(`${this.base}/sessions/${sessionId}/events?poll=true&since=${since}`, {
        headers: this.headers(),
      }),
    );
  }

  /** Subscribe to the SSE stream; resolves when the stream ends or aborts. */
  async subscribe(
    sessionId: string,
    onEvent: (ev: ServerEvent) => void,
    opts: { since?: number; limit?: number; signal?: AbortSignal } = {},
  ): Promise<void> {
    const params = new URLSearchParams();
    params.set("since", String(opts.since ?? 0));
    if (opts.limit !== undefined) params.set("limit", String(opts.limit));
    const resp = await fetch(`${this.base}/sessions/${sessionId}/events?${params}`, {
      headers: this.headers({ accept: "text/event-stream" }),
      signal: opts.signal,
    });
    if (!resp.ok || !resp.body) throw new ApiConflict(resp.status, "stream unavailable");
    const reader = resp.body.getReader();
    const decoder = new TextDecoder();
    let buffer = "";
    for (;;) {
      const { value, done } = await reader.read();
      if (done) break;
      buffer += decoder.decode(value, { stream: true });
      let sep;
      while ((sep = buffer.indexOf("\n\n")) >= 0) {
        const chunk = buffer.slice(0, sep);
        buffer = buffer.slice(sep + 2);
        for (const line of chunk.split("\n")) {
          if (line.startsWith("data: ")) onEvent(JSON.parse(line.slice(6)));
        }
      }
    }
  }

  /**
   * Keep a subscription alive: on stream drop, reconnect from seq 0 so the
   * snapshot event rebuilds the whole view (no partial state survives).
   */
  async subscribeWithReconnect(
    sessionId: string,
    onEvent: (ev: ServerEvent) => void,
    opts: { signal?: AbortSignal; retryMs?: number } = {},
  ): Promise<void> {
    const retryMs = opts.retryMs ?? 1000;
    for (;;) {
      if (opts.signal?.aborted) return;
      try {
        await this.subscribe(sessionId, onEvent, { since: 0, signal: opts.signal });
      } catch (err) {
        if (opts.signal?.aborted) return;
      }
      await new Promise((r) => setTimeout(r, retryMs));
    }
  }
}
