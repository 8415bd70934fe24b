import { Ack, NextPayload, PresentResult, TelemetryFrame } from "./types.js";

/** Thin typed client for the session service. */
export class ServiceClient {
  constructor(readonly base: string = "") {}

  private async req<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await fetch(this.base + path, {
      headers: { "content-type": "application/json" },
      ...init,
    });
    if (!resp.ok) {
      const body = await resp.text();
      throw new Error(`${resp.status} ${path}: ${body}`);
    }
    return (await resp.json()) as T;
  }

  async createLive(seed: number, label: string): Promise<string> {
    const out = await this.req<{ session_ids: string[] }>("/sessions", {
      method: "POST",
      body: JSON.stringify({ mode: "LIVE", seed, label }),
    });
    return out.session_ids[0];
  }

  next(sessionId: string): Promise<NextPayload> {
    return this.req(`/sessions/${sessionId}/next`);
  }

  present(
    sessionId: string,
    token: string,
    opts: { realtime?: boolean; peak_mn?: number; profile_mn?: number[]; profile_dt_s?: number } = {},
  ): Promise<PresentResult> {
    return this.req(`/sessions/${sessionId}/present`, {
      method: "POST",
      body: JSON.stringify({ token, ...opts }),
    });
  }

  respond(
    sessionId: string,
    body: { token: string; acceptable?: boolean; percept?: string; rating?: number },
  ): Promise<Ack> {
    return this.req(`/sessions/${sessionId}/respond`, {
      method: "POST",
      body: JSON.stringify(body),
    });
  }

  session(sessionId: string): Promise<Record<string, unknown>> {
    return this.req(`/sessions/${sessionId}`);
  }

  telemetryUrl(sessionId: string): string {
    const base = this.base || (typeof location !== "undefined" ? location.origin : "");
    return base.replace(/^http/, "ws") + `/sessions/${sessionId}/telemetry`;
  }

  telemetry(
    sessionId: string,
    onFrame: (frame: TelemetryFrame) => void,
    onClose?: () => void,
  ): WebSocket {
    const ws = new WebSocket(this.telemetryUrl(sessionId));
    ws.onmessage = (ev) => onFrame(JSON.parse(String(ev.data)) as TelemetryFrame);
    if (onClose) ws.onclose = () => onClose();
    return ws;
  }
}
