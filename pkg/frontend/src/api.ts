// Thin client over the documented control endpoints and the WebSocket
// stream. All session mutation goes through here and nowhere else.

import type { CalibrationDoc, PlanDoc, Point, SessionDoc, StreamEvent } from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public status: number, detail: string) {
    super(`HTTP ${status}: ${detail}`);
  }
}

export class ApiClient {
  constructor(
    private baseUrl: string,
    private fetchImpl: FetchLike = (...args) => fetch(...args),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const resp = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method,
      headers: body === undefined ? undefined : { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const text = await resp.text();
    if (!resp.ok) {
      let detail = text;
      try {
        detail = JSON.parse(text).detail ?? text;
      } catch {
        /* plain-text error body */
      }
      throw new ApiError(resp.status, String(detail));
    }
    return JSON.parse(text) as T;
  }

  health(): Promise<{ status: string }> {
    return this.request("GET", "/health");
  }

  calibration(): Promise<CalibrationDoc> {
    return this.request("GET", "/calibration");
  }

  planSpokes(roiVerticesPx: Point[], opts: { nSpokes?: number; step?: number; maxRadius?: number } = {}): Promise<PlanDoc> {
    return this.request("POST", "/plans/spokes", {
      roi_vertices_px: roiVerticesPx,
      n_spokes: opts.nSpokes ?? 8,
      step: opts.step ?? 1.0,
      max_radius: opts.maxRadius ?? 10.0,
    });
  }

  planPolyline(verticesPx: Point[], spacing = 1.0): Promise<PlanDoc> {
    return this.request("POST", "/plans/polyline", { vertices_px: verticesPx, spacing });
  }

  planRaster(origin: Point, nx: number, ny: number, step: number): Promise<PlanDoc> {
    return this.request("POST", "/plans/raster", { origin, nx, ny, step });
  }

  createSession(id: string, plan: PlanDoc): Promise<SessionDoc> {
    return this.request("POST", "/sessions", { id, plan });
  }

  session(id: string): Promise<SessionDoc> {
    return this.request("GET", `/sessions/${id}`);
  }

  run(id: string): Promise<{ id: string; state: string }> {
    return this.request("POST", `/sessions/${id}/run`);
  }

  pause(id: string): Promise<SessionDoc> {
    return this.request("POST", `/sessions/${id}/pause`);
  }

  stop(id: string): Promise<SessionDoc> {
    return this.request("POST", `/sessions/${id}/stop`);
  }

  sessionMap(id: string): Promise<Record<string, unknown>> {
    return this.request("GET", `/sessions/${id}/map`);
  }

  streamUrl(id: string, kinds: string[]): string {
    const ws = this.baseUrl.replace(/^http/, "ws");
    return `${ws}/sessions/${id}/stream?kinds=${kinds.join(",")}`;
  }
}

export function parseStreamEvent(text: string): StreamEvent {
  return JSON.parse(text) as StreamEvent;
}
