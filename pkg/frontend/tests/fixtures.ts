import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import type { CalibrationDoc, PlanDoc, StreamEvent } from "../src/types.js";

const FIXTURES = join(dirname(fileURLToPath(import.meta.url)), "..", "fixtures");

export function loadJson<T>(name: string): T {
  return JSON.parse(readFileSync(join(FIXTURES, name), "utf-8")) as T;
}

export interface PlanFixture {
  request: Record<string, unknown>;
  response: PlanDoc;
  overlay_px: [number, number][];
  surface_height_mm: number;
}

export interface GoldenClip {
  pcm16_b64: string;
  sample_rate: number;
  frame_length: number;
  hop: number;
  spectrogram_db: number[][];
}

export function loadCalibration(): CalibrationDoc {
  return loadJson<CalibrationDoc>("calibration.json");
}

export function loadEventLog(): StreamEvent[] {
  const text = readFileSync(join(FIXTURES, "event_log.jsonl"), "utf-8");
  return text
    .trim()
    .split("\n")
    .map((line) => JSON.parse(line) as StreamEvent);
}

/** fetch stub that pins the request to the recorded one, then replays it. */
export function recordedFetch(
  expectedPath: string,
  expectedBody: Record<string, unknown>,
  response: unknown,
  calls: { path: string; body: unknown }[] = [],
) {
  return async (url: string, init?: RequestInit): Promise<Response> => {
    const path = url.replace(/^https?:\/\/[^/]+/, "");
    const body = init?.body ? JSON.parse(String(init.body)) : undefined;
    calls.push({ path, body });
    if (path !== expectedPath) {
      return new Response(JSON.stringify({ detail: `unexpected path ${path}` }), { status: 404 });
    }
    if (JSON.stringify(body) !== JSON.stringify(expectedBody)) {
      return new Response(JSON.stringify({ detail: "request body differs from recording" }), {
        status: 409,
      });
    }
    return new Response(JSON.stringify(response), { status: 200 });
  };
}
