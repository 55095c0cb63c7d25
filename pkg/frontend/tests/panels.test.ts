import { describe, expect, it } from "vitest";

import { markerFromResult, ResultOverlay } from "../src/overlay.js";
import { LivePanels } from "../src/panels.js";
import { ForceRingBuffer, initialViewState, setToolMode, SpectrogramColumns } from "../src/state.js";
import type { PointResultPayload, StreamEvent } from "../src/types.js";
import { loadEventLog } from "./fixtures.js";

const log = loadEventLog();

describe("view state", () => {
  it("holds exactly one tool mode", () => {
    let state = initialViewState();
    expect(state.toolMode).toBe("PAN");
    state = setToolMode(state, "SELECT_ROI");
    expect(state.toolMode).toBe("SELECT_ROI");
    state = setToolMode(state, "DRAW_POLYLINE");
    expect(state.toolMode).toBe("DRAW_POLYLINE");
  });

  it("bounds the force ring buffer", () => {
    const buf = new ForceRingBuffer(100);
    for (let i = 0; i < 500; i++) buf.push(0, i * 0.01, i * 0.1);
    expect(buf.length).toBe(100);
    expect(buf.all()[0].displacement).toBeCloseTo(4.0, 9);
  });

  it("bounds the spectrogram columns", () => {
    const cols = new SpectrogramColumns(50);
    cols.pushColumns(Array.from({ length: 120 }, () => new Float64Array(4)));
    expect(cols.length).toBe(50);
  });
});

describe("result overlay", () => {
  const results = log.filter((e) => e.kind === "POINT_RESULT");

  it("builds one marker per result, colored by argmax with max-prob opacity", () => {
    expect(results.length).toBeGreaterThan(0);
    const payload = results[0].payload as unknown as PointResultPayload;
    const marker = markerFromResult(payload);
    expect(marker.index).toBe(payload.index);
    if (payload.probs && payload.predicted !== undefined) {
      expect(marker.opacity).toBeCloseTo(Math.max(...payload.probs), 12);
      expect(marker.className).toBe(payload.class_names![payload.predicted]);
    }
  });

  it("replaying the same event log reproduces an identical overlay", () => {
    const a = new ResultOverlay();
    const b = new ResultOverlay();
    a.consumeLog(log);
    b.consumeLog(log);
    expect(a.list()).toEqual(b.list());
    expect(a.size).toBe(results.length);
    // ordering of interleaved non-result events cannot matter
    const shuffled = [...log].reverse();
    const c = new ResultOverlay();
    c.consumeLog(shuffled);
    expect(c.list()).toEqual(a.list());
  });
});

describe("live panels consuming the recorded session", () => {
  it("tracks session state to DONE with the full point count", () => {
    const panels = new LivePanels();
    for (const event of log) panels.consume(event);
    expect(panels.sessionState).toBe("DONE");
    expect(panels.completed).toBe(panels.total);
    expect(panels.overlay.size).toBe(panels.total);
    expect(panels.force.length).toBeGreaterThan(0);
  });

  it("freezes into a PAUSED badge when the stream says so", () => {
    const panels = new LivePanels();
    panels.consume({
      kind: "STATE",
      seq: 1,
      t_ns: 1,
      payload: { session: "s", state: "PAUSED", completed: 3, total: 10 },
    } as StreamEvent);
    expect(panels.paused).toBe(true);
    expect(panels.completed).toBe(3);
  });

  it("renders frame gaps as explicit discontinuities", () => {
    const panels = new LivePanels();
    panels.consume({ kind: "FRAME", seq: 1, t_ns: 1, payload: {} } as StreamEvent);
    panels.consume({ kind: "FRAME", seq: -1, t_ns: 0, payload: { gap: true } } as StreamEvent);
    panels.consume({ kind: "FRAME", seq: 2, t_ns: 2, payload: {} } as StreamEvent);
    expect(panels.frameCount).toBe(2);
    expect(panels.gaps).toHaveLength(1);
    expect(panels.gaps[0].at).toBe(1);
  });

  it("accumulates spectrogram columns from contiguous PCM chunks", () => {
    const panels = new LivePanels();
    // synthesize two chunks of a 1 kHz tone split mid-frame
    const sr = 44100;
    const n = 4096;
    const pcm = new Int16Array(n);
    for (let i = 0; i < n; i++) pcm[i] = Math.round(12000 * Math.sin((2 * Math.PI * 1000 * i) / sr));
    const toB64 = (arr: Int16Array) =>
      Buffer.from(arr.buffer, arr.byteOffset, arr.byteLength).toString("base64");
    const mk = (offset: number, chunk: Int16Array): StreamEvent =>
      ({
        kind: "AUDIO_CHUNK",
        seq: offset,
        t_ns: offset,
        payload: { index: 0, mic: "L", offset, sample_rate: sr, pcm16_b64: toB64(chunk) },
      }) as StreamEvent;
    panels.consume(mk(0, pcm.subarray(0, 1500)));
    panels.consume(mk(1500, pcm.subarray(1500)));
    // 4096 samples -> 7 hops worth of full frames
    expect(panels.spectrogram.length).toBe(1 + Math.floor((n - 1024) / 512));
    const lastCol = panels.spectrogram.slice()[panels.spectrogram.length - 1];
    const peakBin = lastCol.indexOf(Math.max(...lastCol));
    expect(Math.abs((peakBin * sr) / 1024 - 1000)).toBeLessThan(sr / 1024);
  });
});
