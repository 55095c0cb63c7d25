// Operator console view state: one active tool at a time, overlay toggles,
// and bounded plot buffers.

import type { Point } from "./types.js";

export type ToolMode = "SELECT_ROI" | "DRAW_POLYLINE" | "PAN";

export interface OverlayToggles {
  map: boolean;
  planPoints: boolean;
  laser: boolean;
}

export interface ViewState {
  sessionId: string | null;
  toolMode: ToolMode;
  overlays: OverlayToggles;
  calibrated: boolean;
  sessionState: string;
}

export function initialViewState(): ViewState {
  return {
    sessionId: null,
    toolMode: "PAN",
    overlays: { map: true, planPoints: true, laser: true },
    calibrated: false,
    sessionState: "IDLE",
  };
}

export function setToolMode(state: ViewState, mode: ToolMode): ViewState {
  return { ...state, toolMode: mode };
}

/** Ring buffer for the force trace; bounded to the most recent samples. */
export class ForceRingBuffer {
  private buf: { index: number; displacement: number; force: number }[] = [];

  // 10 s of force samples at the rig's worst-case streaming rate
  constructor(public capacity = 2000) {}

  push(index: number, displacement: number, force: number): void {
    this.buf.push({ index, displacement, force });
    if (this.buf.length > this.capacity) this.buf.splice(0, this.buf.length - this.capacity);
  }

  get length(): number {
    return this.buf.length;
  }

  /** Samples of the most recent palpation only (one curve per point). */
  currentCurve(): { displacement: number; force: number }[] {
    if (!this.buf.length) return [];
    const latest = this.buf[this.buf.length - 1].index;
    return this.buf.filter((s) => s.index === latest);
  }

  all(): readonly { index: number; displacement: number; force: number }[] {
    return this.buf;
  }
}

/** Scrolling spectrogram columns; bounded to ~30 s of audio. */
export class SpectrogramColumns {
  private cols: Float64Array[] = [];

  constructor(public capacity = Math.ceil((30 * 44100) / 512)) {}

  pushColumns(columns: Float64Array[]): void {
    this.cols.push(...columns);
    if (this.cols.length > this.capacity) this.cols.splice(0, this.cols.length - this.capacity);
  }

  get length(): number {
    return this.cols.length;
  }

  slice(): readonly Float64Array[] {
    return this.cols;
  }
}

/** Stroke accumulator with undo, shared by the ROI and polyline tools. */
export class VertexBuffer {
  vertices: Point[] = [];

  add(p: Point): void {
    this.vertices.push(p);
  }

  undo(): Point | undefined {
    return this.vertices.pop();
  }

  clear(): void {
    this.vertices = [];
  }
}
