// Result overlay: plan markers colored by argmax class with opacity equal
// to the winning probability. Derived purely from POINT_RESULT events, so
// replaying an event log reproduces the overlay exactly.

import type { PointResultPayload, StreamEvent } from "./types.js";

export const CLASS_COLORS = [
  "#e6194b",
  "#3cb44b",
  "#0082c8",
  "#f58230",
  "#911eb4",
  "#46f0f0",
];

export interface Marker {
  index: number;
  xMm: number;
  yMm: number;
  classIndex: number | null;
  className: string | null;
  color: string;
  opacity: number;
}

export function markerFromResult(payload: PointResultPayload): Marker {
  const predicted = payload.predicted ?? null;
  const probs = payload.probs ?? null;
  return {
    index: payload.index,
    xMm: payload.x_mm,
    yMm: payload.y_mm,
    classIndex: predicted,
    className:
      predicted !== null && payload.class_names ? payload.class_names[predicted] : null,
    color: predicted !== null ? CLASS_COLORS[predicted % CLASS_COLORS.length] : "#888888",
    opacity: probs && probs.length ? Math.max(...probs) : 0.5,
  };
}

export class ResultOverlay {
  private markers = new Map<number, Marker>();

  consume(event: StreamEvent): void {
    if (event.kind !== "POINT_RESULT") return;
    const marker = markerFromResult(event.payload as unknown as PointResultPayload);
    this.markers.set(marker.index, marker);
  }

  consumeLog(events: StreamEvent[]): void {
    for (const event of events) this.consume(event);
  }

  list(): Marker[] {
    return [...this.markers.values()].sort((a, b) => a.index - b.index);
  }

  get size(): number {
    return this.markers.size;
  }
}
