// Boundary polyline: clicked vertices (with undo) -> arc-length-resampled
// plan request; the returned samples are overlaid back onto the image.

import type { ApiClient } from "./api.js";
import { polylineLength } from "./geometry.js";
import type { PlanDoc, Point } from "./types.js";

export interface PolylineValidation {
  ok: boolean;
  reason?: string;
}

export function validatePolyline(vertices: Point[], calibrated: boolean): PolylineValidation {
  if (!calibrated) {
    return { ok: false, reason: "no calibration loaded; run calibrate first" };
  }
  if (vertices.length < 2) {
    return { ok: false, reason: `a boundary needs at least 2 vertices, got ${vertices.length}` };
  }
  if (polylineLength(vertices) < 1e-6) {
    return { ok: false, reason: "polyline has zero length" };
  }
  return { ok: true };
}

export async function submitPolyline(
  api: ApiClient,
  vertices: Point[],
  calibrated: boolean,
  spacingMm = 1.0,
): Promise<PlanDoc> {
  const check = validatePolyline(vertices, calibrated);
  if (!check.ok) throw new Error(check.reason ?? "invalid polyline");
  return api.planPolyline(vertices, spacingMm);
}
