// ROI selection: free-form pointer stroke -> simplified closed polygon ->
// spoke-plan request, with a preview of the returned probe points.

import type { ApiClient } from "./api.js";
import { isSelfIntersecting, polygonArea, simplifyStroke } from "./geometry.js";
import type { PlanDoc, Point } from "./types.js";

export interface RoiValidation {
  ok: boolean;
  reason?: string;
  polygon?: Point[];
}

export const SIMPLIFY_TOLERANCE_PX = 2.0;

/** Close and validate a raw stroke; failures block submission with a reason. */
export function validateRoiStroke(stroke: Point[], calibrated: boolean): RoiValidation {
  if (!calibrated) {
    return { ok: false, reason: "no calibration loaded; run calibrate first" };
  }
  const polygon = simplifyStroke(stroke, SIMPLIFY_TOLERANCE_PX);
  if (polygon.length < 3) {
    return { ok: false, reason: `need at least 3 vertices, stroke gave ${polygon.length}` };
  }
  if (isSelfIntersecting(polygon)) {
    return { ok: false, reason: "region outline crosses itself" };
  }
  if (Math.abs(polygonArea(polygon)) < 1e-6) {
    return { ok: false, reason: "region has no area" };
  }
  return { ok: true, polygon };
}

export interface SpokePreview {
  plan: PlanDoc;
  centroidStage: Point;
  pointCount: number;
}

export async function submitRoi(
  api: ApiClient,
  stroke: Point[],
  calibrated: boolean,
  opts: { nSpokes?: number; step?: number; maxRadius?: number } = {},
): Promise<SpokePreview> {
  const check = validateRoiStroke(stroke, calibrated);
  if (!check.ok || !check.polygon) {
    throw new Error(check.reason ?? "invalid region");
  }
  const plan = await api.planSpokes(check.polygon, opts);
  return {
    plan,
    centroidStage: plan.points_mm[0],
    pointCount: plan.points_mm.length,
  };
}
