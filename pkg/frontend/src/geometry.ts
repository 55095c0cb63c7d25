// Polygon/polyline helpers for the drawing tools, plus the stage<->pixel
// mapping derived from the published calibration document.

import type { CalibrationDoc, Point } from "./types.js";

export function perpendicularDistance(p: Point, a: Point, b: Point): number {
  const dx = b[0] - a[0];
  const dy = b[1] - a[1];
  const len = Math.hypot(dx, dy);
  if (len < 1e-12) return Math.hypot(p[0] - a[0], p[1] - a[1]);
  return Math.abs(dy * p[0] - dx * p[1] + b[0] * a[1] - b[1] * a[0]) / len;
}

/** Douglas-Peucker vertex decimation (default tolerance: 2 px). */
export function simplifyStroke(points: Point[], tolerance = 2.0): Point[] {
  if (points.length <= 2) return points.slice();
  const keep = new Array<boolean>(points.length).fill(false);
  keep[0] = keep[points.length - 1] = true;
  const stack: [number, number][] = [[0, points.length - 1]];
  while (stack.length) {
    const [lo, hi] = stack.pop()!;
    let worst = tolerance;
    let split = -1;
    for (let i = lo + 1; i < hi; i++) {
      const d = perpendicularDistance(points[i], points[lo], points[hi]);
      if (d > worst) {
        worst = d;
        split = i;
      }
    }
    if (split >= 0) {
      keep[split] = true;
      stack.push([lo, split], [split, hi]);
    }
  }
  return points.filter((_, i) => keep[i]);
}

function segmentsIntersect(p1: Point, p2: Point, p3: Point, p4: Point): boolean {
  const d = (p2[0] - p1[0]) * (p4[1] - p3[1]) - (p2[1] - p1[1]) * (p4[0] - p3[0]);
  if (Math.abs(d) < 1e-12) return false;
  const t = ((p3[0] - p1[0]) * (p4[1] - p3[1]) - (p3[1] - p1[1]) * (p4[0] - p3[0])) / d;
  const u = ((p3[0] - p1[0]) * (p2[1] - p1[1]) - (p3[1] - p1[1]) * (p2[0] - p1[0])) / d;
  return t > 1e-9 && t < 1 - 1e-9 && u > 1e-9 && u < 1 - 1e-9;
}

/** Non-adjacent edge crossings of a closed polygon. */
export function isSelfIntersecting(vertices: Point[]): boolean {
  const n = vertices.length;
  if (n < 4) return false;
  for (let i = 0; i < n; i++) {
    const a1 = vertices[i];
    const a2 = vertices[(i + 1) % n];
    for (let j = i + 1; j < n; j++) {
      if (j === i || (j + 1) % n === i || (i + 1) % n === j) continue;
      if (i === 0 && j === n - 1) continue;
      if (segmentsIntersect(a1, a2, vertices[j], vertices[(j + 1) % n])) return true;
    }
  }
  return false;
}

export function polygonArea(vertices: Point[]): number {
  let acc = 0;
  for (let i = 0; i < vertices.length; i++) {
    const [x1, y1] = vertices[i];
    const [x2, y2] = vertices[(i + 1) % vertices.length];
    acc += x1 * y2 - x2 * y1;
  }
  return acc / 2;
}

export function polylineLength(vertices: Point[]): number {
  let acc = 0;
  for (let i = 1; i < vertices.length; i++) {
    acc += Math.hypot(vertices[i][0] - vertices[i - 1][0], vertices[i][1] - vertices[i - 1][1]);
  }
  return acc;
}

function applySimilarity(doc: { scale: number; rotation_row_major: number[]; translation_mm: number[] },
                         p: [number, number, number]): [number, number, number] {
  const r = doc.rotation_row_major;
  const t = doc.translation_mm;
  const s = doc.scale;
  return [
    s * (r[0] * p[0] + r[1] * p[1] + r[2] * p[2]) + t[0],
    s * (r[3] * p[0] + r[4] * p[1] + r[5] * p[2]) + t[1],
    s * (r[6] * p[0] + r[7] * p[1] + r[8] * p[2]) + t[2],
  ];
}

/**
 * Project a stage-frame point onto the camera image using the calibration
 * document (stage -> camera similarity, then pinhole intrinsics). Used to
 * overlay returned plan points on the live view.
 */
export function stageToPixel(calibration: CalibrationDoc, stage: [number, number, number]): Point {
  const cam = applySimilarity(calibration.stage_to_camera, stage);
  if (cam[2] <= 0) throw new Error("stage point is behind the camera");
  const k = calibration.intrinsics;
  return [k.cx + (k.fx * cam[0]) / cam[2], k.cy + (k.fy * cam[1]) / cam[2]];
}

/** Plan points carry no Z; overlay them at the phantom's working height. */
export function planPointsToPixels(
  calibration: CalibrationDoc,
  points: Point[],
  surfaceHeightMm: number,
): Point[] {
  return points.map((p) => stageToPixel(calibration, [p[0], p[1], surfaceHeightMm]));
}
