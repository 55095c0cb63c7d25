// Wire types mirroring the backend's documented JSON surfaces.

export type EventKind = "FRAME" | "FORCE_POINT" | "AUDIO_CHUNK" | "POINT_RESULT" | "STATE";

export interface StreamEvent {
  kind: EventKind;
  seq: number;
  t_ns: number;
  payload: Record<string, unknown>;
}

export interface ForcePointPayload {
  index: number;
  displacement_mm: number;
  force_n: number;
}

export interface AudioChunkPayload {
  index: number;
  mic: "L" | "R";
  offset: number;
  sample_rate: number;
  pcm16_b64: string;
}

export interface PointResultPayload {
  index: number;
  x_mm: number;
  y_mm: number;
  material_truth?: string;
  probs?: number[];
  predicted?: number;
  class_names?: string[];
}

export interface StatePayload {
  session: string;
  state: "IDLE" | "RUNNING" | "PAUSED" | "DONE" | "FAULT";
  completed: number;
  total?: number;
  snapshot?: boolean;
}

export interface PlanDoc {
  pattern: "RASTER" | "SPOKES" | "POLYLINE";
  points_mm: [number, number][];
  provenance: Record<string, unknown>;
}

export interface SimilarityDoc {
  scale: number;
  rotation_row_major: number[]; // 9 entries
  translation_mm: number[]; // 3 entries
}

export interface CalibrationDoc {
  camera_to_stage: SimilarityDoc;
  stage_to_camera: SimilarityDoc;
  intrinsics: { fx: number; fy: number; cx: number; cy: number; width: number; height: number };
}

export interface SessionDoc {
  id: string;
  state: StatePayload["state"];
  completed: number;
  total: number;
  config_hash?: string;
}

export type Point = [number, number];
