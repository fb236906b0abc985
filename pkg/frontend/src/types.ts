/** Normalized [x1, y1, x2, y2] with x1 < x2, y1 < y2, all in [0, 1]. */
export type Box = [number, number, number, number];

/** One entity slot as the wire schema spells it. */
export interface EntityPayload {
  description: string;
  first_box: Box;
  last_box: Box;
  /** swatch id from /v1/vocab, or an inline palette crop */
  reference?: string | number[][];
}

export interface DecodeSettings {
  steps: number;
  guidance_scale: number;
  temperature: number;
  seed: number;
}

export interface GenerateRequest {
  prompt: string;
  entities: EntityPayload[];
  decode: DecodeSettings;
}

/** An entity as the canvas works with it, before serialization. */
export interface CanvasEntity {
  description: string;
  firstBox: Box;
  lastBox: Box;
  reference: string | null;
  /** CSS color used for this entity's boxes and path preview */
  displayColor: string;
}

export type JobPhase = "queued" | "running" | "done" | "failed";

export interface JobStatus {
  id: string;
  status: JobPhase;
  request: unknown;
  created_at: number;
  started_at: number | null;
  finished_at: number | null;
  result?: { clip_id: string; frame_count: number };
  error?: string;
}

export interface Swatch {
  id: string;
  color: string;
  shape: string;
  description_id: number;
  rgb: [number, number, number];
  cells: number[][];
}

export interface VocabLimits {
  n_slots: number;
  prompt_len: number;
  box_bins: number;
  grid: [number, number];
  frame_count: number;
  k_pal: number;
}

export interface VocabResponse {
  words: string[];
  descriptions: { id: number; text: string; color: string; shape: string }[];
  swatches: Swatch[];
  limits: VocabLimits;
}

export interface HealthResponse {
  status: string;
  checkpoint: string;
  parameters: number;
  pending_jobs: number;
}

/** A submitted generation, kept in session history. */
export interface HistoryEntry {
  jobId: string;
  /** exact bytes that went over the wire; resubmitting sends them verbatim */
  requestJson: string;
  status: JobPhase;
  clipId: string | null;
  frameCount: number;
  thumbnail: string | null;
}
