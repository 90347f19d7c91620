export type TaskKind = "relocation" | "deformation" | "rotation";

export interface Point {
  x: number;
  y: number;
}

/** Row-major 0/1 grid, bits[y][x]. */
export type BitGrid = number[][];

export interface RegionDraft {
  id: number;
  kind: TaskKind;
  bits: BitGrid;
  target: Point | null;
  anchor: Point | null;
  /** Server-computed source centroid (k = 0 preview); never derived locally. */
  beginCentroid: Point | null;
  chosenPrompt: string | null;
}

export interface PreviewFrameMask {
  index: number;
  bits: BitGrid;
  png_b64: string;
  centroid: [number, number];
  source_bits: BitGrid;
}

export interface PreviewFrame {
  k: number;
  K: number;
  masks: PreviewFrameMask[];
}

export interface OpPayload {
  task: TaskKind;
  target: [number, number];
  anchor: [number, number] | null;
  mask_bits: BitGrid;
}

export type JobStatus = "queued" | "running" | "done" | "failed";

export interface JobRecord {
  id: string;
  status: JobStatus;
  progress: number;
  loss_trajectory: number[];
  centroid_trajectory: [number, number][][];
  error: string | null;
  final_latent_b64?: string;
}

export interface IntentCandidates {
  label: TaskKind;
  candidates: string[];
  chosen_index: number | null;
  truncated: number[];
}

export interface ExportedFile {
  name: string;
  data: Uint8Array;
}
