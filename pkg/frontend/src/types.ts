/** Wire types matching the backend's JSON, snake_case preserved. */

export type Lesion = 'MA' | 'HE' | 'EX' | 'SE';
export const LESIONS: Lesion[] = ['MA', 'HE', 'EX', 'SE'];

export type GeometryKind = 'box' | 'circle';

export interface GeometryPayload {
  kind: GeometryKind;
  lesion: Lesion;
  coordinates: [number, number][];
}

export interface FeedbackPayload {
  geometries: GeometryPayload[];
  corrected_grade: number | null;
  reviewer: string;
}

export interface CaseSummary {
  case_id: string;
  image_path: string;
  review_state: 'unreviewed' | 'reviewed';
  bundle_version: number | null;
}

export interface BundleRecord {
  image_id: string;
  grade: number;
  probs: number[];
  explanation_score: number;
  union_overlap: number;
  per_lesion_overlap: Record<string, number>;
  model_version: string;
  review_state: string;
  overlay_urls: Record<string, string>;
}

export type JobState = 'queued' | 'running' | 'done' | 'failed';

export interface JobStatus {
  job_id: string;
  kind: string;
  state: JobState;
  progress: number;
  message: string;
  model_version: number | null;
  metric_tail: Record<string, unknown>[];
}

export interface ModelEntry {
  lineage: string;
  version: number;
  checkpoint: string;
  parent: number | null;
  created: string;
}

export interface ApiError {
  code: string;
  message: string;
  stage: string;
}
