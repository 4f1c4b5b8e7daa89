/**
 * In-progress feedback for one case. Geometries live in original-image
 * pixel coordinates regardless of the client's zoom; everything here is
 * pure state manipulation so it can be tested headlessly.
 */

import { validateFeedback } from './schema.js';
import type { FeedbackPayload, GeometryKind, GeometryPayload, Lesion } from './types.js';

export interface DraftGeometry {
  kind: GeometryKind;
  lesion: Lesion;
  /** box: two opposite corners; circle: center then rim point */
  points: [number, number][];
}

export interface DraftFeedback {
  geometries: DraftGeometry[];
  correctedGrade: number | null;
  reviewer: string;
  dirty: boolean;
}

export function emptyDraft(reviewer = ''): DraftFeedback {
  return { geometries: [], correctedGrade: null, reviewer, dirty: false };
}

const clamp = (v: number, lo: number, hi: number) => Math.min(hi, Math.max(lo, v));

export function clipPoint(
  point: [number, number], width: number, height: number,
): [number, number] {
  return [clamp(point[0], 0, width - 1), clamp(point[1], 0, height - 1)];
}

function boxArea(a: [number, number], b: [number, number]): number {
  return Math.abs(a[0] - b[0]) * Math.abs(a[1] - b[1]);
}

function circleRadius(center: [number, number], rim: [number, number]): number {
  return Math.hypot(rim[0] - center[0], rim[1] - center[1]);
}

/**
 * Append a drawn geometry, clipping to image bounds. Returns the new draft
 * and whether the geometry was kept; zero-area drags are discarded.
 */
export function addGeometry(
  draft: DraftFeedback,
  kind: GeometryKind,
  lesion: Lesion,
  rawPoints: [number, number][],
  imageWidth: number,
  imageHeight: number,
): { draft: DraftFeedback; kept: boolean } {
  const points = rawPoints.map((p) => clipPoint(p, imageWidth, imageHeight)) as [
    number,
    number,
  ][];
  if (points.length !== 2) {
    return { draft, kept: false };
  }
  const degenerate =
    kind === 'box' ? boxArea(points[0], points[1]) < 1 : circleRadius(points[0], points[1]) < 1;
  if (degenerate) {
    return { draft, kept: false };
  }
  return {
    draft: {
      ...draft,
      geometries: [...draft.geometries, { kind, lesion, points }],
      dirty: true,
    },
    kept: true,
  };
}

/** Remove the most recent geometry. */
export function undo(draft: DraftFeedback): DraftFeedback {
  if (draft.geometries.length === 0) {
    return draft;
  }
  const geometries = draft.geometries.slice(0, -1);
  return {
    ...draft,
    geometries,
    dirty: geometries.length > 0 || draft.correctedGrade !== null,
  };
}

export function setCorrectedGrade(draft: DraftFeedback, grade: number | null): DraftFeedback {
  return { ...draft, correctedGrade: grade, dirty: grade !== null || draft.geometries.length > 0 };
}

/** Submit stays disabled while the draft carries nothing. */
export function canSubmit(draft: DraftFeedback): boolean {
  return draft.geometries.length > 0 || draft.correctedGrade !== null;
}

/** Serialize to the wire schema; throws if the result would not validate. */
export function toPayload(draft: DraftFeedback): FeedbackPayload {
  const geometries: GeometryPayload[] = draft.geometries.map((g) => ({
    kind: g.kind,
    lesion: g.lesion,
    coordinates: g.points.map((p) => [p[0], p[1]] as [number, number]),
  }));
  const payload: FeedbackPayload = {
    geometries,
    corrected_grade: draft.correctedGrade,
    reviewer: draft.reviewer,
  };
  const result = validateFeedback(payload);
  if (!result.valid) {
    throw new Error(`draft does not satisfy the feedback schema: ${result.errors.join('; ')}`);
  }
  return payload;
}
