/**
 * Shared feedback contract: the JSON shape the backend accepts at
 * POST /cases/{id}/feedback. Serialized drafts must validate here before
 * they leave the client; the backend enforces the same rules server-side.
 */

export const FEEDBACK_SCHEMA = {
  type: 'object',
  properties: {
    geometries: {
      type: 'array',
      items: {
        type: 'object',
        properties: {
          kind: { enum: ['box', 'circle', 'polygon', 'raster'] },
          lesion: { enum: ['MA', 'HE', 'EX', 'SE'] },
          coordinates: {
            type: 'array',
            items: {
              type: 'array',
              items: { type: 'number' },
              minItems: 2,
              maxItems: 2,
            },
          },
        },
        required: ['kind', 'lesion', 'coordinates'],
      },
    },
    corrected_grade: { type: ['integer', 'null'], minimum: 0, maximum: 4 },
    reviewer: { type: 'string' },
  },
  required: ['geometries', 'corrected_grade', 'reviewer'],
  additionalProperties: false,
} as const;

export interface ValidationResult {
  valid: boolean;
  errors: string[];
}

function isPoint(value: unknown): boolean {
  return (
    Array.isArray(value) &&
    value.length === 2 &&
    value.every((v) => typeof v === 'number' && Number.isFinite(v))
  );
}

/** Validate a payload against FEEDBACK_SCHEMA, reporting field-level errors. */
export function validateFeedback(payload: unknown): ValidationResult {
  const errors: string[] = [];
  if (typeof payload !== 'object' || payload === null || Array.isArray(payload)) {
    return { valid: false, errors: ['payload must be an object'] };
  }
  const record = payload as Record<string, unknown>;

  for (const key of Object.keys(record)) {
    if (!['geometries', 'corrected_grade', 'reviewer'].includes(key)) {
      errors.push(`unknown field ${key}`);
    }
  }

  const geometries = record['geometries'];
  if (!Array.isArray(geometries)) {
    errors.push('geometries must be an array');
  } else {
    geometries.forEach((g, i) => {
      if (typeof g !== 'object' || g === null) {
        errors.push(`geometries[${i}] must be an object`);
        return;
      }
      const geo = g as Record<string, unknown>;
      if (!['box', 'circle', 'polygon', 'raster'].includes(geo['kind'] as string)) {
        errors.push(`geometries[${i}].kind invalid`);
      }
      if (!['MA', 'HE', 'EX', 'SE'].includes(geo['lesion'] as string)) {
        errors.push(`geometries[${i}].lesion invalid`);
      }
      const coords = geo['coordinates'];
      if (!Array.isArray(coords) || !coords.every(isPoint)) {
        errors.push(`geometries[${i}].coordinates must be [x, y] pairs`);
      } else if (geo['kind'] === 'box' || geo['kind'] === 'circle') {
        if (coords.length !== 2) {
          errors.push(`geometries[${i}] needs exactly two points`);
        }
      }
    });
  }

  const grade = record['corrected_grade'];
  if (grade !== null && (!Number.isInteger(grade) || (grade as number) < 0 || (grade as number) > 4)) {
    errors.push('corrected_grade must be an integer in [0, 4] or null');
  }

  if (typeof record['reviewer'] !== 'string') {
    errors.push('reviewer must be a string');
  }

  // backend invariant: at least one of geometries / corrected grade
  if (Array.isArray(geometries) && geometries.length === 0 && grade === null) {
    errors.push('feedback needs at least one geometry or a corrected grade');
  }

  return { valid: errors.length === 0, errors };
}
