import { describe, expect, it } from 'vitest';

import { validateFeedback } from '../src/schema.js';

describe('feedback schema validation', () => {
  it('accepts a box geometry with corrected grade', () => {
    const result = validateFeedback({
      geometries: [{ kind: 'box', lesion: 'HE', coordinates: [[1, 2], [10, 12]] }],
      corrected_grade: 3,
      reviewer: 'dr-a',
    });
    expect(result.valid).toBe(true);
    expect(result.errors).toEqual([]);
  });

  it('accepts grade-only feedback', () => {
    const result = validateFeedback({ geometries: [], corrected_grade: 0, reviewer: '' });
    expect(result.valid).toBe(true);
  });

  it('rejects an empty draft', () => {
    const result = validateFeedback({ geometries: [], corrected_grade: null, reviewer: '' });
    expect(result.valid).toBe(false);
    expect(result.errors.join(' ')).toContain('at least one');
  });

  it('rejects unknown lesions and kinds', () => {
    const result = validateFeedback({
      geometries: [{ kind: 'scribble', lesion: 'XX', coordinates: [[0, 0], [1, 1]] }],
      corrected_grade: null,
      reviewer: '',
    });
    expect(result.valid).toBe(false);
    expect(result.errors.some((e) => e.includes('kind'))).toBe(true);
    expect(result.errors.some((e) => e.includes('lesion'))).toBe(true);
  });

  it('rejects out-of-range grades', () => {
    expect(validateFeedback({ geometries: [], corrected_grade: 7, reviewer: '' }).valid).toBe(false);
    expect(validateFeedback({ geometries: [], corrected_grade: 2.5, reviewer: '' }).valid).toBe(false);
  });

  it('rejects malformed coordinates', () => {
    const result = validateFeedback({
      geometries: [{ kind: 'box', lesion: 'MA', coordinates: [[1], [2, 3]] }],
      corrected_grade: null,
      reviewer: '',
    });
    expect(result.valid).toBe(false);
  });

  it('rejects extra fields', () => {
    const result = validateFeedback({
      geometries: [],
      corrected_grade: 1,
      reviewer: '',
      status: 'accepted',
    });
    expect(result.valid).toBe(false);
    expect(result.errors.some((e) => e.includes('unknown field'))).toBe(true);
  });
});
