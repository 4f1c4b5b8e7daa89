import { describe, expect, it } from 'vitest';

import {
  applyPollFailure,
  applyPollSuccess,
  beforeAfterRows,
  emptyPanel,
  isTerminal,
  pollJob,
} from '../src/jobs.js';
import type { JobStatus } from '../src/types.js';

function job(state: JobStatus['state'], progress: number, tail: Record<string, unknown>[] = []): JobStatus {
  return {
    job_id: 'job-1',
    kind: 'seg_finetune',
    state,
    progress,
    message: '',
    model_version: state === 'done' ? 2 : null,
    metric_tail: tail,
  };
}

describe('job panel state', () => {
  it('records queued -> running -> done transitions', async () => {
    const sequence = [job('queued', 0), job('running', 0.3), job('running', 0.8), job('done', 1)];
    let i = 0;
    const panel = await pollJob(async () => sequence[Math.min(i++, sequence.length - 1)], 'job-1', {
      intervalMs: 1,
    });
    expect(panel.history).toEqual(['queued', 'running', 'done']);
    expect(panel.job!.progress).toBe(1);
    expect(panel.stale).toBe(false);
  });

  it('polling failures set the stale badge and keep the last snapshot', () => {
    let panel = applyPollSuccess(emptyPanel(), job('running', 0.5));
    panel = applyPollFailure(panel);
    expect(panel.stale).toBe(true);
    expect(panel.job!.state).toBe('running');
    panel = applyPollSuccess(panel, job('running', 0.6));
    expect(panel.stale).toBe(false);
  });

  it('failed jobs are terminal and keep their message', async () => {
    const failed: JobStatus = { ...job('failed', 0.4), message: 'StateError: no accepted feedback' };
    const panel = await pollJob(async () => failed, 'job-1', { intervalMs: 1 });
    expect(isTerminal(panel.job!.state)).toBe(true);
    expect(panel.job!.message).toContain('no accepted feedback');
  });

  it('extracts before/after grade agreement from the metric tail', () => {
    const tail = [
      { stage: 'grade_agreement', when: 'before', accuracy: 0.4, kappa: 0.1 },
      { stage: 'feedback_seg', lesion: 'MA', pairs: 3 },
      { stage: 'grade_agreement', when: 'after', accuracy: 0.7, kappa: 0.5 },
    ];
    const rows = beforeAfterRows(job('done', 1, tail));
    expect(rows).toEqual([
      { when: 'before', accuracy: 0.4, kappa: 0.1 },
      { when: 'after', accuracy: 0.7, kappa: 0.5 },
    ]);
  });
});
