/**
 * Fine-tune job polling. Polling failures never crash the panel: the last
 * known snapshot stays up with a stale badge until the next success.
 */

import type { JobStatus } from './types.js';

export interface JobPanelState {
  job: JobStatus | null;
  stale: boolean;
  history: string[];
  beforeAfter: { when: string; accuracy: number; kappa: number }[];
}

export function emptyPanel(): JobPanelState {
  return { job: null, stale: false, history: [], beforeAfter: [] };
}

export function isTerminal(state: string): boolean {
  return state === 'done' || state === 'failed';
}

/** Extract before/after grade-agreement rows from the metric tail. */
export function beforeAfterRows(job: JobStatus): { when: string; accuracy: number; kappa: number }[] {
  return job.metric_tail
    .filter((row) => row['stage'] === 'grade_agreement')
    .map((row) => ({
      when: String(row['when'] ?? ''),
      accuracy: Number(row['accuracy'] ?? NaN),
      kappa: Number(row['kappa'] ?? NaN),
    }));
}

export function applyPollSuccess(panel: JobPanelState, job: JobStatus): JobPanelState {
  const history =
    panel.job?.state === job.state ? panel.history : [...panel.history, job.state];
  return { job, stale: false, history, beforeAfter: beforeAfterRows(job) };
}

export function applyPollFailure(panel: JobPanelState): JobPanelState {
  return { ...panel, stale: true };
}

export interface PollOptions {
  intervalMs?: number;
  timeoutMs?: number;
  onUpdate?: (panel: JobPanelState) => void;
}

/**
 * Poll a job to a terminal state. The fetcher is injected so tests drive
 * the transitions without a network.
 */
export async function pollJob(
  fetchJob: (jobId: string) => Promise<JobStatus>,
  jobId: string,
  options: PollOptions = {},
): Promise<JobPanelState> {
  const interval = options.intervalMs ?? 300;
  const deadline = Date.now() + (options.timeoutMs ?? 120_000);
  let panel = emptyPanel();
  while (Date.now() < deadline) {
    try {
      const job = await fetchJob(jobId);
      panel = applyPollSuccess(panel, job);
    } catch {
      panel = applyPollFailure(panel);
    }
    options.onUpdate?.(panel);
    if (panel.job && isTerminal(panel.job.state)) {
      return panel;
    }
    await new Promise((resolve) => setTimeout(resolve, interval));
  }
  return panel;
}
