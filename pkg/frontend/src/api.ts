/** Typed client for the review service. */

import type {
  ApiError,
  BundleRecord,
  CaseSummary,
  FeedbackPayload,
  JobStatus,
  ModelEntry,
} from './types.js';

export class ApiRequestError extends Error {
  constructor(
    public readonly status: number,
    public readonly body: ApiError,
  ) {
    super(`${body.code}: ${body.message} (stage ${body.stage})`);
  }
}

async function parseOrThrow<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let body: ApiError;
    try {
      body = (await response.json()) as ApiError;
    } catch {
      body = { code: 'unknown', message: response.statusText, stage: 'transport' };
    }
    throw new ApiRequestError(response.status, body);
  }
  return (await response.json()) as T;
}

export class ReviewApi {
  constructor(
    private readonly baseUrl: string,
    private readonly fetcher: typeof fetch = fetch,
  ) {}

  url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  async uploadCase(file: Blob, filename = 'upload.png'): Promise<{ case_id: string }> {
    const form = new FormData();
    form.append('file', file, filename);
    const response = await this.fetcher(this.url('/cases'), { method: 'POST', body: form });
    return parseOrThrow(response);
  }

  async listCases(): Promise<CaseSummary[]> {
    const response = await this.fetcher(this.url('/cases'));
    const body = await parseOrThrow<{ cases: CaseSummary[] }>(response);
    return body.cases;
  }

  async getBundle(caseId: string): Promise<BundleRecord> {
    const response = await this.fetcher(this.url(`/cases/${caseId}/bundle`));
    return parseOrThrow(response);
  }

  async submitFeedback(caseId: string, payload: FeedbackPayload): Promise<{ record_id: string }> {
    const response = await this.fetcher(this.url(`/cases/${caseId}/feedback`), {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(payload),
    });
    return parseOrThrow(response);
  }

  async acceptFeedback(recordId: string): Promise<{ status: string }> {
    const response = await this.fetcher(this.url(`/feedback/${recordId}/accept`), {
      method: 'POST',
    });
    return parseOrThrow(response);
  }

  feedbackMaskUrl(recordId: string, lesion: string): string {
    return this.url(`/feedback/${recordId}/masks/${lesion}.png`);
  }

  async startFinetune(kind: string): Promise<JobStatus> {
    const response = await this.fetcher(this.url('/jobs/finetune'), {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ kind }),
    });
    return parseOrThrow(response);
  }

  async getJob(jobId: string): Promise<JobStatus> {
    const response = await this.fetcher(this.url(`/jobs/${jobId}`));
    return parseOrThrow(response);
  }

  async listModels(): Promise<ModelEntry[]> {
    const response = await this.fetcher(this.url('/models'));
    const body = await parseOrThrow<{ models: ModelEntry[] }>(response);
    return body.models;
  }
}
