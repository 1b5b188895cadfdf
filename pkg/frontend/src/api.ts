/**
 * Thin typed client over the HTTP API. The fetch implementation is
 * injectable so tests can run against a scripted backend and record the
 * request log (the no-download assertion rides on that).
 */

import type {
  AuditPage,
  ErrorEnvelope,
  JobRequestBody,
  JobStatus,
  ModelSchema,
  ModelSummary,
  ModelVersionInfo,
  ResultEnvelope,
  TestReportBody,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public readonly envelope: ErrorEnvelope,
    public readonly status: number,
  ) {
    super(`${envelope.code}: ${envelope.message}`);
  }
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly token: string,
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.rawRequest(method, path, body);
    return (await response.json()) as T;
  }

  private async rawRequest(method: string, path: string, body?: unknown): Promise<Response> {
    const init: RequestInit = {
      method,
      headers: {
        Authorization: `Bearer ${this.token}`,
        ...(body !== undefined ? { "Content-Type": "application/json" } : {}),
      },
      ...(body !== undefined ? { body: JSON.stringify(body) } : {}),
    };
    const response = await this.fetchImpl(this.baseUrl + path, init);
    if (!response.ok) {
      let envelope: ErrorEnvelope;
      try {
        envelope = (await response.json()) as ErrorEnvelope;
      } catch {
        envelope = { code: "HTTP", message: `status ${response.status}`, details: {} };
      }
      throw new ApiError(envelope, response.status);
    }
    return response;
  }

  me(): Promise<{ user_id: string; name: string; role: string }> {
    return this.request("GET", "/api/me");
  }

  listModels(): Promise<{ models: ModelSummary[] }> {
    return this.request("GET", "/api/models");
  }

  listVersions(name: string): Promise<{ versions: ModelVersionInfo[] }> {
    return this.request("GET", `/api/models/${encodeURIComponent(name)}/versions`);
  }

  modelSchema(name: string): Promise<ModelSchema> {
    return this.request("GET", `/api/models/${encodeURIComponent(name)}/schema`);
  }

  /** Superuser screens only; end-user flows must never reach this. */
  downloadModel(name: string, version: number): Promise<unknown> {
    return this.request("GET", `/api/models/${encodeURIComponent(name)}/${version}/download`);
  }

  uploadModel(doc: unknown): Promise<ModelVersionInfo> {
    return this.request("POST", "/api/models", doc);
  }

  attachTests(name: string, version: number, tests: unknown[]): Promise<{ count: number }> {
    return this.request("PUT", `/api/models/${encodeURIComponent(name)}/${version}/tests`, { tests });
  }

  runTests(name: string, version: number): Promise<TestReportBody> {
    return this.request("POST", `/api/models/${encodeURIComponent(name)}/${version}/test-run`);
  }

  promote(name: string, version: number): Promise<ModelVersionInfo> {
    return this.request("POST", `/api/models/${encodeURIComponent(name)}/${version}/promote`);
  }

  listScenarios(): Promise<{ scenarios: { ref: string; created_at: string }[] }> {
    return this.request("GET", "/api/scenarios");
  }

  putScenario(doc: unknown): Promise<{ ref: string }> {
    return this.request("POST", "/api/scenarios", doc);
  }

  submitJob(body: JobRequestBody): Promise<{ job_id: string }> {
    return this.request("POST", "/api/jobs", body);
  }

  jobStatus(jobId: string): Promise<JobStatus> {
    return this.request("GET", `/api/jobs/${encodeURIComponent(jobId)}`);
  }

  jobResult(jobId: string): Promise<ResultEnvelope> {
    return this.request("GET", `/api/jobs/${encodeURIComponent(jobId)}/result`);
  }

  async jobResultCsv(jobId: string): Promise<string> {
    const response = await this.rawRequest(
      "GET",
      `/api/jobs/${encodeURIComponent(jobId)}/result.csv`,
    );
    return response.text();
  }

  resultCsvUrl(jobId: string): string {
    return `${this.baseUrl}/api/jobs/${encodeURIComponent(jobId)}/result.csv`;
  }

  importBatch(batch: unknown): Promise<{ jobs: Record<string, string> }> {
    return this.request("POST", "/api/import", batch);
  }

  auditPage(offset = 0, limit = 50): Promise<AuditPage> {
    return this.request("GET", `/api/audit?offset=${offset}&limit=${limit}`);
  }

  auditVerify(): Promise<{ ok: boolean; first_bad_sequence: number | null }> {
    return this.request("GET", "/api/audit/verify");
  }
}
