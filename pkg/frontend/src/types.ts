/** Wire types mirrored from the HTTP API. */

export type Dtype = "Number" | "Text" | "Boolean";
export type Value = number | string | boolean;

export interface InputFieldSpec {
  name: string;
  cell: string;
  dtype: Dtype;
  required: boolean;
  locked: boolean;
  min?: number;
  max?: number;
  default?: Value;
}

export interface OutputFieldSpec {
  name: string;
  cell: string;
  dtype: Dtype;
}

export interface ModelSchema {
  model_name: string;
  version: number;
  inputs: InputFieldSpec[];
  outputs: OutputFieldSpec[];
}

export interface ModelSummary {
  model_name: string;
  versions: number;
  latest_version: number;
  live_version: number | null;
}

export interface ModelVersionInfo {
  model_name: string;
  version: number;
  blob_hash: string;
  status: "DRAFT" | "TESTED" | "LIVE" | "RETIRED";
  author: string;
  created_at: string;
  parent_version: number | null;
}

export type ViolationKind =
  | "missing-required"
  | "type-mismatch"
  | "out-of-bounds"
  | "locked-override"
  | "unknown-name";

export interface Violation {
  field: string;
  kind: ViolationKind;
  message: string;
  value?: unknown;
  min?: number | null;
  max?: number | null;
}

export interface ErrorEnvelope {
  code: string;
  message: string;
  details: Record<string, unknown>;
}

export type JobState = "QUEUED" | "RUNNING" | "SUCCEEDED" | "FAILED" | "TIMED_OUT";
export const TERMINAL_STATES: readonly JobState[] = ["SUCCEEDED", "FAILED", "TIMED_OUT"];

export interface JobStatus {
  job_id: string;
  state: JobState;
  progress: number;
  enqueued_at: string;
  started_at: string | null;
  ended_at: string | null;
  failure_reason: string | null;
}

export interface RiskMetrics {
  iterations: number;
  defaults: number;
  pd: number;
  pd_stderr: number;
  lgd: number | null;
  expected_loss: number;
  loss_quantiles: Record<string, number>;
  min_loss: number;
  max_loss: number;
}

export interface MetricBindingsBody {
  loss_output: string;
  exposure: number;
  default_output?: string;
  quantile_levels?: number[];
}

export interface JobRequestBody {
  model_name: string;
  version?: "LIVE" | number;
  mode: "SINGLE" | "MONTE_CARLO";
  input_bindings: Record<string, Value>;
  seed?: number;
  iterations?: number;
  scenario_spec_ref?: string;
  metric_bindings?: MetricBindingsBody;
  iteration_table?: boolean;
}

export interface ResultCore {
  mode: "SINGLE" | "MONTE_CARLO";
  model_name: string;
  version: number;
  blob_hash: string;
  inputs: Record<string, Value>;
  outputs?: Record<string, unknown>;
  seed?: number;
  iterations?: number;
  scenario_spec_ref?: string;
  metrics?: RiskMetrics;
  iteration_table?: [number, boolean][] | null;
}

export interface ResultEnvelope {
  job_id: string;
  timestamp: string;
  result: ResultCore;
  result_hash: string;
}

export interface AuditRecord {
  sequence: number;
  timestamp: string;
  actor: string;
  action: string;
  subject: string;
  payload_hash: string;
  prev_hash: string;
  record_hash: string;
}

export interface AuditPage {
  records: AuditRecord[];
  total: number;
  offset: number;
}

export interface TestReportBody {
  model_name: string;
  version: number;
  passed: boolean;
  status_after: string;
  results: {
    test_id: string;
    mode: string;
    passed: boolean;
    comparisons: { name: string; expected: unknown; actual: unknown; ok: boolean }[];
    error?: string;
  }[];
}

/** Largest integer seed the UI will generate or echo exactly. */
export const MAX_SAFE_SEED = Number.MAX_SAFE_INTEGER;
