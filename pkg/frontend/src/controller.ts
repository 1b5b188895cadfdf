/**
 * Session controller: the screen flow (catalog -> form -> status ->
 * results -> what-if loop, plus superuser and admin screens) as a plain
 * state machine over the API client. All network traffic goes through the
 * injected client, so tests can drive whole sessions and inspect the
 * request log.
 */

import { ApiClient, ApiError } from "./api.js";
import { parseResultCsv, type ParsedResultCsv } from "./csv.js";
import { buildHistogram, type Histogram } from "./histogram.js";
import { pollJob } from "./poll.js";
import type {
  ErrorEnvelope,
  JobRequestBody,
  JobStatus,
  ModelSchema,
  ModelSummary,
  ResultEnvelope,
  Value,
  Violation,
} from "./types.js";
import { MAX_SAFE_SEED } from "./types.js";
import { validateBindings } from "./validation.js";

export interface MonteCarloParams {
  seed: number;
  iterations: number;
  scenarioRef: string;
  lossOutput: string;
  exposure: number;
  defaultOutput?: string;
  quantileLevels?: number[];
}

export type Screen =
  | "catalog"
  | "form"
  | "status"
  | "results"
  | "audit"
  | "superuser";

export interface ControllerOptions {
  pollIntervalMs?: number;
  sleep?: (ms: number) => Promise<void>;
  randomSeed?: () => number;
}

export class AppController {
  screen: Screen = "catalog";
  models: ModelSummary[] = [];
  schema: ModelSchema | null = null;
  formValues: Record<string, Value> = {};
  localViolations: Violation[] = [];
  serverViolations: Violation[] = [];
  mcParams: MonteCarloParams | null = null;
  job: JobStatus | null = null;
  result: ResultEnvelope | null = null;
  csv: ParsedResultCsv | null = null;
  histogram: Histogram | null = null;
  lastRequest: JobRequestBody | null = null;
  error: ErrorEnvelope | null = null;
  onChange: (() => void) | null = null;

  constructor(
    private readonly api: ApiClient,
    private readonly options: ControllerOptions = {},
  ) {}

  private changed(): void {
    this.onChange?.();
  }

  async openCatalog(): Promise<void> {
    this.models = (await this.api.listModels()).models;
    this.screen = "catalog";
    this.error = null;
    this.changed();
  }

  async openJobForm(modelName: string): Promise<void> {
    this.schema = await this.api.modelSchema(modelName);
    this.formValues = {};
    for (const field of this.schema.inputs) {
      // pre-fill non-locked defaults so the submitted form is explicit;
      // locked fields are display-only and never submitted
      if (!field.locked && field.default !== undefined) {
        this.formValues[field.name] = field.default;
      }
    }
    this.localViolations = [];
    this.serverViolations = [];
    this.screen = "form";
    this.error = null;
    this.changed();
  }

  /** Convert a raw widget value to the field's wire type; empty clears. */
  setField(name: string, raw: string | boolean): void {
    const field = this.schema?.inputs.find((f) => f.name === name);
    if (!field || field.locked) {
      return;
    }
    if (typeof raw === "boolean") {
      this.formValues[name] = raw;
    } else if (raw === "") {
      delete this.formValues[name];
    } else if (field.dtype === "Number") {
      const parsed = Number(raw);
      // unparsable text stays a string so validation flags the mismatch
      this.formValues[name] = Number.isNaN(parsed) ? raw : parsed;
    } else if (field.dtype === "Boolean") {
      this.formValues[name] = raw === "true" || raw === "TRUE";
    } else {
      this.formValues[name] = raw;
    }
    this.validateLocal();
    this.changed();
  }

  bindings(): Record<string, Value> {
    return { ...this.formValues };
  }

  validateLocal(): Violation[] {
    this.localViolations = this.schema
      ? validateBindings(this.schema.inputs, this.bindings())
      : [];
    return this.localViolations;
  }

  /** All violations to display inline: the server's once it has spoken,
   * the local mirror before that. */
  inlineViolations(): Violation[] {
    return this.serverViolations.length > 0 ? this.serverViolations : this.localViolations;
  }

  buildRequest(mc: MonteCarloParams | null): JobRequestBody {
    if (!this.schema) {
      throw new Error("no model open");
    }
    const body: JobRequestBody = {
      model_name: this.schema.model_name,
      mode: mc ? "MONTE_CARLO" : "SINGLE",
      input_bindings: this.bindings(),
    };
    if (mc) {
      body.seed = mc.seed;
      body.iterations = mc.iterations;
      body.scenario_spec_ref = mc.scenarioRef;
      body.metric_bindings = {
        loss_output: mc.lossOutput,
        exposure: mc.exposure,
        ...(mc.defaultOutput ? { default_output: mc.defaultOutput } : {}),
        ...(mc.quantileLevels ? { quantile_levels: mc.quantileLevels } : {}),
      };
    }
    return body;
  }

  /**
   * Submit the current form. Client validation runs first but does not
   * block submission (the server is authoritative); a server 422 lands in
   * serverViolations for the same inline rendering.
   */
  async submit(mc: MonteCarloParams | null = null): Promise<JobStatus | null> {
    this.mcParams = mc;
    const request = this.buildRequest(mc);
    this.validateLocal();
    this.serverViolations = [];
    let jobId: string;
    try {
      jobId = (await this.api.submitJob(request)).job_id;
    } catch (error) {
      if (error instanceof ApiError && error.envelope.code === "VALIDATION") {
        const details = error.envelope.details as { violations?: Violation[] };
        this.serverViolations = details.violations ?? [];
        this.screen = "form";
        this.changed();
        return null;
      }
      throw error;
    }
    this.lastRequest = request;
    this.screen = "status";
    this.changed();
    const terminal = await pollJob(() => this.api.jobStatus(jobId), {
      intervalMs: this.options.pollIntervalMs ?? 500,
      sleep: this.options.sleep,
      onUpdate: (status) => {
        this.job = status;
        this.changed();
      },
    });
    this.job = terminal;
    if (terminal.state === "SUCCEEDED") {
      await this.loadResults(jobId);
    } else {
      this.screen = "status";
      this.changed();
    }
    return terminal;
  }

  private async loadResults(jobId: string): Promise<void> {
    this.result = await this.api.jobResult(jobId);
    if (this.result.result.mode === "MONTE_CARLO") {
      const text = await this.api.jobResultCsv(jobId);
      this.csv = parseResultCsv(text);
      this.histogram = buildHistogram(this.csv.rows.map((row) => row.loss));
    } else {
      this.csv = null;
      this.histogram = null;
    }
    this.screen = "results";
    this.changed();
  }

  csvUrl(): string {
    return this.result ? this.api.resultCsvUrl(this.result.job_id) : "";
  }

  /** What-if loop: same inputs, same seed (exact replay). */
  async rerunSameSeed(): Promise<JobStatus | null> {
    if (!this.lastRequest) {
      throw new Error("nothing to re-run");
    }
    return this.submit(this.mcParams);
  }

  /** What-if loop: back to the form with prior values kept; a fresh seed
   * is drawn for the next submission. */
  rerunEdited(): MonteCarloParams | null {
    this.screen = "form";
    this.serverViolations = [];
    if (this.mcParams) {
      const draw = this.options.randomSeed ?? (() => Math.floor(Math.random() * MAX_SAFE_SEED));
      this.mcParams = { ...this.mcParams, seed: draw() };
    }
    this.changed();
    return this.mcParams;
  }

  // -- superuser / admin -------------------------------------------------

  async uploadModel(doc: unknown) {
    return this.api.uploadModel(doc);
  }

  async attachTests(name: string, version: number, tests: unknown[]) {
    return this.api.attachTests(name, version, tests);
  }

  async runTests(name: string, version: number) {
    return this.api.runTests(name, version);
  }

  async promote(name: string, version: number) {
    return this.api.promote(name, version);
  }

  async listVersions(name: string) {
    return this.api.listVersions(name);
  }

  async openAudit(offset = 0) {
    const page = await this.api.auditPage(offset);
    this.screen = "audit";
    this.changed();
    return page;
  }

  async verifyAudit() {
    return this.api.auditVerify();
  }
}
