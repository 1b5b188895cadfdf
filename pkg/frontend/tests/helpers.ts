/** Fixture loading and a scripted backend for session tests. Fixtures are
 * captured from the real server (see scripts/generate_fixtures.py) and the
 * backend suite pins them against live output, so tests here exercise true
 * wire shapes. */

import { readFileSync } from "node:fs";
import type { FetchLike } from "../src/api.js";
import type { JobState, ModelSchema, ResultEnvelope } from "../src/types.js";

function load(name: string): string {
  return readFileSync(new URL(`../fixtures/${name}`, import.meta.url), "utf-8");
}

export const FIXTURE_SCHEMA: ModelSchema = JSON.parse(load("schema.json"));
export const FIXTURE_RESULT: ResultEnvelope = JSON.parse(load("result.json"));
export const FIXTURE_CSV: string = load("result.csv");
export const VALIDATION_CASES: Record<
  string,
  { bindings: Record<string, unknown>; envelope: { code: string; details: { violations: unknown[] } } }
> = JSON.parse(load("validation_cases.json"));

function json(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

export interface MockBackend {
  fetch: FetchLike;
  requests: { method: string; url: string; body: unknown }[];
  submitted: unknown[];
}

/**
 * Scripted backend: serves the fixture catalog/schema/result, walks each
 * job through QUEUED -> RUNNING -> SUCCEEDED, and answers a submission
 * whose ltv is exactly 1.5 with the captured 422 envelope.
 */
export function makeBackend(): MockBackend {
  const requests: MockBackend["requests"] = [];
  const submitted: unknown[] = [];
  const polls = new Map<string, number>();

  const fetchImpl: FetchLike = async (url, init) => {
    const method = (init?.method ?? "GET").toUpperCase();
    const body = init?.body ? JSON.parse(init.body as string) : undefined;
    requests.push({ method, url, body });

    if (url.endsWith("/api/me")) {
      return json({ user_id: "eddie", name: "Eddie", role: "ENDUSER" });
    }
    if (url.endsWith("/api/models") && method === "GET") {
      return json({
        models: [{
          model_name: FIXTURE_SCHEMA.model_name, versions: 1,
          latest_version: 1, live_version: 1,
        }],
      });
    }
    if (url.endsWith("/schema")) {
      return json(FIXTURE_SCHEMA);
    }
    if (url.endsWith("/api/jobs") && method === "POST") {
      const bindings = (body as { input_bindings: Record<string, unknown> }).input_bindings;
      if (bindings["ltv"] === 1.5) {
        return json(VALIDATION_CASES["out_of_bounds"].envelope, 422);
      }
      submitted.push(body);
      const jobId = `job-${submitted.length}`;
      polls.set(jobId, 0);
      return json({ job_id: jobId }, 201);
    }
    const csvMatch = url.match(/\/api\/jobs\/([^/]+)\/result\.csv$/);
    if (csvMatch) {
      return new Response(FIXTURE_CSV, {
        status: 200,
        headers: { "Content-Type": "text/csv; charset=utf-8" },
      });
    }
    const resultMatch = url.match(/\/api\/jobs\/([^/]+)\/result$/);
    if (resultMatch) {
      return json({ ...FIXTURE_RESULT, job_id: resultMatch[1] });
    }
    const statusMatch = url.match(/\/api\/jobs\/([^/]+)$/);
    if (statusMatch) {
      const jobId = statusMatch[1];
      const count = polls.get(jobId) ?? 0;
      polls.set(jobId, count + 1);
      const state: JobState = count === 0 ? "QUEUED" : count === 1 ? "RUNNING" : "SUCCEEDED";
      return json({
        job_id: jobId, state,
        progress: state === "SUCCEEDED" ? 1 : state === "RUNNING" ? 0.5 : 0,
        enqueued_at: "t0", started_at: state === "QUEUED" ? null : "t1",
        ended_at: state === "SUCCEEDED" ? "t2" : null, failure_reason: null,
      });
    }
    if (url.includes("/api/audit/verify")) {
      return json({ ok: true, first_bad_sequence: null });
    }
    if (url.includes("/api/audit")) {
      return json({ records: [], total: 0, offset: 0 });
    }
    return json({ code: "NOT_FOUND", message: `no route ${url}`, details: {} }, 404);
  };

  return { fetch: fetchImpl, requests, submitted };
}

export const instantSleep = () => Promise.resolve();
