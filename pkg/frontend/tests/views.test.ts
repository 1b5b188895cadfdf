import { describe, expect, it } from "vitest";
import { renderAudit, renderCatalog, renderStatus, renderTestReport, renderVersions } from "../src/views.js";
import type { ModelVersionInfo, TestReportBody } from "../src/types.js";

function version(v: number, status: ModelVersionInfo["status"]): ModelVersionInfo {
  return {
    model_name: "m", version: v, blob_hash: "ab".repeat(32), status,
    author: "meg", created_at: "2026-08-10T00:00:00Z", parent_version: v > 1 ? v - 1 : null,
  };
}

describe("superuser and status views", () => {
  it("shows the single-LIVE indicator", () => {
    const html = renderVersions([version(1, "RETIRED"), version(2, "LIVE"), version(3, "DRAFT")]);
    expect(html).toContain("exactly one LIVE version");
    expect(renderVersions([version(1, "DRAFT")])).toContain("no LIVE version");
    expect(
      renderVersions([version(1, "LIVE"), version(2, "LIVE")]),
    ).toContain("INVARIANT BROKEN");
  });

  it("renders a test report with failing comparisons opened", () => {
    const report: TestReportBody = {
      model_name: "m", version: 2, passed: false, status_after: "DRAFT",
      results: [
        { test_id: "t1", mode: "PLAIN", passed: true,
          comparisons: [{ name: "y", expected: 6, actual: 6, ok: true }] },
        { test_id: "t2", mode: "PLAIN", passed: false,
          comparisons: [{ name: "y", expected: 6.1, actual: 6, ok: false }] },
      ],
    };
    const html = renderTestReport(report);
    expect(html).toContain("battery FAILED");
    expect(html).toContain("t2 (PLAIN): FAIL");
    expect(html).toContain("expected 6.1, got 6");
  });

  it("renders catalog run links only for LIVE models", () => {
    const html = renderCatalog([
      { model_name: "a", versions: 2, latest_version: 2, live_version: 2 },
      { model_name: "b", versions: 1, latest_version: 1, live_version: null },
    ]);
    expect(html).toContain("#/models/a/run");
    expect(html).not.toContain("#/models/b/run");
  });

  it("renders job progress and failure reasons", () => {
    const html = renderStatus({
      job_id: "deadbeef", state: "TIMED_OUT", progress: 0.37,
      enqueued_at: "t0", started_at: "t1", ended_at: "t2",
      failure_reason: "step budget exceeded",
    });
    expect(html).toContain('data-state="TIMED_OUT"');
    expect(html).toContain('value="37"');
    expect(html).toContain("step budget exceeded");
  });

  it("renders audit pages with the verify verdict", () => {
    const page = {
      records: [{
        sequence: 1, timestamp: "t", actor: "meg", action: "UPLOAD",
        subject: "m/1", payload_hash: "0".repeat(64),
        prev_hash: "0".repeat(64), record_hash: "f".repeat(64),
      }],
      total: 1, offset: 0,
    };
    expect(renderAudit(page, { ok: true, first_bad_sequence: null })).toContain("chain intact");
    expect(renderAudit(page, { ok: false, first_bad_sequence: 4 })).toContain("BROKEN at sequence 4");
  });
});
