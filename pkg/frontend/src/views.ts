/**
 * Pure HTML renderers for every screen. No DOM access: each takes state
 * and returns a string, which keeps them snapshot-testable.
 */

import { escapeHtml } from "./form.js";
import { renderHistogramSvg, type Histogram } from "./histogram.js";
import type {
  AuditPage,
  JobStatus,
  ModelSummary,
  ModelVersionInfo,
  ResultEnvelope,
  RiskMetrics,
  TestReportBody,
} from "./types.js";

export function renderCatalog(models: ModelSummary[]): string {
  if (models.length === 0) {
    return `<p class="empty">No models yet.</p>`;
  }
  const rows = models
    .map((m) => {
      const live =
        m.live_version !== null
          ? `<span class="badge live">LIVE v${m.live_version}</span>`
          : `<span class="badge">no live version</span>`;
      const run =
        m.live_version !== null
          ? `<a href="#/models/${encodeURIComponent(m.model_name)}/run">run</a>`
          : "";
      return (
        `<tr><td>${escapeHtml(m.model_name)}</td><td>${m.versions}</td>` +
        `<td>${live}</td><td>${run}</td></tr>`
      );
    })
    .join("");
  return (
    `<table class="catalog"><thead><tr><th>model</th><th>versions</th>` +
    `<th>status</th><th></th></tr></thead><tbody>${rows}</tbody></table>`
  );
}

export function renderVersions(versions: ModelVersionInfo[]): string {
  const rows = versions
    .map(
      (v) =>
        `<tr class="${v.status === "LIVE" ? "live-row" : ""}">` +
        `<td>v${v.version}</td><td>${v.status}</td><td>${escapeHtml(v.author)}</td>` +
        `<td>${escapeHtml(v.created_at)}</td>` +
        `<td><code>${escapeHtml(v.blob_hash.slice(0, 12))}</code></td></tr>`,
    )
    .join("");
  const liveCount = versions.filter((v) => v.status === "LIVE").length;
  return (
    `<p class="single-live">${liveCount === 1 ? "exactly one LIVE version" : liveCount === 0 ? "no LIVE version" : "INVARIANT BROKEN: multiple LIVE versions"}</p>` +
    `<table class="versions"><thead><tr><th>version</th><th>status</th>` +
    `<th>author</th><th>created</th><th>content</th></tr></thead><tbody>${rows}</tbody></table>`
  );
}

export function renderStatus(status: JobStatus): string {
  const percent = Math.round(status.progress * 100);
  const failure = status.failure_reason
    ? `<p class="failure">${escapeHtml(status.failure_reason)}</p>`
    : "";
  return (
    `<div class="job-status" data-state="${status.state}">` +
    `<h3>job <code>${escapeHtml(status.job_id)}</code></h3>` +
    `<p class="state">${status.state}</p>` +
    `<progress max="100" value="${percent}"></progress><span>${percent}%</span>` +
    failure +
    `</div>`
  );
}

function formatNumber(x: number | null): string {
  if (x === null) return "n/a";
  if (Number.isInteger(x)) return String(x);
  return x.toPrecision(6);
}

export function renderMetricsTable(metrics: RiskMetrics): string {
  const quantiles = Object.keys(metrics.loss_quantiles)
    .sort((a, b) => Number(a) - Number(b))
    .map(
      (level) =>
        `<tr><td>loss quantile ${escapeHtml(level)}</td>` +
        `<td>${formatNumber(metrics.loss_quantiles[level])}</td></tr>`,
    )
    .join("");
  return (
    `<table class="metrics"><tbody>` +
    `<tr><td>iterations</td><td>${metrics.iterations}</td></tr>` +
    `<tr><td>defaults</td><td>${metrics.defaults}</td></tr>` +
    `<tr><td>pd</td><td id="metric-pd">${formatNumber(metrics.pd)}</td></tr>` +
    `<tr><td>pd stderr</td><td>${formatNumber(metrics.pd_stderr)}</td></tr>` +
    `<tr><td>lgd</td><td>${formatNumber(metrics.lgd)}</td></tr>` +
    `<tr><td>expected loss</td><td>${formatNumber(metrics.expected_loss)}</td></tr>` +
    quantiles +
    `<tr><td>min loss</td><td>${formatNumber(metrics.min_loss)}</td></tr>` +
    `<tr><td>max loss</td><td>${formatNumber(metrics.max_loss)}</td></tr>` +
    `</tbody></table>`
  );
}

export function renderResults(
  envelope: ResultEnvelope,
  histogram: Histogram | null,
  csvUrl: string,
): string {
  const core = envelope.result;
  const seed = core.seed !== undefined ? core.seed : null;
  const seedBlock =
    seed !== null
      ? `<p class="seed">seed <code id="seed-display">${seed}</code> ` +
        `<button id="rerun-same">re-run with same seed</button> ` +
        `<button id="rerun-new">re-run with new seed / edited inputs</button></p>`
      : `<p class="seed"><button id="rerun-new">re-run with edited inputs</button></p>`;
  let body: string;
  if (core.mode === "MONTE_CARLO" && core.metrics) {
    const chart = histogram
      ? `<figure>${renderHistogramSvg(histogram)}<figcaption>loss distribution</figcaption></figure>`
      : "";
    body =
      renderMetricsTable(core.metrics) +
      chart +
      `<p><a id="csv-link" href="${escapeHtml(csvUrl)}" download>download per-iteration CSV</a></p>`;
  } else {
    const rows = Object.entries(core.outputs ?? {})
      .map(
        ([name, value]) =>
          `<tr><td>${escapeHtml(name)}</td><td>${escapeHtml(JSON.stringify(value))}</td></tr>`,
      )
      .join("");
    body = `<table class="outputs"><tbody>${rows}</tbody></table>`;
  }
  return (
    `<div class="results">` +
    `<h3>results for <code>${escapeHtml(envelope.job_id)}</code></h3>` +
    `<p class="hash">result hash <code>${escapeHtml(envelope.result_hash.slice(0, 16))}</code></p>` +
    seedBlock +
    body +
    `</div>`
  );
}

export function renderAudit(
  page: AuditPage,
  verdict: { ok: boolean; first_bad_sequence: number | null } | null,
): string {
  const verdictHtml = verdict
    ? verdict.ok
      ? `<p class="verify ok">chain intact</p>`
      : `<p class="verify bad">chain BROKEN at sequence ${verdict.first_bad_sequence}</p>`
    : "";
  const rows = page.records
    .map(
      (r) =>
        `<tr><td>${r.sequence}</td><td>${escapeHtml(r.timestamp)}</td>` +
        `<td>${escapeHtml(r.actor)}</td><td>${escapeHtml(r.action)}</td>` +
        `<td>${escapeHtml(r.subject)}</td>` +
        `<td><code>${escapeHtml(r.record_hash.slice(0, 12))}</code></td></tr>`,
    )
    .join("");
  return (
    `<div class="audit"><p>${page.total} records</p>` +
    `<button id="verify-audit">verify chain</button>${verdictHtml}` +
    `<table><thead><tr><th>#</th><th>time</th><th>actor</th><th>action</th>` +
    `<th>subject</th><th>hash</th></tr></thead><tbody>${rows}</tbody></table></div>`
  );
}

export function renderTestReport(report: TestReportBody): string {
  const rows = report.results
    .map((outcome) => {
      const comparisons = outcome.comparisons
        .map(
          (c) =>
            `<li class="${c.ok ? "ok" : "bad"}">${escapeHtml(c.name)}: expected ` +
            `${escapeHtml(JSON.stringify(c.expected))}, got ${escapeHtml(JSON.stringify(c.actual))}</li>`,
        )
        .join("");
      const error = outcome.error ? `<p class="failure">${escapeHtml(outcome.error)}</p>` : "";
      return (
        `<details ${outcome.passed ? "" : "open"}><summary>${escapeHtml(outcome.test_id)} ` +
        `(${outcome.mode}): ${outcome.passed ? "pass" : "FAIL"}</summary>` +
        `<ul>${comparisons}</ul>${error}</details>`
      );
    })
    .join("");
  return (
    `<div class="test-report" data-passed="${report.passed}">` +
    `<h3>${escapeHtml(report.model_name)} v${report.version}: ` +
    `${report.passed ? "all tests passed" : "battery FAILED"} ` +
    `(status ${escapeHtml(report.status_after)})</h3>${rows}</div>`
  );
}

export function renderError(code: string, message: string): string {
  return `<div class="error"><strong>${escapeHtml(code)}</strong> ${escapeHtml(message)}</div>`;
}
