/**
 * Browser bootstrap: token entry, hash routing, DOM wiring around the
 * pure renderers and the session controller. Everything testable lives in
 * the other modules; this file is glue.
 */

import { ApiClient, ApiError } from "./api.js";
import { AppController, type MonteCarloParams } from "./controller.js";
import { buildFormModel, renderForm } from "./form.js";
import type { ModelSchema } from "./types.js";
import { MAX_SAFE_SEED } from "./types.js";
import {
  renderAudit,
  renderCatalog,
  renderError,
  renderResults,
  renderStatus,
  renderTestReport,
  renderVersions,
} from "./views.js";

const app = document.getElementById("app") as HTMLElement;
const nav = document.getElementById("nav") as HTMLElement;

function token(): string | null {
  return sessionStorage.getItem("esp_token");
}

function requireController(): AppController {
  const current = token();
  if (!current) {
    throw new Error("no token");
  }
  const api = new ApiClient("", current);
  const controller = new AppController(api, { pollIntervalMs: 500 });
  controller.onChange = () => render(controller);
  return controller;
}

let controller: AppController | null = null;
let role = "ENDUSER";

function render(c: AppController): void {
  if (c.screen === "catalog") {
    app.innerHTML = `<h2>models</h2>` + renderCatalog(c.models);
  } else if (c.screen === "form" && c.schema) {
    app.innerHTML = renderFormScreen(c, c.schema);
    wireForm(c);
  } else if (c.screen === "status" && c.job) {
    app.innerHTML = renderStatus(c.job);
  } else if (c.screen === "results" && c.result) {
    app.innerHTML = renderResults(c.result, c.histogram, c.csvUrl());
    wireResults(c);
  }
}

function renderFormScreen(c: AppController, schema: ModelSchema): string {
  const controls = buildFormModel(schema);
  const mc = c.mcParams;
  const mcBlock = `
    <details class="mc" ${mc ? "open" : ""}>
      <summary>Monte Carlo simulation</summary>
      <div class="field"><label for="mc-seed">seed</label>
        <input id="mc-seed" type="number" value="${mc ? mc.seed : randomSeed()}"></div>
      <div class="field"><label for="mc-iterations">iterations</label>
        <input id="mc-iterations" type="number" value="${mc ? mc.iterations : 10000}"></div>
      <div class="field"><label for="mc-scenario">scenario ref</label>
        <input id="mc-scenario" value="${mc ? mc.scenarioRef : ""}"></div>
      <div class="field"><label for="mc-loss">loss output</label>
        <input id="mc-loss" value="${mc ? mc.lossOutput : schema.outputs[0]?.name ?? "loss"}"></div>
      <div class="field"><label for="mc-exposure">exposure</label>
        <input id="mc-exposure" type="number" value="${mc ? mc.exposure : 1}"></div>
      <label><input id="mc-enabled" type="checkbox" ${mc ? "checked" : ""}> run as simulation</label>
    </details>`;
  return (
    `<h2>${schema.model_name} (v${schema.version})</h2>` +
    renderForm(controls, c.formValues, c.inlineViolations()) +
    mcBlock +
    `<button id="submit-job">submit job</button>`
  );
}

function randomSeed(): number {
  return Math.floor(Math.random() * MAX_SAFE_SEED);
}

function wireForm(c: AppController): void {
  for (const field of c.schema?.inputs ?? []) {
    const input = document.getElementById(`field-${field.name}`) as HTMLInputElement | null;
    if (!input || field.locked) continue;
    input.addEventListener("change", () => {
      c.setField(field.name, input.type === "checkbox" ? input.checked : input.value);
    });
  }
  document.getElementById("submit-job")?.addEventListener("click", async (event) => {
    event.preventDefault();
    const enabled = (document.getElementById("mc-enabled") as HTMLInputElement | null)?.checked;
    let mc: MonteCarloParams | null = null;
    if (enabled) {
      mc = {
        seed: Number((document.getElementById("mc-seed") as HTMLInputElement).value),
        iterations: Number((document.getElementById("mc-iterations") as HTMLInputElement).value),
        scenarioRef: (document.getElementById("mc-scenario") as HTMLInputElement).value,
        lossOutput: (document.getElementById("mc-loss") as HTMLInputElement).value,
        exposure: Number((document.getElementById("mc-exposure") as HTMLInputElement).value),
      };
    }
    await guarded(() => c.submit(mc));
  });
}

function wireResults(c: AppController): void {
  document.getElementById("rerun-same")?.addEventListener("click", () => {
    void guarded(() => c.rerunSameSeed());
  });
  document.getElementById("rerun-new")?.addEventListener("click", () => {
    c.rerunEdited();
  });
}

async function guarded<T>(action: () => Promise<T>): Promise<T | undefined> {
  try {
    return await action();
  } catch (error) {
    if (error instanceof ApiError) {
      if (error.status === 401) {
        sessionStorage.removeItem("esp_token");
        showTokenEntry("token rejected, enter a valid one");
        return undefined;
      }
      app.insertAdjacentHTML(
        "afterbegin",
        renderError(error.envelope.code, error.envelope.message),
      );
      return undefined;
    }
    throw error;
  }
}

async function route(): Promise<void> {
  if (!token()) {
    showTokenEntry();
    return;
  }
  if (!controller) {
    controller = requireController();
    const api = new ApiClient("", token() as string);
    try {
      role = (await api.me()).role;
    } catch {
      sessionStorage.removeItem("esp_token");
      showTokenEntry("token rejected, enter a valid one");
      return;
    }
    renderNav();
  }
  const c = controller;
  const hash = location.hash || "#/models";
  const runMatch = hash.match(/^#\/models\/([^/]+)\/run$/);
  const versionsMatch = hash.match(/^#\/models\/([^/]+)\/versions$/);
  await guarded(async () => {
    if (runMatch) {
      await c.openJobForm(decodeURIComponent(runMatch[1]));
    } else if (versionsMatch) {
      const { versions } = await c.listVersions(decodeURIComponent(versionsMatch[1]));
      app.innerHTML = renderVersions(versions);
      wireSuperuser(c, decodeURIComponent(versionsMatch[1]));
    } else if (hash === "#/audit") {
      const page = await c.openAudit();
      app.innerHTML = renderAudit(page, null);
      document.getElementById("verify-audit")?.addEventListener("click", async () => {
        const verdict = await c.verifyAudit();
        app.innerHTML = renderAudit(page, verdict);
      });
    } else if (hash === "#/upload") {
      renderUpload(c);
    } else {
      await c.openCatalog();
    }
    return undefined;
  });
}

function wireSuperuser(c: AppController, name: string): void {
  if (role !== "SUPERUSER") return;
  app.insertAdjacentHTML(
    "beforeend",
    `<div class="super-actions">
       <label>version <input id="sv" type="number" value="1" style="width:5em"></label>
       <button id="run-tests">run tests</button>
       <button id="promote">promote to LIVE</button>
     </div><div id="super-output"></div>`,
  );
  const versionOf = () => Number((document.getElementById("sv") as HTMLInputElement).value);
  document.getElementById("run-tests")?.addEventListener("click", async () => {
    await guarded(async () => {
      const report = await c.runTests(name, versionOf());
      (document.getElementById("super-output") as HTMLElement).innerHTML =
        renderTestReport(report);
    });
  });
  document.getElementById("promote")?.addEventListener("click", async () => {
    await guarded(async () => {
      await c.promote(name, versionOf());
      location.hash = `#/models/${encodeURIComponent(name)}/versions`;
      await route();
    });
  });
}

function renderUpload(c: AppController): void {
  app.innerHTML = `
    <h2>upload workbook document</h2>
    <textarea id="doc" rows="16" cols="80" placeholder='{"name": ..., "sheets": [...]}'></textarea>
    <div><button id="do-upload">upload</button></div>
    <div id="upload-result"></div>`;
  document.getElementById("do-upload")?.addEventListener("click", async () => {
    await guarded(async () => {
      const doc = JSON.parse((document.getElementById("doc") as HTMLTextAreaElement).value);
      const version = await c.uploadModel(doc);
      (document.getElementById("upload-result") as HTMLElement).innerHTML =
        `<p>stored ${version.model_name} v${version.version} (${version.status})</p>`;
    });
  });
}

function renderNav(): void {
  const links = [`<a href="#/models">models</a>`];
  if (role === "SUPERUSER") {
    links.push(`<a href="#/upload">upload</a>`);
  }
  if (role === "SUPERUSER" || role === "ADMIN") {
    links.push(`<a href="#/audit">audit</a>`);
  }
  links.push(`<a href="#" id="logout">sign out</a>`);
  nav.innerHTML = links.join(" · ");
  document.getElementById("logout")?.addEventListener("click", () => {
    sessionStorage.removeItem("esp_token");
    controller = null;
    location.hash = "";
    showTokenEntry();
  });
}

function showTokenEntry(message = ""): void {
  nav.innerHTML = "";
  app.innerHTML = `
    <h2>sign in</h2>
    ${message ? `<p class="failure">${message}</p>` : ""}
    <p><input id="token-input" type="password" placeholder="API token">
    <button id="token-save">continue</button></p>`;
  document.getElementById("token-save")?.addEventListener("click", () => {
    const value = (document.getElementById("token-input") as HTMLInputElement).value;
    if (value) {
      sessionStorage.setItem("esp_token", value);
      controller = null;
      void route();
    }
  });
}

window.addEventListener("hashchange", () => void route());
void route();
