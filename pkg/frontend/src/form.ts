/**
 * Schema-driven job form: the controls are a pure function of the schema
 * response. Locked fields render read-only showing their central default
 * and are never submitted; everything else becomes a typed control with
 * its constraints surfaced as hints and native input attributes.
 */

import type { InputFieldSpec, ModelSchema, Value, Violation } from "./types.js";
import { violationsByField } from "./validation.js";

export interface FormControl {
  name: string;
  dtype: "Number" | "Text" | "Boolean";
  widget: "number" | "text" | "checkbox";
  required: boolean;
  locked: boolean;
  min: number | null;
  max: number | null;
  defaultValue: Value | null;
  hint: string;
}

export function buildFormModel(schema: ModelSchema): FormControl[] {
  return schema.inputs.map(controlFor);
}

function controlFor(field: InputFieldSpec): FormControl {
  const hints: string[] = [];
  if (field.locked) {
    hints.push(`locked to ${displayValue(field.default ?? null)}`);
  } else {
    if (field.required) hints.push("required");
    if (field.min !== undefined && field.max !== undefined) {
      hints.push(`between ${field.min} and ${field.max}`);
    } else if (field.min !== undefined) {
      hints.push(`at least ${field.min}`);
    } else if (field.max !== undefined) {
      hints.push(`at most ${field.max}`);
    }
    if (field.default !== undefined) hints.push(`default ${displayValue(field.default)}`);
  }
  return {
    name: field.name,
    dtype: field.dtype,
    widget: field.dtype === "Number" ? "number" : field.dtype === "Boolean" ? "checkbox" : "text",
    required: field.required,
    locked: field.locked,
    min: field.min ?? null,
    max: field.max ?? null,
    defaultValue: field.default ?? null,
    hint: hints.join(", "),
  };
}

export function displayValue(value: Value | null): string {
  if (value === null) return "";
  if (typeof value === "boolean") return value ? "TRUE" : "FALSE";
  return String(value);
}

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

/**
 * Render the form as HTML. Pure: output depends only on the arguments.
 * Violations (local or server 422) render inline under their fields.
 */
export function renderForm(
  controls: FormControl[],
  values: Record<string, Value>,
  violations: Violation[] = [],
): string {
  const byField = violationsByField(violations);
  const rows = controls.map((control) => renderControl(control, values, byField));
  const unknowns = (byField.get("") ?? []).concat(
    violations.filter((v) => !controls.some((c) => c.name === v.field) && v.field !== ""),
  );
  const extra = unknowns
    .map((v) => `<p class="violation">${escapeHtml(v.message)}</p>`)
    .join("");
  return `<form id="job-form" novalidate>${rows.join("")}${extra}</form>`;
}

function renderControl(
  control: FormControl,
  values: Record<string, Value>,
  byField: Map<string, Violation[]>,
): string {
  const name = escapeHtml(control.name);
  const current = values[control.name];
  const shown = current !== undefined ? current : control.defaultValue ?? "";
  const problems = (byField.get(control.name) ?? [])
    .map((v) => `<p class="violation" data-field="${name}">${escapeHtml(v.message)}</p>`)
    .join("");
  let input: string;
  if (control.locked) {
    input =
      `<input id="field-${name}" name="${name}" value="${escapeHtml(displayValue(control.defaultValue))}"` +
      ` readonly disabled class="locked">` + `<span class="badge">locked</span>`;
  } else if (control.widget === "checkbox") {
    const checked = shown === true ? " checked" : "";
    input = `<input id="field-${name}" name="${name}" type="checkbox"${checked}>`;
  } else {
    const type = control.widget === "number" ? "number" : "text";
    const minAttr = control.min !== null ? ` min="${control.min}"` : "";
    const maxAttr = control.max !== null ? ` max="${control.max}"` : "";
    const req = control.required ? " required" : "";
    const stepAttr = control.widget === "number" ? ` step="any"` : "";
    input =
      `<input id="field-${name}" name="${name}" type="${type}"` +
      `${minAttr}${maxAttr}${stepAttr}${req} value="${escapeHtml(displayValue(shown as Value))}">`;
  }
  const hint = control.hint ? `<small>${escapeHtml(control.hint)}</small>` : "";
  return (
    `<div class="field" data-field="${name}">` +
    `<label for="field-${name}">${name}</label>${input}${hint}${problems}</div>`
  );
}
