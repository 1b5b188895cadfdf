/**
 * Client-side mirror of the server's field-wise input validator.
 *
 * Rules derive solely from the schema response, and the output matches the
 * server's 422 envelope violations item for item (same fields, kinds,
 * ordering, messages, and structured extras), which the fixture-driven
 * parity tests enforce. The server remains the source of truth; this is
 * advisory pre-screening for inline display.
 */

import type { InputFieldSpec, Value, Violation } from "./types.js";

/** Render a float the way the backend does in messages (integral values
 * carry a trailing .0, exponents are zero-padded to two digits). */
export function pyFloatRepr(x: number): string {
  if (Number.isInteger(x) && Math.abs(x) < 1e16) {
    return Object.is(x, -0) ? "-0.0" : `${x}.0`;
  }
  const text = String(x);
  const match = text.match(/^(-?[0-9.]+)e([+-])([0-9]+)$/);
  if (match) {
    return `${match[1]}e${match[2]}${match[3].padStart(2, "0")}`;
  }
  return text;
}

function bound(x: number | undefined): string {
  return x === undefined ? "unbounded" : pyFloatRepr(x);
}

function matchesDtype(value: Value, dtype: string): boolean {
  if (dtype === "Number") return typeof value === "number";
  if (dtype === "Text") return typeof value === "string";
  return typeof value === "boolean";
}

export function validateBindings(
  schema: InputFieldSpec[],
  bindings: Record<string, Value>,
): Violation[] {
  const violations: Violation[] = [];
  const names = new Set(schema.map((field) => field.name));

  for (const name of Object.keys(bindings).sort()) {
    if (!names.has(name)) {
      violations.push({
        field: name,
        kind: "unknown-name",
        message: `no input field named '${name}'`,
      });
    }
  }

  for (const field of schema) {
    const isBound = Object.prototype.hasOwnProperty.call(bindings, field.name);
    if (field.locked) {
      if (isBound) {
        violations.push({
          field: field.name,
          kind: "locked-override",
          message: `'${field.name}' is locked to its central default`,
          value: bindings[field.name],
        });
      }
      continue;
    }
    if (!isBound) {
      if (field.required) {
        violations.push({
          field: field.name,
          kind: "missing-required",
          message: `'${field.name}' is required`,
        });
      }
      continue;
    }
    const value = bindings[field.name];
    if (!matchesDtype(value, field.dtype)) {
      violations.push({
        field: field.name,
        kind: "type-mismatch",
        message: `'${field.name}' expects ${field.dtype}`,
        value,
      });
      continue;
    }
    if (field.dtype === "Number") {
      const x = value as number;
      const below = field.min !== undefined && x < field.min;
      const above = field.max !== undefined && x > field.max;
      if (below || above) {
        violations.push({
          field: field.name,
          kind: "out-of-bounds",
          message: `'${field.name}' must be in [${bound(field.min)}, ${bound(field.max)}]`,
          value: x,
          min: field.min ?? null,
          max: field.max ?? null,
        });
      }
    }
  }
  return violations;
}

/** Group violations by field name for inline rendering. */
export function violationsByField(violations: Violation[]): Map<string, Violation[]> {
  const grouped = new Map<string, Violation[]>();
  for (const violation of violations) {
    const bucket = grouped.get(violation.field) ?? [];
    bucket.push(violation);
    grouped.set(violation.field, bucket);
  }
  return grouped;
}
