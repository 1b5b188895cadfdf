/**
 * Parser for the result CSV export: a `metric,value` header block, a blank
 * line, then `iteration,loss,default` rows. Quoting follows RFC 4180.
 */

export interface ParsedResultCsv {
  metrics: Record<string, string>;
  rows: { iteration: number; loss: number; defaulted: boolean }[];
}

export function splitCsvLine(line: string): string[] {
  const fields: string[] = [];
  let current = "";
  let quoted = false;
  let i = 0;
  while (i < line.length) {
    const ch = line[i];
    if (quoted) {
      if (ch === '"') {
        if (line[i + 1] === '"') {
          current += '"';
          i += 2;
          continue;
        }
        quoted = false;
        i += 1;
        continue;
      }
      current += ch;
      i += 1;
      continue;
    }
    if (ch === '"' && current === "") {
      quoted = true;
      i += 1;
      continue;
    }
    if (ch === ",") {
      fields.push(current);
      current = "";
      i += 1;
      continue;
    }
    current += ch;
    i += 1;
  }
  fields.push(current);
  return fields;
}

export function parseResultCsv(text: string): ParsedResultCsv {
  const lines = text.split(/\r\n|\n/);
  const metrics: Record<string, string> = {};
  const rows: ParsedResultCsv["rows"] = [];
  let section: "header" | "table" = "header";
  let sawTableHeader = false;
  for (const line of lines) {
    if (line === "") {
      if (section === "header") section = "table";
      continue;
    }
    const fields = splitCsvLine(line);
    if (section === "header") {
      if (fields[0] === "metric") continue; // column header
      metrics[fields[0]] = fields[1] ?? "";
      continue;
    }
    if (!sawTableHeader) {
      sawTableHeader = true; // "iteration,loss,default"
      continue;
    }
    rows.push({
      iteration: Number(fields[0]),
      loss: Number(fields[1]),
      defaulted: fields[2] === "true",
    });
  }
  return { metrics, rows };
}
