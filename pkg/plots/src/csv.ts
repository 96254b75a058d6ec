/**
 * Reader for the experiment CSV format.
 *
 * Every data file starts with a `schema_version` column; fields are plain
 * numbers, booleans, or bare strings (the writers never quote).
 */

export const SUPPORTED_SCHEMA = 1;

export interface Table {
  columns: string[];
  rows: Record<string, string>[];
}

export class SchemaError extends Error {}
export class ColumnError extends Error {}

export function parseCsv(text: string): Table {
  const lines = text.trim().split(/\r?\n/);
  if (lines.length === 0) throw new SchemaError("empty CSV");
  const columns = lines[0].split(",");
  if (columns[0] !== "schema_version") {
    throw new SchemaError("missing schema_version column (schema_version 1 expected)");
  }
  const rows = lines.slice(1).map((line) => {
    const parts = line.split(",");
    const row: Record<string, string> = {};
    columns.forEach((c, i) => (row[c] = parts[i] ?? ""));
    return row;
  });
  for (const row of rows) {
    const v = Number(row["schema_version"]);
    if (v !== SUPPORTED_SCHEMA) {
      throw new SchemaError(
        `unsupported schema_version ${row["schema_version"]} (supported: ${SUPPORTED_SCHEMA})`
      );
    }
  }
  return { columns, rows };
}

export function numericColumn(table: Table, name: string): number[] {
  if (!table.columns.includes(name)) {
    throw new ColumnError(`missing column '${name}'`);
  }
  return table.rows.map((r) => {
    const v = Number(r[name]);
    if (Number.isNaN(v)) throw new ColumnError(`non-numeric value in column '${name}'`);
    return v;
  });
}

export function stringColumn(table: Table, name: string): string[] {
  if (!table.columns.includes(name)) {
    throw new ColumnError(`missing column '${name}'`);
  }
  return table.rows.map((r) => r[name]);
}
