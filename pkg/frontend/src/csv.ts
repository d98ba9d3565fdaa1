import { readFileSync } from "node:fs";

/** Raised when a CSV does not carry the expected schema or columns. */
export class SchemaError extends Error {}

export interface CsvTable {
  schema: string;
  header: string[];
  rows: string[][];
}

/**
 * Read a harness CSV: a `# schema: <name>` line, a header row, data rows.
 * The schema version is verified before any column is touched.
 */
export function readVersionedCsv(path: string, expectedSchema: string): CsvTable {
  const text = readFileSync(path, "utf-8");
  const lines = text.split(/\r?\n/).filter((l) => l.length > 0);
  if (lines.length === 0) {
    throw new SchemaError(`empty CSV: ${path}`);
  }
  const schemaLine = lines[0];
  const match = /^# schema: (.+)$/.exec(schemaLine);
  if (!match || match[1] !== expectedSchema) {
    throw new SchemaError(
      `schema mismatch in ${path}: expected "${expectedSchema}", found "${schemaLine}"`
    );
  }
  if (lines.length < 2) {
    throw new SchemaError(`CSV has no header row: ${path}`);
  }
  const header = lines[1].split(",");
  const rows = lines.slice(2).map((l) => l.split(","));
  if (rows.length === 0) {
    throw new SchemaError(`CSV has no data rows: ${path}`);
  }
  return { schema: expectedSchema, header, rows };
}

/** Extract a numeric column by name; a missing name is a schema error. */
export function numericColumn(table: CsvTable, name: string): number[] {
  const idx = table.header.indexOf(name);
  if (idx < 0) {
    throw new SchemaError(`missing column "${name}" (have: ${table.header.join(", ")})`);
  }
  return table.rows.map((row) => {
    const cell = row[idx] ?? "";
    return cell === "" ? NaN : Number(cell);
  });
}
