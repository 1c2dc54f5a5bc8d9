/**
 * Wire protocol: one JSON request on stdin, one JSON response on stdout.
 *
 * Request shape (produced by the vizrefine primary pipeline):
 *   {
 *     "method": "umap" | "pacmap",
 *     "params": { ... },            // method-specific hyperparameters
 *     "seed": 0,                    // integer PRNG seed
 *     "data": {
 *       "rows": n, "cols": d,
 *       "values": [v00, v01, ...]   // row-major flat array, or
 *       "path": "/tmp/x.csv"        // headerless numeric CSV for large data
 *     }
 *   }
 *
 * Success response: {"coordinates": [[x, y], ...]} with exactly `rows` pairs.
 * Failure response: {"error": "..."} plus a nonzero exit code.
 */

import * as fs from "fs";

export const SUPPORTED_METHODS = ["pacmap", "umap"] as const;
export type Method = (typeof SUPPORTED_METHODS)[number];

/** Request rejected by validation; the message goes into {"error": ...}. */
export class ProtocolError extends Error {}

export interface BridgeRequest {
  method: Method;
  params: Record<string, number>;
  seed: number;
  data: number[][]; // rows of length cols
}

function isPlainObject(v: unknown): v is Record<string, unknown> {
  return typeof v === "object" && v !== null && !Array.isArray(v);
}

function asFiniteNumber(v: unknown, what: string): number {
  if (typeof v !== "number" || !Number.isFinite(v)) {
    throw new ProtocolError(`${what} must be a finite number, got ${JSON.stringify(v)}`);
  }
  return v;
}

function asPositiveInt(v: unknown, what: string): number {
  const num = asFiniteNumber(v, what);
  if (!Number.isInteger(num) || num <= 0) {
    throw new ProtocolError(`${what} must be a positive integer, got ${JSON.stringify(v)}`);
  }
  return num;
}

function readCsvMatrix(path: string): number[][] {
  let text: string;
  try {
    text = fs.readFileSync(path, "utf8");
  } catch (err) {
    throw new ProtocolError(`cannot read data file ${path}: ${(err as Error).message}`);
  }
  const rows: number[][] = [];
  for (const line of text.split("\n")) {
    if (line.trim() === "") continue;
    const row = line.split(",").map((cell, c) => {
      const v = Number(cell);
      if (cell.trim() === "" || !Number.isFinite(v)) {
        throw new ProtocolError(
          `data file ${path}, row ${rows.length}, column ${c}: non-numeric value ${JSON.stringify(cell)}`
        );
      }
      return v;
    });
    rows.push(row);
  }
  return rows;
}

function parseData(raw: unknown): number[][] {
  if (!isPlainObject(raw)) {
    throw new ProtocolError("request field 'data' must be an object");
  }
  const rows = asPositiveInt(raw.rows, "data.rows");
  const cols = asPositiveInt(raw.cols, "data.cols");

  const hasValues = raw.values !== undefined;
  const hasPath = raw.path !== undefined;
  if (hasValues === hasPath) {
    throw new ProtocolError("data must carry exactly one of 'values' or 'path'");
  }

  if (hasValues) {
    const values = raw.values;
    if (!Array.isArray(values)) {
      throw new ProtocolError("data.values must be an array of numbers");
    }
    if (values.length !== rows * cols) {
      throw new ProtocolError(
        `shape mismatch: data declares ${rows} rows x ${cols} cols = ${rows * cols} values ` +
          `but ${values.length} inline values were sent`
      );
    }
    const matrix: number[][] = [];
    for (let i = 0; i < rows; i++) {
      const row = new Array<number>(cols);
      for (let j = 0; j < cols; j++) {
        row[j] = asFiniteNumber(values[i * cols + j], `data.values[${i * cols + j}]`);
      }
      matrix.push(row);
    }
    return matrix;
  }

  if (typeof raw.path !== "string") {
    throw new ProtocolError("data.path must be a string");
  }
  const matrix = readCsvMatrix(raw.path);
  if (matrix.length !== rows || matrix.some((r) => r.length !== cols)) {
    const got = matrix.length === 0 ? "0 rows" : `${matrix.length} rows x ${matrix[0].length} cols`;
    throw new ProtocolError(
      `shape mismatch: data declares ${rows} rows x ${cols} cols but file holds ${got}`
    );
  }
  return matrix;
}

function parseParams(raw: unknown): Record<string, number> {
  if (raw === undefined) return {};
  if (!isPlainObject(raw)) {
    throw new ProtocolError("request field 'params' must be an object");
  }
  const params: Record<string, number> = {};
  for (const [key, value] of Object.entries(raw)) {
    params[key] = asFiniteNumber(value, `params.${key}`);
  }
  return params;
}

/** Parse and validate one request document. */
export function parseRequest(text: string): BridgeRequest {
  let doc: unknown;
  try {
    doc = JSON.parse(text);
  } catch (err) {
    throw new ProtocolError(`malformed JSON request: ${(err as Error).message}`);
  }
  if (!isPlainObject(doc)) {
    throw new ProtocolError("request must be a JSON object");
  }
  const method = doc.method;
  if (typeof method !== "string" || !(SUPPORTED_METHODS as readonly string[]).includes(method)) {
    throw new ProtocolError(
      `unknown method ${JSON.stringify(method)}; supported methods: ${SUPPORTED_METHODS.join(", ")}`
    );
  }
  let seed = 0;
  if (doc.seed !== undefined) {
    const s = asFiniteNumber(doc.seed, "seed");
    if (!Number.isInteger(s)) {
      throw new ProtocolError(`seed must be an integer, got ${JSON.stringify(doc.seed)}`);
    }
    seed = s;
  }
  return {
    method: method as Method,
    params: parseParams(doc.params),
    seed,
    data: parseData(doc.data),
  };
}

export function successResponse(coordinates: number[][]): string {
  return JSON.stringify({ coordinates });
}

export function errorResponse(message: string): string {
  return JSON.stringify({ error: message });
}
