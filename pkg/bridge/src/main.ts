#!/usr/bin/env node
/**
 * dr-bridge: one embedding request per process invocation.
 *
 * Reads a single JSON request from stdin, writes exactly one JSON document
 * to stdout ({"coordinates": ...} on success, {"error": ...} on failure with
 * a nonzero exit code), and keeps all diagnostics on stderr.
 *
 * `--self-test` runs the built-in blob smoke test instead and exits 0/1.
 */

import * as fs from "fs";

import { mulberry32, runEmbedder, runUmap } from "./embedders";
import { errorResponse, parseRequest, ProtocolError, successResponse } from "./protocol";

function log(message: string): void {
  process.stderr.write(message + "\n");
}

/** Three well-separated Gaussian blobs, deterministic via mulberry32. */
export function blobData(
  n: number,
  d: number,
  clusters = 3,
  separation = 20,
  seed = 1
): { data: number[][]; labels: number[] } {
  const rand = mulberry32(seed);
  // Box-Muller transform of the uniform PRNG
  const gauss = () => {
    const u = Math.max(rand(), Number.MIN_VALUE);
    const v = rand();
    return Math.sqrt(-2 * Math.log(u)) * Math.cos(2 * Math.PI * v);
  };
  const data: number[][] = [];
  const labels: number[] = [];
  for (let i = 0; i < n; i++) {
    const c = i % clusters;
    const row = new Array<number>(d);
    for (let j = 0; j < d; j++) {
      const center = j === c % d ? separation * (1 + Math.floor(c / d)) : 0;
      row[j] = center + gauss();
    }
    data.push(row);
    labels.push(c);
  }
  return { data, labels };
}

/** Mean silhouette over all points, direct O(n^2) computation. */
export function silhouette(coords: number[][], labels: number[]): number {
  const n = coords.length;
  const dist = (a: number[], b: number[]) =>
    Math.hypot(...a.map((v, j) => v - b[j]));
  let total = 0;
  for (let i = 0; i < n; i++) {
    const byLabel = new Map<number, number[]>();
    for (let j = 0; j < n; j++) {
      if (j === i) continue;
      const bucket = byLabel.get(labels[j]) ?? [];
      bucket.push(dist(coords[i], coords[j]));
      byLabel.set(labels[j], bucket);
    }
    const own = byLabel.get(labels[i]);
    if (!own || own.length === 0) continue; // singleton contributes 0
    const a = own.reduce((s, v) => s + v, 0) / own.length;
    let b = Infinity;
    for (const [label, ds] of byLabel) {
      if (label === labels[i]) continue;
      b = Math.min(b, ds.reduce((s, v) => s + v, 0) / ds.length);
    }
    total += (b - a) / Math.max(a, b);
  }
  return total / n;
}

function selfTest(): number {
  log("self-test: embedding 60-point / 3-blob data with umap ...");
  const { data, labels } = blobData(60, 5);
  const params = { n_neighbors: 10, min_dist: 0.1 };

  const first = runUmap(data, params, 42);
  if (first.length !== 60 || first.some((r) => r.length !== 2 || !r.every(Number.isFinite))) {
    log("self-test FAILED: output is not a finite 60x2 matrix");
    return 1;
  }
  const again = runUmap(data, params, 42);
  if (JSON.stringify(first) !== JSON.stringify(again)) {
    log("self-test FAILED: same seed produced different coordinates");
    return 1;
  }
  const score = silhouette(first, labels);
  log(`self-test: silhouette of embedded blobs = ${score.toFixed(4)}`);
  if (score <= 0.5) {
    log("self-test FAILED: silhouette <= 0.5, blobs were not separated");
    return 1;
  }
  log("self-test OK");
  return 0;
}

function serveRequest(text: string): number {
  let response: string;
  try {
    const request = parseRequest(text);
    const coords = runEmbedder(request.method, request.data, request.params, request.seed);
    response = successResponse(coords);
  } catch (err) {
    if (err instanceof ProtocolError) {
      process.stdout.write(errorResponse(err.message) + "\n");
      log(`request rejected: ${err.message}`);
      return 1;
    }
    const message = `internal error: ${(err as Error).message}`;
    process.stdout.write(errorResponse(message) + "\n");
    log(message);
    return 1;
  }
  process.stdout.write(response + "\n");
  return 0;
}

export function main(argv: string[]): number {
  if (argv.includes("--self-test")) {
    return selfTest();
  }
  if (argv.length > 0) {
    log(`unknown arguments: ${argv.join(" ")} (only --self-test is accepted)`);
    return 2;
  }
  const text = fs.readFileSync(0, "utf8");
  return serveRequest(text);
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
