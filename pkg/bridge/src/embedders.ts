/** Embedding back ends behind the wire protocol. */

import { ProtocolError } from "./protocol";

/**
 * Deterministic 32-bit PRNG (mulberry32). umap-js accepts a custom random
 * source, so a fixed seed reproduces coordinates exactly on any platform
 * running the same bridge version.
 */
export function mulberry32(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function checkAllowedParams(
  method: string,
  params: Record<string, number>,
  allowed: string[]
): void {
  for (const key of Object.keys(params)) {
    if (!allowed.includes(key)) {
      throw new ProtocolError(
        `unknown ${method} parameter '${key}'; supported: ${allowed.join(", ")}`
      );
    }
  }
}

function neighborCount(params: Record<string, number>, rows: number, fallback: number): number {
  const k = params.n_neighbors ?? fallback;
  if (!Number.isInteger(k) || k < 2) {
    throw new ProtocolError(`n_neighbors must be an integer >= 2, got ${k}`);
  }
  if (k >= rows) {
    throw new ProtocolError(`n_neighbors=${k} needs more data points than the ${rows} sent`);
  }
  return k;
}

export function runUmap(data: number[][], params: Record<string, number>, seed: number): number[][] {
  checkAllowedParams("umap", params, ["n_neighbors", "min_dist"]);
  const nNeighbors = neighborCount(params, data.length, 15);
  const minDist = params.min_dist ?? 0.1;
  if (minDist < 0 || minDist >= 1) {
    throw new ProtocolError(`min_dist must lie in [0, 1), got ${minDist}`);
  }

  // Imported lazily so a broken/missing library surfaces as a structured
  // error naming the dependency instead of a module-load crash.
  let UMAP: new (options: object) => { fit(data: number[][]): number[][] };
  try {
    UMAP = require("umap-js").UMAP;
  } catch (err) {
    throw new ProtocolError(
      `umap backend unavailable: the 'umap-js' dependency failed to load ` +
        `(${(err as Error).message}); run 'npm install' in the bridge directory`
    );
  }

  const umap = new UMAP({
    nComponents: 2,
    nNeighbors,
    minDist,
    random: mulberry32(seed),
  });
  return umap.fit(data);
}

export function runPacmap(
  _data: number[][],
  params: Record<string, number>,
  _seed: number
): number[][] {
  checkAllowedParams("pacmap", params, ["n_neighbors", "MN_ratio", "FP_ratio"]);
  // No PaCMAP implementation exists in this runtime's package ecosystem;
  // report the missing dependency instead of silently substituting another
  // embedder.
  throw new ProtocolError(
    "pacmap backend unavailable: missing dependency 'pacmap' " +
      "(no PaCMAP implementation is installed; only umap is currently served)"
  );
}

export function runEmbedder(
  method: "umap" | "pacmap",
  data: number[][],
  params: Record<string, number>,
  seed: number
): number[][] {
  const coords = method === "umap" ? runUmap(data, params, seed) : runPacmap(data, params, seed);
  if (coords.length !== data.length) {
    throw new ProtocolError(
      `embedder returned ${coords.length} rows for ${data.length} input rows`
    );
  }
  for (let i = 0; i < coords.length; i++) {
    const row = coords[i];
    if (row.length !== 2 || !row.every(Number.isFinite)) {
      throw new ProtocolError(`embedder produced a non-finite or non-2D coordinate at row ${i}`);
    }
  }
  return coords;
}
