/**
 * Client for the fetchpipe data-loading benchmark engine.
 *
 * Exposes one epoch of the loader as an async iterator of
 * (batchId, indices, digests). All loading concurrency stays inside the
 * engine: the client drives the `fetchpipe` CLI on a deterministic virtual
 * clock and parses the JSONL event log the run produces. Engine errors
 * surface as exceptions whose `name` preserves the engine's error name
 * (e.g. "InvalidConfig", "StoreUnavailable").
 */

import { spawnSync } from "node:child_process";
import { mkdtempSync, readFileSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import * as path from "node:path";

export interface LatencyModelSpec {
  distribution?: "fixed" | "uniform" | "lognormal";
  params?: number[];
  bandwidth_bytes_per_s?: number | null;
  seed?: number;
}

export interface StoreSpec {
  kind: "local_dir" | "http_object" | "latency_sim";
  root_or_endpoint?: string;
  latency?: LatencyModelSpec;
  auth?: string | null;
}

/** Loader knobs, exposed under the engine's parameter names. */
export interface BoundLoaderConfig {
  num_workers?: number;
  prefetch_factor?: number;
  num_fetch_workers?: number;
  batch_pool?: number;
  worker_startup_delay?: number;
  in_order?: boolean;
  implementation?: "sequential" | "intra_batch" | "pooled_disassembly";
  batch_size: number;
  shuffle?: boolean;
  seed?: number;
}

export interface BoundBatch {
  batchId: number;
  indices: number[];
  digests: string[];
}

export interface BoundIterOptions {
  /** Python interpreter used to launch the engine (default: $FETCHPIPE_PYTHON or python3). */
  pythonBin?: string;
}

export class FetchpipeError extends Error {
  constructor(name: string, message: string) {
    super(message);
    this.name = name;
  }
}

interface GetBatchEvent {
  v: number;
  kind: string;
  batch_id: number;
  indices: number[];
  digests: string[];
}

function engineConfig(
  config: BoundLoaderConfig,
  manifest: string,
  store: StoreSpec,
  outputDir: string,
): Record<string, unknown> {
  return {
    manifest,
    store,
    loader: {
      num_workers: config.num_workers ?? 4,
      prefetch_factor: config.prefetch_factor ?? 4,
      worker_startup_delay: config.worker_startup_delay ?? 0.0,
      in_order: config.in_order ?? true,
      strategy: {
        kind: config.implementation ?? "intra_batch",
        num_fetch_workers: config.num_fetch_workers ?? 16,
        batch_pool: config.batch_pool ?? 0,
      },
    },
    batch_size: config.batch_size,
    epochs: 1,
    seed: config.seed ?? 0,
    shuffle: config.shuffle ?? true,
    consumer: { to_device_delay: 0.0, train_delay: 0.0 },
    clock: "virtual",
    output_dir: outputDir,
    run_id: "bound",
  };
}

function throwEngineError(stderr: string, code: number | null): never {
  const match = stderr.match(/^([A-Za-z_][A-Za-z0-9_]*): (.*)$/m);
  if (match) {
    throw new FetchpipeError(match[1], match[2]);
  }
  throw new FetchpipeError(
    "EngineError",
    `fetchpipe exited with code ${code}: ${stderr.trim()}`,
  );
}

/** Run the engine once and parse its event log into delivered batches. */
export function runBound(
  config: BoundLoaderConfig,
  manifest: string,
  store: StoreSpec,
  options: BoundIterOptions = {},
): BoundBatch[] {
  const python =
    options.pythonBin ?? process.env.FETCHPIPE_PYTHON ?? "python3";
  const workDir = mkdtempSync(path.join(tmpdir(), "fetchpipe-client-"));
  try {
    const configPath = path.join(workDir, "config.json");
    writeFileSync(
      configPath,
      JSON.stringify(engineConfig(config, manifest, store, workDir)),
    );
    const proc = spawnSync(python, ["-m", "fetchpipe", "run", "--config", configPath], {
      encoding: "utf-8",
      maxBuffer: 256 * 1024 * 1024,
    });
    if (proc.error) {
      throw new FetchpipeError("SpawnError", String(proc.error));
    }
    if (proc.status !== 0) {
      throwEngineError(proc.stderr ?? "", proc.status);
    }
    const events = readFileSync(path.join(workDir, "bound.events.jsonl"), "utf-8");
    return parseBatchStream(events);
  } finally {
    rmSync(workDir, { recursive: true, force: true });
  }
}

/** Extract the delivered-order batch stream from an engine event log. */
export function parseBatchStream(eventsJsonl: string): BoundBatch[] {
  const batches: BoundBatch[] = [];
  for (const line of eventsJsonl.split("\n")) {
    if (!line.trim()) continue;
    const event = JSON.parse(line) as GetBatchEvent;
    if (event.kind !== "get_batch") continue;
    batches.push({
      batchId: event.batch_id,
      indices: event.indices,
      digests: event.digests,
    });
  }
  // In-order loaders deliver ascending batch_id; assembly order in the log
  // may differ, so restore delivery order here.
  batches.sort((a, b) => a.batchId - b.batchId);
  return batches;
}

/**
 * Iterate one epoch of batches.
 *
 * The engine run happens on the first `next()`; afterwards batches are
 * yielded in delivered order and the iterator finishes with the standard
 * done signal.
 */
export async function* boundIter(
  config: BoundLoaderConfig,
  manifest: string,
  store: StoreSpec,
  options: BoundIterOptions = {},
): AsyncGenerator<BoundBatch, void, undefined> {
  for (const batch of runBound(config, manifest, store, options)) {
    yield batch;
  }
}
