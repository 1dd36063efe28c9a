// Thin typed client over the control API.

import type { Catalog, MetricSample, RunHandle, RunSummary } from "./types.js";

export interface LaunchRequest {
  preset?: string;
  seed?: number;
  duration_s?: number;
}

export class ApiClient {
  constructor(private base: string = "") {}

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await fetch(this.base + path, init);
    if (!resp.ok) {
      let detail = `${resp.status}`;
      try {
        const body = await resp.json();
        detail = JSON.stringify(body.detail ?? body);
      } catch {
        /* keep status code */
      }
      throw new Error(detail);
    }
    return (await resp.json()) as T;
  }

  catalog(): Promise<Catalog> {
    return this.json<Catalog>("/api/catalog");
  }

  createRun(request: LaunchRequest | Record<string, unknown>): Promise<RunHandle> {
    return this.json<RunHandle>("/api/runs", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(request),
    });
  }

  listRuns(): Promise<{ runs: RunHandle[] }> {
    return this.json<{ runs: RunHandle[] }>("/api/runs");
  }

  getRun(runId: string): Promise<RunHandle> {
    return this.json<RunHandle>(`/api/runs/${runId}`);
  }

  cancelRun(runId: string): Promise<unknown> {
    return this.json(`/api/runs/${runId}`, { method: "DELETE" });
  }

  streamUrl(runId: string): string {
    return `${this.base}/api/runs/${runId}/stream`;
  }

  async fetchLog(runId: string): Promise<{ header: unknown; samples: MetricSample[] }> {
    const resp = await fetch(`${this.base}/api/runs/${runId}/log`);
    if (!resp.ok) throw new Error(`log fetch failed: ${resp.status}`);
    const lines = (await resp.text()).split("\n").filter((l) => l.length > 0);
    const header = JSON.parse(lines[0]);
    const samples = lines.slice(1).map((l) => JSON.parse(l) as MetricSample);
    return { header, samples };
  }

  async fetchSummary(runId: string): Promise<RunSummary | null> {
    // the terminal stream event carries the summary; for completed runs a
    // zero-throttle replay returns immediately
    const resp = await fetch(`${this.streamUrl(runId)}?factor=inf`);
    if (!resp.ok) throw new Error(`summary fetch failed: ${resp.status}`);
    const lines = (await resp.text()).split("\n").filter((l) => l.length > 0);
    const last = JSON.parse(lines[lines.length - 1]);
    return last.type === "summary" ? (last.summary as RunSummary) : null;
  }
}

/** Build the POST body for the launch form. */
export function buildLaunchBody(form: {
  preset: string;
  seed: number | null;
  duration: number | null;
}): LaunchRequest {
  const body: LaunchRequest = { preset: form.preset };
  if (form.seed !== null && Number.isFinite(form.seed)) body.seed = form.seed;
  if (form.duration !== null && Number.isFinite(form.duration) && form.duration > 0) {
    body.duration_s = form.duration;
  }
  return body;
}

/** Resolve the preset matching a CCA-pair/AQM/direction selection. */
export function presetFor(
  catalog: Catalog,
  cca: string,
  aqm: string,
  direction: string,
): string | null {
  for (const preset of catalog.presets) {
    if (preset.qdisc !== aqm) continue;
    if (preset.direction !== direction) continue;
    const ccas = preset.flows.map((f) => f.cca).sort();
    const wanted = ["cubic", cca].sort();
    if (ccas.length === wanted.length && ccas.every((c, i) => c === wanted[i])) {
      return preset.name;
    }
  }
  return null;
}
