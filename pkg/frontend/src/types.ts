// Wire schemas of the control API (schema_version 1).

export interface MetricSample {
  t: number;
  flow_id: string;
  cca: string;
  goodput: number;
  srtt?: number;
  jitter?: number;
  cwnd: number;
  inflight: number;
  retransmissions: number;
  pacing_rate?: number;
  pacing_gain?: number;
  bbr_state?: string;
  qdisc_backlog: number;
}

export interface SampleEvent extends MetricSample {
  type: "sample";
  index: number;
}

export interface FlowSummary {
  cca: string;
  mean_goodput: number;
  median_goodput: number;
  retransmissions: number;
  cov_goodput: number | null;
}

export interface RunSummary {
  schema_version: number;
  duration_s: number;
  n_samples: number;
  window_s: [number, number];
  flows: Record<string, FlowSummary>;
  jain_index: number;
  jain_degenerate: boolean;
  convergence_time_s: number | null;
}

export interface SummaryEvent {
  type: "summary";
  state: string;
  summary: RunSummary | null;
}

export interface ErrorEvent {
  type: "error";
  error: string;
}

export type StreamEvent = SampleEvent | SummaryEvent | ErrorEvent;

export interface RunHandle {
  schema_version: number;
  run_id: string;
  state: "pending" | "running" | "done" | "failed" | "cancelled";
  progress_s: number;
  scenario: ScenarioDoc;
  error: string | null;
}

export interface ScenarioDoc {
  name: string;
  direction: string;
  duration_s: number;
  seed: number;
  sampling_period_s: number;
  flows: { flow_id: string; cca: string; start_offset_s: number }[];
  qdisc: { kind: string };
  [key: string]: unknown;
}

export interface CatalogPreset {
  name: string;
  direction: string;
  qdisc: string;
  duration_s: number;
  flows: { flow_id: string; cca: string }[];
}

export interface Catalog {
  schema_version: number;
  ccas: string[];
  aqms: string[];
  presets: CatalogPreset[];
  preset_aliases: Record<string, string>;
  metrics: string[];
  tunables: Record<string, unknown>;
}

// metrics that never appear for unpaced (cubic) flows
export const PACING_METRICS = new Set(["pacing_rate", "pacing_gain"]);

export const METRIC_LABELS: Record<string, string> = {
  goodput: "goodput (bit/s)",
  srtt: "smoothed RTT (ms)",
  jitter: "jitter (ms)",
  cwnd: "cwnd (packets)",
  inflight: "inflight (bytes)",
  retransmissions: "retransmissions (cumulative)",
  pacing_rate: "pacing rate (bit/s)",
  pacing_gain: "pacing gain",
  qdisc_backlog: "queue backlog (packets)",
};
