// Dashboard entry point: launch experiments, follow competing flows live,
// and compare completed runs.

import { ApiClient, buildLaunchBody, presetFor } from "./api.js";
import { LineChart } from "./charts.js";
import { RunStream } from "./stream.js";
import { renderSummaryTable, summaryRows } from "./table.js";
import {
  Catalog,
  METRIC_LABELS,
  PACING_METRICS,
  RunHandle,
  SampleEvent,
  StreamEvent,
} from "./types.js";

const api = new ApiClient("");
const DEFAULT_METRICS = ["goodput", "srtt", "cwnd", "pacing_rate", "pacing_gain"];

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  ...children: (Node | string)[]
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  node.append(...children);
  return node;
}

class LiveView {
  private charts = new Map<string, LineChart>();
  private stream: RunStream | null = null;
  readonly root: HTMLElement;
  private status: HTMLElement;
  private chartsBox: HTMLElement;
  private summaryBox: HTMLElement;

  constructor(private metrics: string[]) {
    this.status = el("div", { class: "live-status" }, "no run selected");
    this.chartsBox = el("div", { class: "charts" });
    this.summaryBox = el("div", { class: "summary-box" });
    this.root = el("section", { class: "live" },
      el("h2", {}, "live run"), this.status, this.chartsBox, this.summaryBox);
  }

  watch(handle: RunHandle): void {
    this.stream?.close();
    this.charts.clear();
    this.chartsBox.replaceChildren();
    this.summaryBox.replaceChildren();
    this.status.textContent =
      `watching ${handle.scenario.name} seed=${handle.scenario.seed} (${handle.run_id.slice(0, 8)})`;

    const duration = handle.scenario.duration_s;
    for (const metric of this.metrics) {
      this.charts.set(metric, new LineChart(this.chartsBox, METRIC_LABELS[metric] ?? metric, duration));
    }

    const stream = new RunStream(
      { url: api.streamUrl(handle.run_id) },
      {
        onSample: (sample) => this.append(sample),
        onSummary: (event) => {
          this.status.textContent =
            `${handle.scenario.name}: ${event.state} ` +
            `(${this.stream?.receivedIndexes.length ?? 0} samples, ` +
            `contiguous=${this.stream?.contiguous ?? false})`;
          if (event.summary) {
            this.summaryBox.replaceChildren(
              renderSummaryTable(summaryRows(handle.scenario.name, event.summary)));
          }
        },
        onError: (message) => {
          this.status.textContent = `stream error: ${message}`;
        },
        onReconnect: (attempt) => {
          this.status.textContent = `stream dropped, resuming (attempt ${attempt})...`;
        },
      },
    );
    this.stream = stream;
    void stream.run();
  }

  private append(sample: SampleEvent): void {
    for (const [metric, chart] of this.charts.entries()) {
      if (PACING_METRICS.has(metric) && sample.cca === "cubic") continue;
      const value = (sample as unknown as Record<string, number | undefined>)[metric];
      if (value === undefined || value === null) continue;
      chart.addPoint(sample.flow_id, sample.t, value);
    }
  }
}

class CompareView {
  readonly root: HTMLElement;
  private metricSelect: HTMLSelectElement;
  private chartBox: HTMLElement;
  private tableBox: HTMLElement;
  private selected = new Set<string>();

  constructor(private catalog: Catalog) {
    this.metricSelect = el("select", {});
    for (const metric of catalog.metrics) {
      this.metricSelect.appendChild(el("option", { value: metric }, metric));
    }
    this.metricSelect.value = "goodput";
    this.metricSelect.addEventListener("change", () => void this.render());
    this.chartBox = el("div", { class: "charts" });
    this.tableBox = el("div", { class: "summary-box" });
    this.root = el("section", { class: "compare" },
      el("h2", {}, "compare completed runs"),
      el("div", { class: "compare-controls" }, "metric: ", this.metricSelect),
      this.chartBox, this.tableBox);
  }

  toggle(runId: string, on: boolean): void {
    if (on) this.selected.add(runId);
    else this.selected.delete(runId);
    void this.render();
  }

  async render(): Promise<void> {
    this.chartBox.replaceChildren();
    this.tableBox.replaceChildren();
    if (this.selected.size === 0) return;
    const metric = this.metricSelect.value;
    const chart = new LineChart(this.chartBox, `${METRIC_LABELS[metric] ?? metric} - overlay`);
    const rows = [];
    for (const runId of this.selected) {
      const handle = await api.getRun(runId);
      const label = `${handle.scenario.name}#${runId.slice(0, 6)}`;
      const { samples } = await api.fetchLog(runId);
      const byFlow = new Map<string, { x: number; y: number }[]>();
      for (const s of samples) {
        const value = (s as unknown as Record<string, number | undefined>)[metric];
        if (value === undefined || value === null) continue;
        const key = `${label}/${s.flow_id}`;
        if (!byFlow.has(key)) byFlow.set(key, []);
        byFlow.get(key)!.push({ x: s.t, y: value });
      }
      for (const [key, points] of byFlow.entries()) chart.setSeries(key, points);
      const summary = await api.fetchSummary(runId);
      if (summary) rows.push(...summaryRows(label, summary));
    }
    this.tableBox.appendChild(renderSummaryTable(rows));
  }
}

class LaunchForm {
  readonly root: HTMLElement;
  private ccaBoxes = new Map<string, HTMLInputElement>();
  private aqmSelect: HTMLSelectElement;
  private directionSelect: HTMLSelectElement;
  private durationInput: HTMLInputElement;
  private seedInput: HTMLInputElement;
  private submitBtn: HTMLButtonElement;
  private errorBox: HTMLElement;

  constructor(private catalog: Catalog, private onLaunched: (handle: RunHandle) => void) {
    const ccaBox = el("span", { class: "cca-picks" });
    for (const cca of catalog.ccas.filter((c) => c !== "cubic")) {
      const input = el("input", { type: "checkbox", id: `cca-${cca}` });
      if (cca === "bbr3") input.checked = true;
      input.addEventListener("change", () => this.refresh());
      this.ccaBoxes.set(cca, input);
      ccaBox.append(input, el("label", { for: `cca-${cca}` }, `cubic vs ${cca}`), " ");
    }
    this.aqmSelect = el("select", {});
    for (const aqm of catalog.aqms) this.aqmSelect.appendChild(el("option", { value: aqm }, aqm));
    this.directionSelect = el("select", {},
      el("option", { value: "upload" }, "upload"),
      el("option", { value: "download" }, "download"));
    this.durationInput = el("input", { type: "number", value: "120", min: "1" });
    this.seedInput = el("input", { type: "number", value: "1", min: "0" });
    this.submitBtn = el("button", {}, "launch");
    this.errorBox = el("div", { class: "form-error" });
    this.submitBtn.addEventListener("click", () => void this.submit());

    this.root = el("section", { class: "launch" },
      el("h2", {}, "launch experiment"),
      el("div", { class: "form-row" }, "flows: ", ccaBox),
      el("div", { class: "form-row" }, "queue discipline: ", this.aqmSelect,
        "  direction: ", this.directionSelect),
      el("div", { class: "form-row" }, "duration (s): ", this.durationInput,
        "  seed: ", this.seedInput, " ", this.submitBtn),
      this.errorBox);
    this.refresh();
  }

  private selectedCca(): string | null {
    for (const [cca, box] of this.ccaBoxes.entries()) if (box.checked) return cca;
    return null;
  }

  private refresh(): void {
    // exactly one competitor per run: uncheck others, disable submit when none
    const checked = [...this.ccaBoxes.entries()].filter(([, b]) => b.checked);
    if (checked.length > 1) {
      for (const [, box] of checked.slice(0, -1)) box.checked = false;
    }
    this.submitBtn.disabled = this.selectedCca() === null;
  }

  private async submit(): Promise<void> {
    this.errorBox.textContent = "";
    const cca = this.selectedCca();
    if (cca === null) return;
    const preset = presetFor(this.catalog, cca, this.aqmSelect.value, this.directionSelect.value);
    if (preset === null) {
      this.errorBox.textContent = "no preset for that combination";
      return;
    }
    const body = buildLaunchBody({
      preset,
      seed: this.seedInput.value === "" ? null : Number(this.seedInput.value),
      duration: this.durationInput.value === "" ? null : Number(this.durationInput.value),
    });
    try {
      const handle = await api.createRun(body);
      this.onLaunched(handle);
    } catch (err) {
      this.errorBox.textContent = `launch rejected: ${err}`;
    }
  }
}

class RunList {
  readonly root: HTMLElement;
  private listBox: HTMLElement;

  constructor(private onWatch: (handle: RunHandle) => void,
              private compare: CompareView) {
    this.listBox = el("div", { class: "run-list" });
    const refreshBtn = el("button", {}, "refresh");
    refreshBtn.addEventListener("click", () => void this.refresh());
    this.root = el("section", {},
      el("h2", {}, "runs "), refreshBtn, this.listBox);
    void this.refresh();
    window.setInterval(() => void this.refresh(), 5000);
  }

  async refresh(): Promise<void> {
    const { runs } = await api.listRuns();
    this.listBox.replaceChildren();
    for (const run of runs.slice().reverse()) {
      const row = el("div", { class: `run-row state-${run.state}` });
      const watch = el("button", {}, "watch");
      watch.addEventListener("click", () => this.onWatch(run));
      const compareBox = el("input", { type: "checkbox", title: "compare" });
      compareBox.disabled = run.state !== "done" && run.state !== "cancelled";
      compareBox.addEventListener("change", () =>
        this.compare.toggle(run.run_id, compareBox.checked));
      row.append(
        el("span", { class: "run-name" },
          `${run.scenario.name} seed=${run.scenario.seed}`),
        el("span", { class: "run-state" }, ` ${run.state} `,
          run.state === "running" ? `(${run.progress_s.toFixed(1)}s)` : ""),
        watch, compareBox);
      this.listBox.appendChild(row);
    }
  }
}

async function boot(): Promise<void> {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app");
  const catalog = await api.catalog();
  const live = new LiveView(DEFAULT_METRICS);
  const compare = new CompareView(catalog);
  const runList = new RunList((h) => live.watch(h), compare);
  const form = new LaunchForm(catalog, (handle) => {
    void runList.refresh();
    live.watch(handle);
  });
  root.append(form.root, runList.root, live.root, compare.root);
}

void boot();
