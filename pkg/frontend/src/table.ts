// Summary/compare table rows built from API summaries. The dashboard does
// no metric computation of its own: every number here is a rendered API
// value, so rows compare exactly against the CLI summary output.

import { formatConvergence, formatJain, formatRate } from "./format.js";
import type { RunSummary } from "./types.js";

export interface SummaryRow {
  run: string;
  flow: string;
  cca: string;
  meanGoodput: string;
  retransmissions: string;
  jain: string;
  convergence: string;
}

export function summaryRows(runLabel: string, summary: RunSummary): SummaryRow[] {
  const rows: SummaryRow[] = [];
  const flowIds = Object.keys(summary.flows).sort();
  for (const flowId of flowIds) {
    const flow = summary.flows[flowId];
    rows.push({
      run: runLabel,
      flow: flowId,
      cca: flow.cca,
      meanGoodput: formatRate(flow.mean_goodput),
      retransmissions: String(flow.retransmissions),
      jain: formatJain(summary.jain_index),
      convergence: formatConvergence(summary.convergence_time_s),
    });
  }
  return rows;
}

export function renderSummaryTable(rows: SummaryRow[]): HTMLTableElement {
  const table = document.createElement("table");
  table.className = "summary-table";
  const head = table.createTHead().insertRow();
  for (const label of ["run", "flow", "cca", "mean goodput", "retransmissions",
                       "jain index", "convergence"]) {
    const th = document.createElement("th");
    th.textContent = label;
    head.appendChild(th);
  }
  const body = table.createTBody();
  for (const row of rows) {
    const tr = body.insertRow();
    for (const value of [row.run, row.flow, row.cca, row.meanGoodput,
                         row.retransmissions, row.jain, row.convergence]) {
      tr.insertCell().textContent = value;
    }
  }
  return table;
}
