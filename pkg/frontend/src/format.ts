// Number formatting shared by the summary table and chart axes.
//
// Jain indexes and convergence times are rendered with String(), which
// emits the shortest round-trip decimal of the double -- exactly the
// digits the CLI's JSON summary prints, so table values can be compared
// against `summarize` output character by character.

export function formatJain(value: number): string {
  return String(value);
}

export function formatConvergence(value: number | null): string {
  return value === null ? "absent" : `${String(value)} s`;
}

export function formatRate(bps: number): string {
  if (bps >= 1e6) return `${(bps / 1e6).toFixed(2)} Mbit/s`;
  if (bps >= 1e3) return `${(bps / 1e3).toFixed(1)} kbit/s`;
  return `${bps.toFixed(0)} bit/s`;
}

export function formatAxis(value: number): string {
  const abs = Math.abs(value);
  if (abs >= 1e9) return `${(value / 1e9).toFixed(1)}G`;
  if (abs >= 1e6) return `${(value / 1e6).toFixed(1)}M`;
  if (abs >= 1e3) return `${(value / 1e3).toFixed(1)}k`;
  if (abs >= 10 || value === Math.round(value)) return value.toFixed(0);
  return value.toFixed(2);
}

export function formatDuration(seconds: number): string {
  return seconds >= 100 ? `${seconds.toFixed(0)} s` : `${seconds.toFixed(1)} s`;
}
