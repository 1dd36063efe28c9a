// Lightweight canvas line charts: one chart per metric, one series per
// flow, shared time axis. Redraw is capped at 10 Hz; long series are
// min-max decimated before drawing so extrema stay visible.

import { decimate, Point } from "./decimate.js";
import { formatAxis } from "./format.js";

const SERIES_COLORS = ["#4f9cf9", "#f97360", "#53c879", "#d7a545", "#b07df0", "#38bdbd"];
const MAX_DRAW_POINTS = 1200;
const REDRAW_MIN_INTERVAL_MS = 100;

export class LineChart {
  private series = new Map<string, Point[]>();
  private colorOf = new Map<string, string>();
  private canvas: HTMLCanvasElement;
  private ctx: CanvasRenderingContext2D;
  private lastDraw = 0;
  private pendingDraw: number | null = null;
  private xMax: number | null = null;

  constructor(parent: HTMLElement, readonly title: string, fixedXMax?: number) {
    const wrap = document.createElement("div");
    wrap.className = "chart";
    const heading = document.createElement("div");
    heading.className = "chart-title";
    heading.textContent = title;
    this.canvas = document.createElement("canvas");
    this.canvas.width = 560;
    this.canvas.height = 190;
    wrap.append(heading, this.canvas);
    parent.appendChild(wrap);
    const ctx = this.canvas.getContext("2d");
    if (!ctx) throw new Error("canvas 2d context unavailable");
    this.ctx = ctx;
    this.xMax = fixedXMax ?? null;
    this.draw();
  }

  addPoint(seriesId: string, x: number, y: number): void {
    let points = this.series.get(seriesId);
    if (!points) {
      points = [];
      this.series.set(seriesId, points);
      this.colorOf.set(seriesId, SERIES_COLORS[(this.series.size - 1) % SERIES_COLORS.length]);
    }
    points.push({ x, y });
    this.scheduleDraw();
  }

  setSeries(seriesId: string, points: Point[]): void {
    this.series.set(seriesId, points);
    if (!this.colorOf.has(seriesId)) {
      this.colorOf.set(seriesId, SERIES_COLORS[(this.series.size - 1) % SERIES_COLORS.length]);
    }
    this.scheduleDraw();
  }

  private scheduleDraw(): void {
    const now = performance.now();
    if (now - this.lastDraw >= REDRAW_MIN_INTERVAL_MS) {
      this.draw();
      return;
    }
    if (this.pendingDraw === null) {
      this.pendingDraw = window.setTimeout(() => {
        this.pendingDraw = null;
        this.draw();
      }, REDRAW_MIN_INTERVAL_MS - (now - this.lastDraw));
    }
  }

  draw(): void {
    this.lastDraw = performance.now();
    const { ctx, canvas } = this;
    const W = canvas.width;
    const H = canvas.height;
    const padL = 54;
    const padB = 22;
    const padT = 8;
    const padR = 10;

    ctx.fillStyle = "#14181f";
    ctx.fillRect(0, 0, W, H);

    let xLo = Infinity;
    let xHi = -Infinity;
    let yLo = 0;
    let yHi = -Infinity;
    for (const points of this.series.values()) {
      for (const p of points) {
        if (p.x < xLo) xLo = p.x;
        if (p.x > xHi) xHi = p.x;
        if (p.y > yHi) yHi = p.y;
        if (p.y < yLo) yLo = p.y;
      }
    }
    if (!Number.isFinite(xLo)) {
      ctx.fillStyle = "#5b6472";
      ctx.fillText("waiting for samples", padL, H / 2);
      return;
    }
    if (this.xMax !== null) xHi = Math.max(xHi, this.xMax);
    xLo = Math.min(xLo, 0);
    if (yHi <= yLo) yHi = yLo + 1;
    yHi *= 1.05;

    const sx = (x: number) => padL + ((x - xLo) / (xHi - xLo)) * (W - padL - padR);
    const sy = (y: number) => H - padB - ((y - yLo) / (yHi - yLo)) * (H - padB - padT);

    // grid + axis labels
    ctx.strokeStyle = "#242b36";
    ctx.fillStyle = "#7a8696";
    ctx.font = "10px sans-serif";
    for (let g = 0; g <= 4; g++) {
      const y = yLo + ((yHi - yLo) * g) / 4;
      const py = sy(y);
      ctx.beginPath();
      ctx.moveTo(padL, py);
      ctx.lineTo(W - padR, py);
      ctx.stroke();
      ctx.fillText(formatAxis(y), 4, py + 3);
    }
    for (let g = 0; g <= 6; g++) {
      const x = xLo + ((xHi - xLo) * g) / 6;
      ctx.fillText(`${x.toFixed(0)}s`, sx(x) - 8, H - 6);
    }

    for (const [id, points] of this.series.entries()) {
      const drawn = decimate(points, MAX_DRAW_POINTS);
      ctx.strokeStyle = this.colorOf.get(id) ?? "#ffffff";
      ctx.lineWidth = 1.4;
      ctx.beginPath();
      drawn.forEach((p, i) => {
        if (i === 0) ctx.moveTo(sx(p.x), sy(p.y));
        else ctx.lineTo(sx(p.x), sy(p.y));
      });
      ctx.stroke();
    }

    // legend
    let lx = padL + 6;
    for (const id of this.series.keys()) {
      ctx.fillStyle = this.colorOf.get(id) ?? "#ffffff";
      ctx.fillRect(lx, padT + 2, 8, 8);
      ctx.fillStyle = "#c6ccd6";
      ctx.fillText(id, lx + 11, padT + 10);
      lx += 11 + 7 * id.length + 16;
    }
  }
}
