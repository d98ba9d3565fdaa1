/**
 * Minimal deterministic SVG chart builder: fixed canvas, linear or log10
 * axes, polylines, markers, error bars. No DOM, no external renderer; the
 * output is a self-contained vector image whose dimensions depend only on
 * the construction arguments.
 */

export const WIDTH = 720;
export const HEIGHT = 480;
const MARGIN = { top: 48, right: 24, bottom: 56, left: 76 };

export type AxisScale = "linear" | "log10";

export interface Series {
  x: number[];
  y: number[];
  color: string;
  label: string;
  line?: boolean;
  markers?: boolean;
  dashed?: boolean;
  errorBars?: number[];
}

export interface ChartOptions {
  title: string;
  xLabel: string;
  yLabel: string;
  xScale?: AxisScale;
  yScale?: AxisScale;
}

interface Extent {
  min: number;
  max: number;
}

function finiteValues(values: number[]): number[] {
  return values.filter((v) => Number.isFinite(v));
}

function extent(values: number[], scale: AxisScale): Extent {
  const vals = finiteValues(values).filter((v) => scale !== "log10" || v > 0);
  if (vals.length === 0) {
    throw new Error("no plottable values on axis");
  }
  let min = Math.min(...vals);
  let max = Math.max(...vals);
  if (min === max) {
    min -= 0.5;
    max += 0.5;
  }
  if (scale === "log10") {
    return { min: Math.log10(min), max: Math.log10(max) };
  }
  const pad = 0.05 * (max - min);
  return { min: min - pad, max: max + pad };
}

function transform(v: number, scale: AxisScale): number {
  return scale === "log10" ? Math.log10(v) : v;
}

function ticks(ext: Extent, n = 6): number[] {
  const span = ext.max - ext.min;
  const step = span / (n - 1);
  return Array.from({ length: n }, (_, i) => ext.min + i * step);
}

function fmt(v: number, scale: AxisScale): string {
  const raw = scale === "log10" ? Math.pow(10, v) : v;
  if (raw !== 0 && (Math.abs(raw) < 1e-3 || Math.abs(raw) >= 1e5)) {
    return raw.toExponential(1);
  }
  return Number(raw.toPrecision(4)).toString();
}

function esc(text: string): string {
  return text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

export class Chart {
  private readonly parts: string[] = [];
  private readonly xExt: Extent;
  private readonly yExt: Extent;
  private readonly xScale: AxisScale;
  private readonly yScale: AxisScale;

  constructor(private readonly opts: ChartOptions, series: Series[]) {
    this.xScale = opts.xScale ?? "linear";
    this.yScale = opts.yScale ?? "linear";
    const allX = series.flatMap((s) => s.x);
    const allY = series.flatMap((s, _) => {
      const base = s.y;
      const bars = s.errorBars;
      if (!bars) return base;
      return base.flatMap((y, i) => [y - (bars[i] ?? 0), y + (bars[i] ?? 0)]);
    });
    this.xExt = extent(allX, this.xScale);
    this.yExt = extent(allY, this.yScale);
    this.drawFrame();
    for (const s of series) {
      this.drawSeries(s);
    }
    this.drawLegend(series);
  }

  private px(x: number): number {
    const t = (transform(x, this.xScale) - this.xExt.min) / (this.xExt.max - this.xExt.min);
    return MARGIN.left + t * (WIDTH - MARGIN.left - MARGIN.right);
  }

  private py(y: number): number {
    const t = (transform(y, this.yScale) - this.yExt.min) / (this.yExt.max - this.yExt.min);
    return HEIGHT - MARGIN.bottom - t * (HEIGHT - MARGIN.top - MARGIN.bottom);
  }

  private drawFrame(): void {
    const x0 = MARGIN.left;
    const x1 = WIDTH - MARGIN.right;
    const y0 = HEIGHT - MARGIN.bottom;
    const y1 = MARGIN.top;
    this.parts.push(
      `<rect x="0" y="0" width="${WIDTH}" height="${HEIGHT}" fill="white"/>`,
      `<text x="${WIDTH / 2}" y="24" text-anchor="middle" font-size="16" font-family="sans-serif">${esc(this.opts.title)}</text>`
    );
    for (const t of ticks(this.xExt)) {
      const gx = MARGIN.left + ((t - this.xExt.min) / (this.xExt.max - this.xExt.min)) * (x1 - x0);
      this.parts.push(
        `<line x1="${gx.toFixed(1)}" y1="${y1}" x2="${gx.toFixed(1)}" y2="${y0}" stroke="#e0e0e0"/>`,
        `<text x="${gx.toFixed(1)}" y="${y0 + 18}" text-anchor="middle" font-size="11" font-family="sans-serif">${fmt(t, this.xScale)}</text>`
      );
    }
    for (const t of ticks(this.yExt)) {
      const gy = y0 - ((t - this.yExt.min) / (this.yExt.max - this.yExt.min)) * (y0 - y1);
      this.parts.push(
        `<line x1="${x0}" y1="${gy.toFixed(1)}" x2="${x1}" y2="${gy.toFixed(1)}" stroke="#e0e0e0"/>`,
        `<text x="${x0 - 8}" y="${(gy + 4).toFixed(1)}" text-anchor="end" font-size="11" font-family="sans-serif">${fmt(t, this.yScale)}</text>`
      );
    }
    this.parts.push(
      `<rect x="${x0}" y="${y1}" width="${x1 - x0}" height="${y0 - y1}" fill="none" stroke="#333"/>`,
      `<text x="${(x0 + x1) / 2}" y="${HEIGHT - 12}" text-anchor="middle" font-size="13" font-family="sans-serif">${esc(this.opts.xLabel)}</text>`,
      `<text x="20" y="${(y0 + y1) / 2}" text-anchor="middle" font-size="13" font-family="sans-serif" transform="rotate(-90 20 ${(y0 + y1) / 2})">${esc(this.opts.yLabel)}</text>`
    );
  }

  private plottable(s: Series): number[] {
    const idx: number[] = [];
    for (let i = 0; i < s.x.length; i++) {
      const okX = Number.isFinite(s.x[i]) && (this.xScale !== "log10" || s.x[i] > 0);
      const okY = Number.isFinite(s.y[i]) && (this.yScale !== "log10" || s.y[i] > 0);
      if (okX && okY) idx.push(i);
    }
    return idx;
  }

  private drawSeries(s: Series): void {
    const idx = this.plottable(s);
    if (idx.length === 0) return;
    const pts = idx.map((i) => [this.px(s.x[i]), this.py(s.y[i])] as const);
    if (s.errorBars) {
      for (const i of idx) {
        const bar = s.errorBars[i] ?? 0;
        if (bar <= 0) continue;
        const gx = this.px(s.x[i]).toFixed(1);
        const lo = this.py(s.y[i] - bar).toFixed(1);
        const hi = this.py(s.y[i] + bar).toFixed(1);
        this.parts.push(
          `<line x1="${gx}" y1="${lo}" x2="${gx}" y2="${hi}" stroke="${s.color}" stroke-width="1.2"/>`
        );
      }
    }
    if (s.line !== false) {
      const path = pts.map(([x, y]) => `${x.toFixed(1)},${y.toFixed(1)}`).join(" ");
      const dash = s.dashed ? ' stroke-dasharray="6 4"' : "";
      this.parts.push(
        `<polyline points="${path}" fill="none" stroke="${s.color}" stroke-width="1.8"${dash} class="series"/>`
      );
    }
    if (s.markers) {
      for (const [x, y] of pts) {
        this.parts.push(
          `<circle cx="${x.toFixed(1)}" cy="${y.toFixed(1)}" r="3.2" fill="${s.color}"/>`
        );
      }
    }
  }

  private drawLegend(series: Series[]): void {
    let y = MARGIN.top + 14;
    for (const s of series) {
      const x = WIDTH - MARGIN.right - 170;
      const dash = s.dashed ? ' stroke-dasharray="6 4"' : "";
      this.parts.push(
        `<line x1="${x}" y1="${y - 4}" x2="${x + 26}" y2="${y - 4}" stroke="${s.color}" stroke-width="2"${dash}/>`,
        `<text x="${x + 32}" y="${y}" font-size="12" font-family="sans-serif">${esc(s.label)}</text>`
      );
      y += 18;
    }
  }

  render(): string {
    return (
      `<svg xmlns="http://www.w3.org/2000/svg" width="${WIDTH}" height="${HEIGHT}" viewBox="0 0 ${WIDTH} ${HEIGHT}">\n` +
      this.parts.join("\n") +
      "\n</svg>\n"
    );
  }
}
