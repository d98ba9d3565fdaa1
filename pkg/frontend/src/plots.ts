import { writeFileSync } from "node:fs";

import { numericColumn, readVersionedCsv, SchemaError } from "./csv.js";
import { Chart, Series } from "./svg.js";

export const PLOT_KINDS = ["leak_sweep", "psd_overlay", "bb84", "amplification"] as const;
export type PlotKind = (typeof PLOT_KINDS)[number];

export interface PlotSpec {
  kind: PlotKind;
  input: string;
  output: string;
  title?: string;
  xLabel?: string;
  yLabel?: string;
}

const SCHEMAS: Record<PlotKind, string> = {
  leak_sweep: "kljn-sweep-1",
  psd_overlay: "kljn-psd-1",
  bb84: "kljn-bb84-1",
  amplification: "kljn-amplify-1",
};

/** Detection probability of intercepting n bits: 1 - (3/4)^n. */
export function bb84Detection(n: number): number {
  return 1.0 - Math.pow(0.75, n);
}

/** Leak after n XOR-halving steps from an initial fraction: x^(2^n). */
export function amplifiedLeak(initial: number, steps: number): number {
  return Math.pow(initial, Math.pow(2, steps));
}

function leakSweep(spec: PlotSpec): Chart {
  const table = readVersionedCsv(spec.input, SCHEMAS.leak_sweep);
  const x = numericColumn(table, "sweep_value");
  const p = numericColumn(table, "p");
  const ci = numericColumn(table, "ci95");
  const leak = numericColumn(table, "leak_fraction");
  const logX = x.every((v) => v > 0);
  const series: Series[] = [
    { x, y: p, color: "#1f77b4", label: "success rate p", markers: true, errorBars: ci },
    { x, y: leak, color: "#d62728", label: "leak fraction 2p-1", markers: true },
    {
      x: [Math.min(...x), Math.max(...x)],
      y: [0.5, 0.5],
      color: "#888888",
      label: "blind guessing",
      dashed: true,
    },
  ];
  return new Chart(
    {
      title: spec.title ?? "Eavesdropper leak vs wire resistance",
      xLabel: spec.xLabel ?? "wire resistance (ohm)",
      yLabel: spec.yLabel ?? "probability / fraction",
      xScale: logX ? "log10" : "linear",
    },
    series
  );
}

function psdOverlay(spec: PlotSpec): Chart {
  const table = readVersionedCsv(spec.input, SCHEMAS.psd_overlay);
  const f = numericColumn(table, "freq_hz");
  const u = numericColumn(table, "psd_u");
  const i = numericColumn(table, "psd_i");
  const au = numericColumn(table, "analytic_u");
  const ai = numericColumn(table, "analytic_i");
  const series: Series[] = [
    { x: f, y: u, color: "#1f77b4", label: "measured S_u" },
    { x: f, y: i, color: "#2ca02c", label: "measured S_i" },
    { x: f, y: au, color: "#0b3d66", label: "analytic S_u", dashed: true },
    { x: f, y: ai, color: "#14521a", label: "analytic S_i", dashed: true },
  ];
  return new Chart(
    {
      title: spec.title ?? "Channel spectra vs closed form",
      xLabel: spec.xLabel ?? "frequency (Hz)",
      yLabel: spec.yLabel ?? "PSD (V^2/Hz, A^2/Hz)",
    },
    series
  );
}

function bb84(spec: PlotSpec): Chart {
  const table = readVersionedCsv(spec.input, SCHEMAS.bb84);
  const n = numericColumn(table, "n");
  const empirical = numericColumn(table, "empirical");
  const ci = numericColumn(table, "ci95");
  // Analytic curve evaluated on a fine grid, independent of the CSV values.
  const nMax = Math.max(...n);
  const grid: number[] = [];
  const curve: number[] = [];
  for (let v = 0; v <= nMax + 0.25; v += 0.25) {
    grid.push(v);
    curve.push(bb84Detection(v));
  }
  const series: Series[] = [
    { x: grid, y: curve, color: "#d62728", label: "1 - (3/4)^n", dashed: true },
    { x: n, y: empirical, color: "#1f77b4", label: "simulated", line: false, markers: true, errorBars: ci },
  ];
  return new Chart(
    {
      title: spec.title ?? "Intercept-resend detection probability",
      xLabel: spec.xLabel ?? "intercepted bits n",
      yLabel: spec.yLabel ?? "detection probability",
    },
    series
  );
}

function amplification(spec: PlotSpec): Chart {
  const table = readVersionedCsv(spec.input, SCHEMAS.amplification);
  const step = numericColumn(table, "step");
  const predicted = numericColumn(table, "predicted_leak");
  const empirical = numericColumn(table, "empirical_leak");
  const initial = predicted[0];
  const curve = step.map((s) => amplifiedLeak(initial, s));
  const series: Series[] = [
    { x: step, y: curve, color: "#d62728", label: "model leak_0^(2^N)", dashed: true, markers: true },
    { x: step, y: predicted, color: "#1f77b4", label: "predicted", markers: true },
  ];
  if (empirical.some((v) => Number.isFinite(v))) {
    series.push({
      x: step,
      y: empirical,
      color: "#2ca02c",
      label: "empirical",
      line: false,
      markers: true,
    });
  }
  return new Chart(
    {
      title: spec.title ?? "Privacy amplification decay",
      xLabel: spec.xLabel ?? "XOR steps N",
      yLabel: spec.yLabel ?? "leak fraction",
      yScale: "log10",
    },
    series
  );
}

/** Render one figure; writes the SVG only after the chart built cleanly. */
export function render(spec: PlotSpec): string {
  if (!PLOT_KINDS.includes(spec.kind)) {
    throw new SchemaError(`unknown plot kind: ${spec.kind}`);
  }
  const chart =
    spec.kind === "leak_sweep"
      ? leakSweep(spec)
      : spec.kind === "psd_overlay"
        ? psdOverlay(spec)
        : spec.kind === "bb84"
          ? bb84(spec)
          : amplification(spec);
  const svg = chart.render();
  writeFileSync(spec.output, svg, "utf-8");
  return spec.output;
}
