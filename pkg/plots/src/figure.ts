/**
 * Log-log slope figures from experiment CSV outputs.
 *
 * The figure spec names the input CSV, the x/y columns, optional grouping
 * (one fitted series per group value), per-group reference slopes, and the
 * output path.  Fitted and reference lines are drawn per series with the
 * fitted slope annotated; the run seed and a content hash of the resolved
 * configuration (both read from the experiment's report.json) are embedded
 * in every figure.  Rendering never recomputes experiment data: CSV files
 * are the single source of truth.
 */

import { createHash } from "node:crypto";
import { readFileSync, writeFileSync, mkdirSync } from "node:fs";
import { dirname, resolve } from "node:path";

import { ColumnError, numericColumn, parseCsv, stringColumn } from "./csv.js";
import { FitResult, fitExponent } from "./fit.js";
import { Scene } from "./svg.js";

export interface FigureSpec {
  input_csv: string;
  x_column: string;
  y_column: string;
  se_column?: string;
  group_column?: string;
  groups?: string[];
  reference_slopes?: Record<string, number>;
  reference_slope?: number;
  report_json?: string;
  out: string;
  title?: string;
}

export interface SeriesResult {
  name: string;
  fit: FitResult;
  reference?: number;
  pass?: boolean;
  xs: number[];
  ys: number[];
}

export interface RenderResult {
  out: string;
  series: SeriesResult[];
  seed: string;
  configHash: string;
  svg: string;
}

const PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

export function loadSpec(path: string): FigureSpec {
  const spec = JSON.parse(readFileSync(path, "utf-8")) as FigureSpec;
  for (const key of ["input_csv", "x_column", "y_column", "out"] as const) {
    if (!spec[key]) throw new Error(`figure spec is missing '${key}'`);
  }
  return spec;
}

function provenance(spec: FigureSpec, base: string): { seed: string; configHash: string } {
  if (!spec.report_json) return { seed: "unknown", configHash: "none" };
  const report = JSON.parse(readFileSync(resolve(base, spec.report_json), "utf-8"));
  const config = JSON.stringify(report.config ?? {});
  return {
    seed: String(report.seed ?? "unknown"),
    configHash: createHash("sha256").update(config).digest("hex").slice(0, 12),
  };
}

export function renderSlopes(spec: FigureSpec, baseDir = "."): RenderResult {
  const table = parseCsv(readFileSync(resolve(baseDir, spec.input_csv), "utf-8"));
  const xsAll = numericColumn(table, spec.x_column);
  const ysAll = numericColumn(table, spec.y_column);
  const seAll = spec.se_column ? numericColumn(table, spec.se_column) : xsAll.map(() => 0);
  const groupsAll = spec.group_column
    ? stringColumn(table, spec.group_column)
    : xsAll.map(() => "series");
  const names = spec.groups ?? [...new Set(groupsAll)];

  const series: SeriesResult[] = [];
  for (const name of names) {
    const xs: number[] = [];
    const ys: number[] = [];
    const ses: number[] = [];
    groupsAll.forEach((g, i) => {
      if (g === name) {
        xs.push(xsAll[i]);
        ys.push(ysAll[i]);
        ses.push(seAll[i]);
      }
    });
    if (xs.length === 0) throw new ColumnError(`no rows for group '${name}'`);
    const fit = fitExponent(xs, ys, ses);
    const reference = spec.reference_slopes?.[name] ?? spec.reference_slope;
    series.push({ name, fit, reference, xs, ys });
  }

  const { seed, configHash } = provenance(spec, baseDir);
  const svg = compose(spec, series, seed, configHash);
  const outPath = resolve(baseDir, spec.out);
  mkdirSync(dirname(outPath), { recursive: true });
  writeFileSync(outPath, svg);
  return { out: outPath, series, seed, configHash, svg };
}

function compose(
  spec: FigureSpec,
  series: SeriesResult[],
  seed: string,
  configHash: string
): string {
  const W = 640;
  const H = 420;
  const M = { left: 70, right: 20, top: 36, bottom: 46 };
  const scene = new Scene(W, H);

  const lx: number[] = [];
  const ly: number[] = [];
  for (const s of series) {
    s.xs.forEach((x, i) => {
      if (s.ys[i] > 0) {
        lx.push(Math.log2(x));
        ly.push(Math.log2(s.ys[i]));
      }
    });
  }
  const x0 = Math.min(...lx) - 0.3;
  const x1 = Math.max(...lx) + 0.3;
  const y0 = Math.min(...ly) - 0.6;
  const y1 = Math.max(...ly) + 0.6;
  const sx = (v: number) => M.left + ((v - x0) / (x1 - x0)) * (W - M.left - M.right);
  const sy = (v: number) => H - M.bottom - ((v - y0) / (y1 - y0)) * (H - M.top - M.bottom);

  // axes
  scene.line({ x1: M.left, y1: H - M.bottom, x2: W - M.right, y2: H - M.bottom, stroke: "black" });
  scene.line({ x1: M.left, y1: M.top, x2: M.left, y2: H - M.bottom, stroke: "black" });
  scene.label({
    x: (M.left + W - M.right) / 2,
    y: H - 12,
    text: `log2 ${spec.x_column}`,
    anchor: "middle",
  });
  scene.label({ x: 14, y: (M.top + H - M.bottom) / 2, text: `log2 ${spec.y_column}` });
  for (let t = Math.ceil(x0); t <= Math.floor(x1); t++) {
    scene.line({ x1: sx(t), y1: H - M.bottom, x2: sx(t), y2: H - M.bottom + 4, stroke: "black" });
    scene.label({ x: sx(t), y: H - M.bottom + 16, text: String(t), anchor: "middle", size: 10 });
  }
  scene.label({ x: M.left, y: 20, text: spec.title ?? spec.input_csv, size: 12 });

  series.forEach((s, si) => {
    const color = PALETTE[si % PALETTE.length];
    s.xs.forEach((x, i) => {
      if (s.ys[i] > 0) scene.marker({ x: sx(Math.log2(x)), y: sy(Math.log2(s.ys[i])), fill: color });
    });
    const f = s.fit;
    scene.line({
      x1: sx(x0 + 0.2),
      y1: sy(f.intercept + f.slope * (x0 + 0.2)),
      x2: sx(x1 - 0.2),
      y2: sy(f.intercept + f.slope * (x1 - 0.2)),
      stroke: color,
      width: 1.5,
    });
    let annotation = `${s.name}: slope=${f.slope.toFixed(9)}`;
    if (s.reference !== undefined) {
      // reference line anchored at the series midpoint
      const midx = (x0 + x1) / 2;
      const midy = f.intercept + f.slope * midx;
      scene.line({
        x1: sx(x0 + 0.2),
        y1: sy(midy + s.reference * (x0 + 0.2 - midx)),
        x2: sx(x1 - 0.2),
        y2: sy(midy + s.reference * (x1 - 0.2 - midx)),
        stroke: color,
        dash: "5,4",
      });
      annotation += ` ref=${s.reference}`;
    }
    scene.label({ x: M.left + 8, y: M.top + 14 + 14 * si, text: annotation, size: 11 });
  });

  scene.label({
    x: W - M.right,
    y: H - 4,
    text: `seed=${seed} config=${configHash}`,
    anchor: "end",
    size: 9,
  });
  return scene.render();
}
