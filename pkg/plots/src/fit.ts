/**
 * Weighted least-squares slope of log2(y) against log2(x).
 *
 * This mirrors the estimator used by the experiment side bit-for-bit in
 * structure: weights 1/se_log^2 with se_log = se / (y ln 2), a relative
 * floor of 1e-3 times the smallest positive se_log, and an unweighted fit
 * when every standard error vanishes.  Points with nonpositive y are
 * dropped and reported.
 */

export interface FitResult {
  slope: number;
  slopeSe: number;
  intercept: number;
  dropped: number[];
}

export function fitExponent(
  xs: number[],
  ys: number[],
  ses: number[]
): FitResult {
  const dropped: number[] = [];
  const x: number[] = [];
  const y: number[] = [];
  const se: number[] = [];
  for (let i = 0; i < xs.length; i++) {
    if (ys[i] <= 0) {
      dropped.push(xs[i]);
      continue;
    }
    x.push(Math.log2(xs[i]));
    y.push(Math.log2(ys[i]));
    se.push(ses[i] / (ys[i] * Math.LN2));
  }
  if (x.length < 3) {
    throw new Error("slope fit needs at least 3 usable points");
  }
  const allZero = se.every((s) => s === 0);
  let w: number[];
  if (allZero) {
    w = se.map(() => 1.0);
  } else {
    const positive = se.filter((s) => s > 0);
    const floor = Math.max(Math.min(...positive) * 1e-3, 1e-300);
    w = se.map((s) => 1.0 / Math.max(s, floor) ** 2);
  }
  const sw = w.reduce((a, b) => a + b, 0);
  const xb = w.reduce((a, wi, i) => a + wi * x[i], 0) / sw;
  const yb = w.reduce((a, wi, i) => a + wi * y[i], 0) / sw;
  let sxx = 0;
  let sxy = 0;
  for (let i = 0; i < x.length; i++) {
    sxx += w[i] * (x[i] - xb) ** 2;
    sxy += w[i] * (x[i] - xb) * (y[i] - yb);
  }
  const slope = sxy / sxx;
  let slopeSe: number;
  if (allZero) {
    let rss = 0;
    let sxx0 = 0;
    for (let i = 0; i < x.length; i++) {
      rss += (y[i] - (yb + slope * (x[i] - xb))) ** 2;
      sxx0 += (x[i] - xb) ** 2;
    }
    const dof = Math.max(x.length - 2, 1);
    slopeSe = Math.sqrt(rss / dof / sxx0);
  } else {
    slopeSe = Math.sqrt(1.0 / sxx);
  }
  return { slope, slopeSe, intercept: yb - slope * xb, dropped };
}
