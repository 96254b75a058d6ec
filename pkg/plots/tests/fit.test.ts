import { describe, expect, it } from "vitest";

import { fitExponent } from "../src/fit.js";
import { parseCsv, numericColumn, SchemaError, ColumnError } from "../src/csv.js";

describe("fitExponent", () => {
  it("recovers an exact power law to rounding", () => {
    const xs = [4, 8, 16, 32];
    const p = -1.75;
    const ys = xs.map((x) => 3.2 * Math.pow(x, p));
    const fit = fitExponent(xs, ys, [0, 0, 0, 0]);
    expect(Math.abs(fit.slope - p)).toBeLessThan(1e-12);
    expect(fit.slopeSe).toBeLessThan(1e-10);
  });

  it("drops nonpositive points and reports them", () => {
    const fit = fitExponent([4, 8, 16, 32], [1.0, 0.5, 0.25, -1], [0.1, 0.05, 0.02, 0.1]);
    expect(fit.dropped).toEqual([32]);
    expect(Math.abs(fit.slope + 1.0)).toBeLessThan(1e-9);
  });

  it("needs at least three usable points", () => {
    expect(() => fitExponent([4, 8], [1, 2], [0, 0])).toThrow();
  });
});

describe("csv", () => {
  it("rejects missing schema column", () => {
    expect(() => parseCsv("a,b\n1,2\n")).toThrow(SchemaError);
  });

  it("rejects unknown schema versions by name", () => {
    expect(() => parseCsv("schema_version,a\n99,1\n")).toThrow(/schema_version 99/);
  });

  it("names missing columns", () => {
    const t = parseCsv("schema_version,a\n1,2\n");
    expect(() => numericColumn(t, "missing")).toThrow(/missing column 'missing'/);
  });
});
