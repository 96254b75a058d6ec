import { mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { describe, expect, it } from "vitest";

import { parseCsv, numericColumn, stringColumn } from "../src/csv.js";
import { renderSlopes } from "../src/figure.js";

const FIXTURES = join(__dirname, "fixtures");

function syntheticCsv(power: number): string {
  const rows = [4, 8, 16, 32, 64]
    .map((n) => `1,synthetic,${n},1.0,200,${(2.5 * Math.pow(n, power)).toExponential(17)},0.0`)
    .join("\n");
  return `schema_version,object,n_scale,t,samples,mean_sq,se\n${rows}\n`;
}

describe("renderSlopes", () => {
  it("labels a synthetic exact-power CSV with the input power", () => {
    const dir = mkdtempSync(join(tmpdir(), "plots-"));
    writeFileSync(join(dir, "synthetic.csv"), syntheticCsv(-1.5));
    const result = renderSlopes(
      {
        input_csv: "synthetic.csv",
        x_column: "n_scale",
        y_column: "mean_sq",
        se_column: "se",
        group_column: "object",
        reference_slope: -1.5,
        out: "synthetic.svg",
      },
      dir
    );
    expect(result.series).toHaveLength(1);
    expect(Math.abs(result.series[0].fit.slope + 1.5)).toBeLessThan(1e-9);
    expect(result.svg).toContain("slope=-1.500000000");
    expect(result.svg).toContain("ref=-1.5");
  });

  it("matches the slopes the experiment reported, to 1e-6", () => {
    const moment = parseCsv(readFileSync(join(FIXTURES, "lift_moments.csv"), "utf-8"));
    const slopes = parseCsv(readFileSync(join(FIXTURES, "lift_slopes.csv"), "utf-8"));
    const result = renderSlopes(
      {
        input_csv: "lift_moments.csv",
        x_column: "n_scale",
        y_column: "mean_sq",
        se_column: "se",
        group_column: "object",
        report_json: "report.json",
        reference_slopes: { psi1: -2, psi2: -2, theta: -1 },
        out: join("out", "lift.svg"),
      },
      FIXTURES
    );
    const reported = new Map(
      stringColumn(slopes, "object").map((o, i) => [o, numericColumn(slopes, "slope")[i]])
    );
    for (const s of result.series) {
      const want = reported.get(s.name);
      expect(want, `reported slope for ${s.name}`).toBeDefined();
      expect(Math.abs(s.fit.slope - (want as number))).toBeLessThan(1e-6);
    }
    expect(moment.rows.length).toBeGreaterThan(0);
    // provenance is embedded
    expect(result.svg).toContain("seed=");
    expect(result.svg).toContain("config=");
    expect(result.seed).not.toBe("unknown");
  });

  it("is byte-stable across reruns", () => {
    const dir = mkdtempSync(join(tmpdir(), "plots-"));
    writeFileSync(join(dir, "synthetic.csv"), syntheticCsv(-0.5));
    const spec = {
      input_csv: "synthetic.csv",
      x_column: "n_scale",
      y_column: "mean_sq",
      se_column: "se",
      group_column: "object",
      out: "a.svg",
    };
    const a = renderSlopes(spec, dir).svg;
    const b = renderSlopes({ ...spec, out: "b.svg" }, dir).svg;
    expect(a).toBe(b);
  });

  it("names missing columns", () => {
    const dir = mkdtempSync(join(tmpdir(), "plots-"));
    writeFileSync(join(dir, "synthetic.csv"), syntheticCsv(-1));
    expect(() =>
      renderSlopes(
        {
          input_csv: "synthetic.csv",
          x_column: "wrong_column",
          y_column: "mean_sq",
          out: "x.svg",
        },
        dir
      )
    ).toThrow(/wrong_column/);
  });
});
