#!/usr/bin/env node
/**
 * kgmix-render: batch figure generation from experiment CSV outputs.
 *
 *   kgmix-render render --spec FILE.json [--spec OTHER.json ...]
 *
 * Each spec yields one SVG; the process exits nonzero on any schema or
 * column mismatch so batch pipelines fail loudly.
 */

import { loadSpec, renderSlopes } from "./figure.js";
import { dirname } from "node:path";

function usage(): never {
  process.stderr.write("usage: kgmix-render render --spec FILE.json [--spec ...]\n");
  process.exit(1);
}

export function main(argv: string[]): number {
  if (argv.length === 0 || argv[0] !== "render") usage();
  const specs: string[] = [];
  for (let i = 1; i < argv.length; i++) {
    if (argv[i] === "--spec") {
      const v = argv[++i];
      if (!v) usage();
      specs.push(v);
    } else {
      usage();
    }
  }
  if (specs.length === 0) usage();
  for (const path of specs) {
    try {
      const spec = loadSpec(path);
      const result = renderSlopes(spec, dirname(path));
      const slopes = result.series
        .map((s) => `${s.name}=${s.fit.slope.toFixed(6)}`)
        .join(" ");
      process.stdout.write(`wrote ${result.out} (${slopes})\n`);
    } catch (err) {
      process.stderr.write(`error rendering ${path}: ${(err as Error).message}\n`);
      return 2;
    }
  }
  return 0;
}

process.exit(main(process.argv.slice(2)));
