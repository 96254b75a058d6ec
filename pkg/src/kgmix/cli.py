"""Command-line entry point: experiment orchestration and manifests.

Subcommands: phase-audit | layer-count | lift-exponents | kernel-audit |
hs-audit | wick-audit | picard | window-scan | manifest.

Configuration comes from a strict JSON file (unknown keys are rejected)
merged with command-line overrides.  Exit codes are the machine contract:
0 = all criteria passed, 2 = an audit failed, 1 = execution error.
All randomness flows from the single master seed recorded in the report;
outputs are byte-identical for any worker count.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

from .experiments import EXPERIMENTS, run_named_experiment
from .reporting import emit_manifest

# every key accepted anywhere in a config file
_KNOWN_KEYS = {
    "experiment",
    "alpha", "c1", "c2",
    "s1", "s2", "theta", "sigma_work", "eps", "p_x", "q_x",
    "a0", "a1", "a_low",
    "seed", "samples", "out_dir", "workers",
    "lam", "n_steps", "horizon", "grid_step",
    "n_scales", "m_scales", "hs_scales", "d_scales", "psi_scales",
    "conv_scales", "contrast_scales", "cutoff_scales", "slope_scales",
    "m21_scales", "k21_steps", "k21_t_values", "volterra_steps",
    "gap_pair", "gap_band", "degenerate_scale", "contrast_color",
    "contrast_tol", "psi_tol", "theta_tol", "m21_tol", "k21_tol",
    "volterra_tol", "ibp_tol", "hs_tol", "remainder_const",
    "n_radius", "bound_const", "output_color", "low_output_n",
    "low_output_m", "c0", "s_steps", "block", "pair_scale",
    "pair_samples", "center_scale", "center_samples", "center_steps",
    "z_gate", "check_samples", "mean_zero_samples", "mean_zero_radius",
    "slope_lam", "slope_steps", "slope_samples", "m21_n",
    "tol", "max_iter", "cutoff_steps", "cutoff_paths",
    "mu", "scan_alphas", "slope_quad_stride", "theta_lam",
}

_DEFAULTS = {
    "alpha": 1.0,
    "c1": 1.0,
    "c2": 2.0,
    "seed": 20250811,
}


class ConfigError(ValueError):
    pass


def load_config(path: str | None, overrides: dict) -> dict:
    cfg = dict(_DEFAULTS)
    if path is not None:
        raw = json.loads(Path(path).read_text())
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        unknown = sorted(set(raw) - _KNOWN_KEYS)
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        cfg.update(raw)
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    return cfg


def _resolve_workers(args) -> int:
    if args.workers is not None:
        return args.workers
    env = os.environ.get("KGMIX_WORKERS")
    if env:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"KGMIX_WORKERS must be an integer, got {env!r}") from exc
    return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kgmix",
        description="Desk-scale audits of the two-color multispeed "
        "fractional Klein-Gordon system",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name, help=f"run the {name} experiment")
        sp.add_argument("--config", type=str, default=None, help="JSON config file")
        sp.add_argument("--seed", type=int, default=None, help="master seed (u64)")
        sp.add_argument("--out", type=str, default=None, help="output directory")
        sp.add_argument("--workers", type=int, default=None, help="worker count hint")
    mf = sub.add_parser("manifest", help="hash a completed run directory")
    mf.add_argument("run_dir", type=str)
    mf.add_argument("--out", type=str, default=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "manifest":
            manifest = emit_manifest(args.run_dir, args.out)
            print(f"manifest: {len(manifest['entries'])} entries")
            return 0
        workers = _resolve_workers(args)
        cfg = load_config(args.config, {"seed": args.seed})
        cfg["experiment"] = args.command
        cfg["workers"] = workers
        out_dir = Path(args.out or cfg.get("out_dir") or f"runs/{args.command}")
        t0 = time.perf_counter()
        report = run_named_experiment(args.command, cfg, out_dir)
        wall = time.perf_counter() - t0
        report.wall_time_s = wall
        (out_dir / "run.log").write_text(
            f"experiment={args.command} seed={cfg['seed']} wall_time_s={wall:.3f}\n"
        )
        for name, ok in sorted(report.passes.items()):
            print(f"[{'PASS' if ok else 'FAIL'}] {args.command}: {name}")
        print(
            f"{args.command}: {'pass' if report.passed else 'FAIL'} "
            f"({wall:.1f}s, outputs in {out_dir})"
        )
        return 0 if report.passed else 2
    except (ConfigError, FileNotFoundError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
