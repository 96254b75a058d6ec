"""Machine-readable outputs: audit reports, versioned CSV, manifests,
and the flat binary field layout.

Determinism contract: CSV bytes are a pure function of the resolved
configuration and master seed (floats are serialized with shortest
round-trip repr; row order is fixed).  Wall-clock time never enters CSV or
report files; it is logged separately so reruns hash identically.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

CSV_SCHEMA_VERSION = 1
MANIFEST_SCHEMA_VERSION = 1
_FIELDS_MAGIC = b"KGMX"

__all__ = [
    "AuditReport",
    "write_csv",
    "write_report",
    "emit_manifest",
    "save_fields",
    "load_fields",
    "CSV_SCHEMA_VERSION",
]


@dataclass
class AuditReport:
    """Outcome of one experiment: measured values, references, pass flags.

    Every pass flag is a pure function of (measured, reference, tolerance),
    all of which are recorded here.  Wall time is kept in memory and in the
    run log only; the serialized report stays byte-stable across reruns.
    """

    experiment: str
    config: dict
    seed: int
    measured: Dict[str, object] = field(default_factory=dict)
    references: Dict[str, object] = field(default_factory=dict)
    tolerances: Dict[str, object] = field(default_factory=dict)
    passes: Dict[str, bool] = field(default_factory=dict)
    notes: List[str] = field(default_factory=list)
    wall_time_s: Optional[float] = None

    @property
    def passed(self) -> bool:
        return all(self.passes.values())

    def to_json_dict(self) -> dict:
        return {
            "schema_version": CSV_SCHEMA_VERSION,
            "experiment": self.experiment,
            "config": _plain(self.config),
            "seed": self.seed,
            "measured": _plain(self.measured),
            "references": _plain(self.references),
            "tolerances": _plain(self.tolerances),
            "passes": _plain(self.passes),
            "passed": self.passed,
            "notes": list(self.notes),
        }


def _plain(obj):
    """Convert numpy scalars/arrays and dataclasses to JSON-friendly types."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return _plain(dataclasses.asdict(obj))
    return obj


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, columns: Sequence[str], rows: Sequence[Sequence]) -> None:
    """Versioned CSV with deterministic float formatting.

    The first column is always schema_version; callers pass data columns
    only.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["schema_version," + ",".join(columns)]
    for row in rows:
        lines.append(",".join([str(CSV_SCHEMA_VERSION)] + [_fmt(v) for v in row]))
    path.write_text("\n".join(lines) + "\n")


def write_report(path, report: AuditReport) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n")


def emit_manifest(run_dir, out_path=None) -> dict:
    """JSON manifest of a run directory: per-file size and sha256.

    Log files (*.log) are excluded so that reruns with identical seeds have
    identical manifests; the manifest file itself is excluded too.
    """
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise FileNotFoundError(f"run directory {run_dir} does not exist")
    entries = []
    for p in sorted(run_dir.rglob("*")):
        if not p.is_file():
            continue
        if p.suffix == ".log" or p.name == "manifest.json":
            continue
        digest = hashlib.sha256(p.read_bytes()).hexdigest()
        entries.append(
            {
                "path": str(p.relative_to(run_dir)),
                "bytes": p.stat().st_size,
                "sha256": digest,
            }
        )
    manifest = {"schema_version": MANIFEST_SCHEMA_VERSION, "entries": entries}
    out_path = Path(out_path) if out_path else run_dir / "manifest.json"
    out_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def save_fields(path, lam: int, n_steps: int, blocks: Sequence[np.ndarray]) -> None:
    """Flat binary layout: header (magic, version, lam, n_steps, count),
    then little-endian complex64 coefficient blocks.

    Each block is one sample's coefficients with shape
    (n_modes, n_steps + 1); the mode order is the lexicographic cube
    enumeration used throughout the package.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(_FIELDS_MAGIC)
        fh.write(struct.pack("<III", 1, lam, n_steps))
        fh.write(struct.pack("<I", len(blocks)))
        for block in blocks:
            arr = np.ascontiguousarray(block, dtype=np.complex64)
            if arr.shape[-1] != n_steps + 1:
                raise ValueError("block time axis does not match n_steps")
            fh.write(arr.astype("<c8").tobytes())


def load_fields(path):
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != _FIELDS_MAGIC:
        raise ValueError("not a field dump (bad magic)")
    version, lam, n_steps = struct.unpack("<III", raw[4:16])
    (count,) = struct.unpack("<I", raw[16:20])
    del version
    body = np.frombuffer(raw[20:], dtype="<c8")
    per = body.size // count if count else 0
    blocks = [
        body[i * per : (i + 1) * per].reshape(-1, n_steps + 1) for i in range(count)
    ]
    return lam, n_steps, blocks
