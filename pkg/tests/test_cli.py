"""CLI contract: strict config, exit codes, rerun determinism, manifests."""

import json
import hashlib
from pathlib import Path

import numpy as np
import pytest

from kgmix.cli import main, load_config, ConfigError
from kgmix.reporting import emit_manifest, load_fields, save_fields, write_csv


def test_unknown_config_key_rejected(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"alpha_": 1.0}))
    rc = main(["window-scan", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert rc == 1
    assert "alpha_" in capsys.readouterr().err


def test_minimal_phase_audit_run(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n_scales": [8, 16], "contrast_scales": [8, 16, 32]}))
    out = tmp_path / "run"
    rc = main(["phase-audit", "--config", str(cfg), "--seed", "1", "--out", str(out)])
    assert rc == 0
    report = json.loads((out / "report.json").read_text())
    assert report["passed"] is True
    assert report["config"]["seed"] == 1
    assert (out / "phase_audit.csv").read_text().startswith("schema_version,")


def test_rerun_determinism_and_worker_independence(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n_scales": [8, 16], "contrast_scales": [8, 16, 32]}))
    outs = []
    for name, workers in (("a", "1"), ("b", "4")):
        out = tmp_path / name
        rc = main(
            ["phase-audit", "--config", str(cfg), "--seed", "7", "--out", str(out), "--workers", workers]
        )
        assert rc == 0
        outs.append((out / "phase_audit.csv").read_bytes())
    assert outs[0] == outs[1]


def test_workers_env_fallback(monkeypatch, tmp_path):
    monkeypatch.setenv("KGMIX_WORKERS", "not-a-number")
    rc = main(["window-scan", "--out", str(tmp_path / "w")])
    assert rc == 1


def test_audit_failure_exit_code(tmp_path):
    # an impossibly tight gap band forces an audit failure -> exit 2
    cfg = tmp_path / "cfg.json"
    cfg.write_text(
        json.dumps({"n_scales": [8], "gap_band": [0.99, 1.0], "contrast_scales": [8, 16, 32]})
    )
    rc = main(["phase-audit", "--config", str(cfg), "--out", str(tmp_path / "f")])
    assert rc == 2


def test_manifest_contract(tmp_path):
    run = tmp_path / "run"
    run.mkdir()
    empty = emit_manifest(run)
    assert empty["entries"] == []  # the manifest file itself is excluded

    write_csv(run / "data.csv", ["a", "b"], [[1, 2.5], [3, False]])
    manifest = emit_manifest(run)
    assert len(manifest["entries"]) == 1
    entry = manifest["entries"][0]
    digest = hashlib.sha256((run / "data.csv").read_bytes()).hexdigest()
    assert entry["sha256"] == digest

    (run / "noise.log").write_text("wall time: 1.23s\n")
    again = emit_manifest(run)
    assert [e["sha256"] for e in again["entries"]] == [digest]

    with pytest.raises(FileNotFoundError):
        emit_manifest(tmp_path / "missing")


def test_config_loader_defaults():
    cfg = load_config(None, {"seed": None})
    assert cfg["alpha"] == 1.0 and cfg["c1"] == 1.0 and cfg["c2"] == 2.0
    assert load_config(None, {"seed": 9})["seed"] == 9


def test_config_loader_rejects_non_object(tmp_path):
    bad = tmp_path / "arr.json"
    bad.write_text("[1, 2, 3]")
    with pytest.raises(ConfigError):
        load_config(str(bad), {})


def test_field_dump_roundtrip(tmp_path):
    blocks = [
        (np.arange(12).reshape(4, 3) + 1j * np.ones((4, 3))).astype(np.complex64),
        np.zeros((4, 3), dtype=np.complex64),
    ]
    path = tmp_path / "fields.bin"
    save_fields(path, lam=2, n_steps=2, blocks=blocks)
    lam, n_steps, loaded = load_fields(path)
    assert lam == 2 and n_steps == 2 and len(loaded) == 2
    assert np.array_equal(loaded[0], blocks[0])
    assert np.array_equal(loaded[1], blocks[1])
