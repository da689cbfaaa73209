"""CLI contracts: config handling, reports, CSV round trips, exit codes."""

import json
import os

import numpy as np
import pytest

from slecap.cli import (RunConfig, config_from_args, emit_csv, main,
                        parse_config_file, read_csv, run)


def test_defaults_and_flag_override(tmp_path):
    cfg = config_from_args(["density-check", "--kappa", "3", "--seed", "9"])
    assert cfg.kappa == 3.0 and cfg.seed == 9
    assert cfg.x == 1.0 and cfg.t0 == 1.0 and cfg.dt == 1e-4 and cfg.N == 2000


def test_config_file_and_flag_priority(tmp_path):
    f = tmp_path / "run.cfg"
    f.write_text("kappa = 2.0\nseed = 4  # comment\nN=64\n")
    cfg = config_from_args(["density-check", "--config", str(f), "--seed", "5"])
    assert cfg.kappa == 2.0
    assert cfg.seed == 5      # flag wins
    assert cfg.N == 64


def test_bad_config_file(tmp_path):
    f = tmp_path / "bad.cfg"
    f.write_text("kappa 2.0\n")
    with pytest.raises(ValueError):
        parse_config_file(str(f))


def test_validation_errors_name_the_constraint(tmp_path):
    cfg = RunConfig(experiment="commutation", kappa=4.0, output_dir=str(tmp_path))
    rc = run(cfg)
    assert rc == 1
    cfg = RunConfig(experiment="reversibility", kappa=6.0, output_dir=str(tmp_path))
    assert run(cfg) == 1
    cfg = RunConfig(experiment="density-check", kappa=9.0, output_dir=str(tmp_path))
    assert run(cfg) == 1


def test_density_check_run_writes_report(tmp_path):
    rc = main(["density-check", "--kappa", "3", "--output-dir", str(tmp_path)])
    assert rc == 0
    payload = json.loads((tmp_path / "density_check.report.json").read_text())
    assert payload["verdict"] is True
    assert payload["config"]["kappa"] == 3.0
    assert payload["statistics"]["normalization_residual"]["value"] < 1e-6
    assert payload["statistics"]["mass_conservation_residual"]["value"] < 1e-5


def test_report_determinism_modulo_timestamp(tmp_path):
    a_dir = tmp_path / "a"
    b_dir = tmp_path / "b"
    for d in (a_dir, b_dir):
        rc = main(["sample", "--kappa", "4", "--N", "8", "--dt", "0.01",
                   "--seed", "7", "--output-dir", str(d)])
        assert rc == 0
    pa = json.loads((a_dir / "sample.report.json").read_text())
    pb = json.loads((b_dir / "sample.report.json").read_text())
    pa.pop("timestamp"), pb.pop("timestamp")
    pa["config"].pop("output_dir"), pb["config"].pop("output_dir")
    assert pa == pb
    assert (a_dir / "sample.samples.csv").read_text() == \
           (b_dir / "sample.samples.csv").read_text()


def test_env_var_overrides_output_dir_only(tmp_path, monkeypatch):
    env_dir = tmp_path / "env"
    monkeypatch.setenv("SLECAP_OUTPUT_DIR", str(env_dir))
    rc = main(["sample", "--kappa", "4", "--N", "4", "--dt", "0.01",
               "--output-dir", str(tmp_path / "ignored")])
    assert rc == 0
    assert (env_dir / "sample.report.json").exists()
    assert not (tmp_path / "ignored").exists()


def test_emit_csv_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    vals = rng.normal(size=(3, 13)) + 1j * rng.normal(size=(3, 13))
    meta = {"seed": 7, "x2": 1.0}
    path = tmp_path / "batch.csv"
    emit_csv(vals, meta, str(path))
    back, meta_back = read_csv(str(path))
    assert np.array_equal(back, vals)   # exact, not approximate
    assert np.all(meta_back["seed"] == 7.0)
    header = path.read_text().splitlines()[0].split(",")
    assert header[:2] == ["seed", "x2"]
    assert header[2:4] == ["p00_re", "p00_im"]
    assert len(header) == 2 + 26


def test_emit_csv_rejects_empty(tmp_path):
    with pytest.raises(ValueError):
        emit_csv(np.empty((0, 13)), {}, str(tmp_path / "x.csv"))
    assert not (tmp_path / "x.csv").exists()


def test_one_row_per_sample(tmp_path):
    vals = np.ones((1, 13)) + 1j
    path = tmp_path / "one.csv"
    emit_csv(vals, {"seed": 1}, str(path))
    lines = path.read_text().strip().splitlines()
    assert len(lines) == 2  # header + one data row
    assert len(lines[1].split(",")) == 1 + 26


def test_unknown_config_key_rejected(tmp_path):
    f = tmp_path / "run.cfg"
    f.write_text("bogus = 1\n")
    assert main(["density-check", "--config", str(f)]) == 1


def test_reversibility_run_report_fields(tmp_path):
    # reduced scale: verifies the report contract, not the statistics
    rc = main(["reversibility", "--kappa", "4", "--x", "1", "--N", "64",
               "--dt", "0.002", "--seed", "7", "--output-dir", str(tmp_path)])
    assert rc in (0, 2)
    payload = json.loads((tmp_path / "reversibility.report.json").read_text())
    assert "energy_p" in payload["statistics"]
    assert len(payload["statistics"]["energy_p"]["values"]) == 10
    assert isinstance(payload["verdict"], bool)
    assert payload["config"]["seed"] == 7
    assert payload["thresholds"]["p_threshold"] == 0.01
