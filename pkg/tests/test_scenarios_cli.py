import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from ncqfsim.cli import main
from ncqfsim.experiments import build_preset
from ncqfsim.qmath import SM, SI, kron
from ncqfsim.scenarios import (ConfigError, config_digest, op_spec, pauli_sum,
                               resolve_scenario, validate_config)


# ---------------------------------------------------------------- op specs

def test_pauli_sum_lowering_operator():
    spec = pauli_sum([("XI", 0.5), ("YI", -0.5j)])
    op = op_spec(spec, qubits=2)
    assert np.allclose(op, kron([SM, SI]))


def test_op_spec_scale_complex():
    spec = pauli_sum([("Z", 1.0)], scale=2.0j)
    assert np.allclose(op_spec(spec, 1), 2.0j * np.diag([1.0, -1.0]))


def test_op_spec_qubit_mismatch():
    with pytest.raises(ConfigError):
        op_spec(pauli_sum([("ZZ", 1.0)]), qubits=3)


# --------------------------------------------------------------- validation

def test_validate_rejects_bad_field():
    cfg = build_preset("half_parity")
    cfg["dt"] = -1.0
    with pytest.raises(ConfigError) as err:
        validate_config(cfg)
    assert "dt" in str(err.value)


def test_validate_rejects_unknown_key():
    cfg = build_preset("half_parity")
    cfg["frobnicate"] = True
    with pytest.raises(ConfigError):
        validate_config(cfg)


def test_validate_feedback_count():
    cfg = build_preset("fluorescence")
    cfg["feedback"] = [{"kind": "basic"}]  # 2 channels want 2 laws
    with pytest.raises(ConfigError):
        validate_config(cfg)


def test_validate_duplicate_labels():
    cfg = build_preset("fluorescence")
    cfg["channels"][1]["label"] = cfg["channels"][0]["label"]
    with pytest.raises(ConfigError):
        validate_config(cfg)


def test_digest_stability():
    cfg = build_preset("half_parity")
    d1 = config_digest(cfg)
    d2 = config_digest(json.loads(json.dumps(cfg)))
    assert d1 == d2
    cfg["dt"] = 2e-3
    assert config_digest(cfg) != d1


def test_resolve_scenario_shared_feedback_object():
    s = resolve_scenario(build_preset("msd"))
    assert len(s.feedback_laws) == 4
    assert all(law is s.feedback_laws[0] for law in s.feedback_laws)


# --------------------------------------------------------------------- CLI

def run_cli(*argv):
    return main(list(argv))


def test_cli_list(capsys):
    assert run_cli("list") == 0
    out = capsys.readouterr().out
    for name in ("half_parity", "fluorescence", "ghz_full", "purification", "msd"):
        assert name in out
    assert len(out.strip().splitlines()) >= 5


def test_cli_analytic_ps(capsys):
    assert run_cli("analytic", "msd_ps", "0") == 0
    out = capsys.readouterr().out.strip().splitlines()
    assert out[0] == "eps,value"
    assert float(out[1].split(",")[1]) == pytest.approx(1.0 / 6.0, abs=1e-12)


def test_cli_analytic_eps_out_fixed_point(capsys):
    assert run_cli("analytic", "msd_eps_out", "0", "0.173") == 0
    rows = capsys.readouterr().out.strip().splitlines()[1:]
    assert float(rows[0].split(",")[1]) == 0.0
    eps, val = map(float, rows[1].split(","))
    assert val == pytest.approx(eps, abs=2e-3)


def test_cli_analytic_range_error(capsys):
    assert run_cli("analytic", "msd_ps", "1.5") == 2
    err = capsys.readouterr().err
    assert json.loads(err)["error"]["type"] == "range"


def test_cli_run_invalid_config(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    cfg = build_preset("half_parity")
    cfg["qubits"] = 9
    bad.write_text(json.dumps(cfg))
    code = run_cli("run", "--config", str(bad), "--out", str(tmp_path / "o"))
    assert code == 2
    payload = json.loads(capsys.readouterr().err)
    assert payload["error"]["type"] == "config"
    assert "qubits" in payload["error"].get("field", "") or \
        "qubits" in payload["error"]["message"]


def test_cli_run_unknown_config(tmp_path, capsys):
    assert run_cli("run", "--config", "not_a_preset",
                   "--out", str(tmp_path / "o")) == 2


def test_cli_run_outputs_and_determinism(tmp_path, capsys):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    for out in (out1, out2):
        code = run_cli("run", "--config", "half_parity",
                       "--param", "duration=0.2",
                       "--trajectories", "3", "--seed", "7",
                       "--workers", "1", "--out", str(out))
        assert code == 0
    for name in ("manifest.json", "scenario.json", "ensemble.json",
                 "traj_0000.csv", "aggregate.csv", "spectrum.csv"):
        assert (out1 / name).exists(), name
    # byte-identical data outputs for identical config+seed
    for name in ("traj_0000.csv", "ensemble.json", "aggregate.csv",
                 "spectrum.csv", "scenario.json"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name
    manifest = json.loads((out1 / "manifest.json").read_text())
    assert manifest["config_digest"] == config_digest(manifest["config"])
    assert manifest["master_seed"] == 7
    assert set(manifest["outputs"]) >= {"manifest.json", "ensemble.json",
                                        "traj_0000.csv"}


def test_cli_run_roundtrip_from_manifest(tmp_path, capsys):
    out1 = tmp_path / "first"
    assert run_cli("run", "--config", "half_parity", "--param", "duration=0.1",
                   "--trajectories", "2", "--seed", "3",
                   "--out", str(out1)) == 0
    manifest = json.loads((out1 / "manifest.json").read_text())
    cfg_path = tmp_path / "replay.json"
    cfg_path.write_text(json.dumps(manifest["config"]))
    out2 = tmp_path / "second"
    assert run_cli("run", "--config", str(cfg_path), "--trajectories", "2",
                   "--seed", "3", "--out", str(out2)) == 0
    assert (out1 / "ensemble.json").read_bytes() == (out2 / "ensemble.json").read_bytes()
    assert (out1 / "traj_0000.csv").read_bytes() == (out2 / "traj_0000.csv").read_bytes()


def test_cli_run_terminal_concurrence_column(tmp_path, capsys):
    out = tmp_path / "hp"
    assert run_cli("run", "--config", "half_parity",
                   "--trajectories", "1", "--seed", "7", "--out", str(out)) == 0
    lines = (out / "traj_0000.csv").read_text().strip().splitlines()
    header = lines[0].split(",")
    idx = header.index("concurrence")
    last = lines[-1].split(",")
    assert float(last[idx]) >= 0.999
    assert header[0] == "t"
    assert "r_hp" in header and "dW_hp" in header


def test_cli_float_formatting_17_digits(tmp_path):
    out = tmp_path / "x"
    assert run_cli("run", "--config", "half_parity", "--param", "duration=0.05",
                   "--trajectories", "1", "--seed", "1", "--out", str(out)) == 0
    third_row = (out / "traj_0000.csv").read_text().splitlines()[2]
    values = third_row.split(",")
    # representative value keeps full double precision round-trip
    assert float(values[1]) == float(f"{float(values[1]):.17g}")


def test_cli_entry_point_subprocess(tmp_path):
    res = subprocess.run([sys.executable, "-m", "ncqfsim.cli", "list"],
                         capture_output=True, text=True)
    assert res.returncode == 0
    assert "half_parity" in res.stdout
