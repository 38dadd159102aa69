import csv
import hashlib
import json

import numpy as np
import pytest

from ncqfplots.cli import main
from ncqfplots.figures import (FigureSpec, SchemaError, plot,
                               read_csv_columns, read_ensemble, read_states)


def sha256(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def spec_file(tmp_path, name, **doc):
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(doc))
    return path


def all_specs(golden):
    return {
        "timeseries": {"kind": "timeseries",
                       "inputs": [str(golden / "hp" / "traj_0000.csv")],
                       "style": {"columns": ["p_phi_plus", "p_phi_minus",
                                             "p_psi_plus", "p_psi_minus"],
                                 "inset": "concurrence",
                                 "title": "Bell populations"}},
        "spectrum": {"kind": "spectrum",
                     "inputs": [str(golden / "hp" / "spectrum.csv")]},
        "histogram": {"kind": "histogram",
                      "inputs": [str(golden / "msd012" / "ensemble.json"),
                                 str(golden / "msd004" / "ensemble.json")],
                      "style": {"metric": "fid_F1L", "bins": 12}},
        "sweep": {"kind": "sweep",
                  "inputs": [str(golden / "msd004" / "ensemble.json"),
                             str(golden / "msd012" / "ensemble.json"),
                             str(golden / "msd_ps.csv")],
                  "style": {"metric": "success_fraction"}},
        "matrix_heatmap": {"kind": "matrix_heatmap",
                           "inputs": [str(golden / "hp_snap"
                                          / "states_0000.json")],
                           "style": {"index": -1}},
    }


def test_acceptance_all_kinds_pixel_stable(golden, tmp_path):
    """[SECONDARY] render every figure kind twice; hashes must match."""
    for kind, doc in all_specs(golden).items():
        spec = spec_file(tmp_path, kind, **doc)
        out_a = tmp_path / f"{kind}_a.png"
        out_b = tmp_path / f"{kind}_b.png"
        assert main(["render", str(spec), str(out_a)]) == 0
        assert main(["render", str(spec), str(out_b)]) == 0
        assert out_a.stat().st_size > 2000
        ha, hb = sha256(out_a), sha256(out_b)
        assert ha == hb, f"{kind} render is not pixel-stable"
        print(f"[PASS] plots-{kind}: stable hash {ha[:12]}")


def test_svg_output_also_stable(golden, tmp_path):
    doc = all_specs(golden)["timeseries"]
    spec = spec_file(tmp_path, "ts_svg", **doc)
    outs = [tmp_path / "x.svg", tmp_path / "y.svg"]
    for out in outs:
        assert main(["render", str(spec), str(out)]) == 0
    assert sha256(outs[0]) == sha256(outs[1])


def test_plotted_values_come_from_file(golden):
    # the reader hands back exactly the file contents, nothing recomputed
    path = golden / "hp" / "traj_0000.csv"
    cols = read_csv_columns(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    raw = np.array([[float(x) for x in row] for row in rows[1:]])
    for i, name in enumerate(header):
        assert np.array_equal(cols[name], raw[:, i])


def test_ensemble_reader_roundtrip(golden):
    doc = read_ensemble(golden / "msd012" / "ensemble.json")
    raw = json.loads((golden / "msd012" / "ensemble.json").read_text())
    assert doc["metrics"] == raw["metrics"]


def test_states_reader(golden):
    states = read_states(golden / "hp_snap" / "states_0000.json")
    raw = json.loads((golden / "hp_snap" / "states_0000.json").read_text())
    t, rho = states[-1]
    assert t == raw["snapshots"][-1]["t"]
    assert np.allclose(rho.real, np.array(raw["snapshots"][-1]["rho_re"]))
    assert abs(np.trace(rho) - 1.0) < 1e-9


def test_empty_trajectory_set_exits_2(tmp_path, capsys):
    bad = tmp_path / "ens.json"
    bad.write_text(json.dumps({"schema": "ncqfsim-ensemble-v1", "metrics": {}}))
    spec = spec_file(tmp_path, "h", kind="histogram", inputs=[str(bad)])
    assert main(["render", str(spec), str(tmp_path / "o.png")]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"]["type"] == "schema"
    assert "metrics" in err["error"]["field"] or "metrics" in err["error"]["message"]


def test_schema_mismatch_diagnostics(tmp_path, capsys):
    wrong = tmp_path / "wrong.json"
    wrong.write_text(json.dumps({"schema": "something-else", "metrics": {"a": [1]}}))
    spec = spec_file(tmp_path, "h2", kind="histogram", inputs=[str(wrong)])
    assert main(["render", str(spec), str(tmp_path / "o.png")]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"]["field"] == "schema"


def test_missing_column_exit_2(golden, tmp_path, capsys):
    doc = {"kind": "timeseries",
           "inputs": [str(golden / "hp" / "traj_0000.csv")],
           "style": {"columns": ["not_a_column"]}}
    spec = spec_file(tmp_path, "bad_col", **doc)
    assert main(["render", str(spec), str(tmp_path / "o.png")]) == 2


def test_unknown_kind_rejected(tmp_path):
    with pytest.raises(SchemaError):
        FigureSpec(kind="pie", inputs=["x"])
    with pytest.raises(SchemaError):
        FigureSpec(kind="sweep", inputs=[])


def test_sweep_needs_scenario_sibling(golden, tmp_path, capsys):
    orphan = tmp_path / "ensemble.json"
    orphan.write_text((golden / "msd012" / "ensemble.json").read_text())
    spec = spec_file(tmp_path, "sw", kind="sweep", inputs=[str(orphan)],
                     style={"metric": "success_fraction"})
    assert main(["render", str(spec), str(tmp_path / "o.png")]) == 2


def test_heatmap_index_out_of_range(golden, tmp_path, capsys):
    doc = {"kind": "matrix_heatmap",
           "inputs": [str(golden / "hp_snap" / "states_0000.json")],
           "style": {"index": 99}}
    spec = spec_file(tmp_path, "hm", **doc)
    assert main(["render", str(spec), str(tmp_path / "o.png")]) == 2
