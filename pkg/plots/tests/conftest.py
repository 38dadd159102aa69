import json
import shutil
import subprocess
import sys
from pathlib import Path

import pytest

NCQFSIM = shutil.which("ncqfsim") or [sys.executable, "-m", "ncqfsim.cli"]


def run_sim(*argv):
    cmd = ([NCQFSIM] if isinstance(NCQFSIM, str) else list(NCQFSIM)) + list(argv)
    res = subprocess.run(cmd, capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    return res


@pytest.fixture(scope="session")
def golden(tmp_path_factory):
    """Golden output directory produced by the simulator CLI."""
    root = tmp_path_factory.mktemp("golden")

    hp = root / "hp"
    run_sim("run", "--config", "half_parity", "--param", "duration=2.0",
            "--trajectories", "2", "--seed", "7", "--workers", "1",
            "--out", str(hp))

    # re-run the written scenario with state snapshots for the heatmap
    cfg = json.loads((hp / "scenario.json").read_text())
    cfg["snapshot_stride"] = 1000
    snap_cfg = root / "hp_snap.json"
    snap_cfg.write_text(json.dumps(cfg))
    hp_snap = root / "hp_snap"
    run_sim("run", "--config", str(snap_cfg), "--trajectories", "1",
            "--seed", "7", "--out", str(hp_snap))

    for eps in ("0.04", "0.12"):
        out = root / f"msd{eps.replace('.', '')}"
        run_sim("run", "--config", "msd", "--param", f"eps_in={eps}",
                "--param", "feedback_on=false", "--param", "t_final=0.5",
                "--trajectories", "6", "--seed", "3", "--workers", "2",
                "--no-aggregate", "--out", str(out))

    analytic = run_sim("analytic", "msd_ps", "0", "0.04", "0.08", "0.12")
    (root / "msd_ps.csv").write_text(analytic.stdout)
    return root
