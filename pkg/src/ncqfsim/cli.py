"""Command-line front end: scenario execution and analytic oracle queries.

`ncqfsim run` executes a scenario (built-in preset name or JSON document) and
writes a deterministic output directory:

    out/
      manifest.json    run provenance: config + digest, seed, version, timing
      scenario.json    the exact resolved scenario document
      ensemble.json    terminal metrics per trajectory + aggregates (p16/p50/p84)
      traj_0000.csv    sampled time series of saved trajectories
      aggregate.csv    across-trajectory mean/percentile time series (n_traj > 1)
      spectrum.csv     eigenvalue branches of -i H_NC (when tracking is on)

Exit codes: 0 success, 2 configuration/validation error, 3 integration error.
Errors are emitted as one JSON object on stderr.
"""

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .experiments import (PRESETS, build_preset, msd_eps_out_analytic,
                          msd_ps_analytic, preset_descriptions)
from .qmath import UsageError
from .scenarios import ConfigError, config_digest, resolve_scenario, validate_config
from .trajectory import (IntegrationError, run_ensemble, simulate_trajectory,
                         split_seed)

CSV_SCHEMA = "ncqfsim-csv-v1"


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(float(x)) for x in row) + "\n")


def _write_trajectory_csv(path: Path, record) -> None:
    headers = ["t"] + list(record.observables.keys())
    cols = [record.times] + [record.observables[k] for k in record.observables]
    for i, label in enumerate(record.channel_labels):
        headers.append(f"r_{label}")
        cols.append(record.readouts[:, i])
    for i, label in enumerate(record.channel_labels):
        headers.append(f"dW_{label}")
        cols.append(record.noise[:, i])
    if record.noise_residuals is not None:
        for i, label in enumerate(record.channel_labels):
            headers.append(f"N_{label}")
            cols.append(record.noise_residuals[:, i])
    _write_csv(path, headers, zip(*cols))


def _write_spectrum_csv(path: Path, spectra) -> None:
    dim = len(spectra[0].eigenvalues)
    headers = ["t"]
    for k in range(dim):
        headers += [f"re_l{k}", f"im_l{k}", f"branch_{k}"]
    rows = []
    for sp in spectra:
        row = [sp.time]
        for k in range(dim):
            row += [sp.eigenvalues[k].real, sp.eigenvalues[k].imag,
                    float(sp.branch_ids[k])]
        rows.append(row)
    _write_csv(path, headers, rows)


def _write_snapshot_json(path: Path, record) -> None:
    items = [{"t": float(t), "rho_re": rho.real.tolist(),
              "rho_im": rho.imag.tolist()} for t, rho in record.snapshots]
    path.write_text(json.dumps({"schema": "ncqfsim-states-v1",
                                "snapshots": items}, indent=1))


def _fail(kind: str, message: str, code: int, field: str | None = None) -> int:
    payload = {"error": {"type": kind, "message": message}}
    if field:
        payload["error"]["field"] = field
    print(json.dumps(payload), file=sys.stderr)
    return code


def _load_config(args) -> dict:
    params = {}
    for item in args.param or []:
        key, _, raw = item.partition("=")
        if not raw:
            raise ConfigError(f"--param expects key=value, got {item!r}")
        try:
            params[key] = json.loads(raw)
        except json.JSONDecodeError:
            params[key] = raw
    if args.config in PRESETS:
        config = build_preset(args.config, **params)
    else:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(
                f"{args.config!r} is neither a preset nor an existing file")
        if params:
            raise ConfigError("--param only applies to preset names")
        config = json.loads(path.read_text())
    if args.dt is not None:
        config["dt"] = args.dt
    if args.observable_stride is not None:
        config["observable_stride"] = args.observable_stride
    validate_config(config)
    return config


def cmd_run(args) -> int:
    try:
        config = _load_config(args)
    except ConfigError as exc:
        return _fail("config", str(exc), 2, getattr(exc, "path", None))
    except (UsageError, json.JSONDecodeError) as exc:
        return _fail("config", str(exc), 2)

    workers = args.workers
    if workers is None:
        workers = int(os.environ.get("NCQF_WORKERS", "1"))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    digest = config_digest(config)
    t0 = time.time()

    try:
        scenario = resolve_scenario(config)
        summary = run_ensemble(scenario, n_traj=args.trajectories,
                               master_seed=args.seed, workers=workers,
                               keep_series=not args.no_aggregate)
        saved = []
        for i in range(min(args.save_trajectories, args.trajectories)):
            rec = simulate_trajectory(scenario, split_seed(args.seed, i))
            name = f"traj_{i:04d}.csv"
            _write_trajectory_csv(out_dir / name, rec)
            saved.append((name, rec))
    except ConfigError as exc:
        return _fail("config", str(exc), 2, getattr(exc, "path", None))
    except UsageError as exc:
        return _fail("config", str(exc), 2)
    except IntegrationError as exc:
        return _fail("integration", str(exc), 3)

    inventory = ["manifest.json", "scenario.json", "ensemble.json"]
    inventory += [name for name, _ in saved]
    (out_dir / "scenario.json").write_text(
        json.dumps(config, indent=1, sort_keys=True))
    (out_dir / "ensemble.json").write_text(
        json.dumps(summary.to_jsonable(), indent=1, sort_keys=True))

    if not args.no_aggregate and summary.series_mean is not None \
            and args.trajectories > 1:
        headers = ["t"] + [f"mean_{k}" for k in summary.series_mean]
        cols = [summary.series_times] + list(summary.series_mean.values())
        _write_csv(out_dir / "aggregate.csv", headers, zip(*cols))
        inventory.append("aggregate.csv")
    if saved and saved[0][1].spectra:
        _write_spectrum_csv(out_dir / "spectrum.csv", saved[0][1].spectra)
        inventory.append("spectrum.csv")
    if saved and saved[0][1].snapshots:
        _write_snapshot_json(out_dir / "states_0000.json", saved[0][1])
        inventory.append("states_0000.json")

    manifest = {
        "schema": "ncqfsim-manifest-v1",
        "csv_schema": CSV_SCHEMA,
        "version": __version__,
        "config": config,
        "config_digest": digest,
        "master_seed": args.seed,
        "n_traj": args.trajectories,
        "dt": config["dt"],
        "workers": workers,
        "wall_clock_s": time.time() - t0,
        "outputs": sorted(inventory),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=1,
                                                      sort_keys=True))
    if summary.success_fraction is not None:
        print(f"{config['name']}: {args.trajectories} trajectories, "
              f"success fraction {summary.success_fraction:.4f}")
    else:
        print(f"{config['name']}: {args.trajectories} trajectories done")
    return 0


def cmd_analytic(args) -> int:
    fns = {"msd_ps": msd_ps_analytic, "msd_eps_out": msd_eps_out_analytic}
    fn = fns[args.quantity]
    try:
        values = [(eps, fn(eps)) for eps in args.eps]
    except UsageError as exc:
        return _fail("range", str(exc), 2)
    print("eps,value")
    for eps, val in values:
        print(f"{_fmt(eps)},{_fmt(val)}")
    return 0


def cmd_list(_args) -> int:
    for name, desc in preset_descriptions():
        print(f"{name:28s} {desc}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ncqfsim",
        description="diffusive quantum trajectories with noise-canceling feedback")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute a scenario and write outputs")
    run_p.add_argument("--config", required=True,
                       help="built-in preset name or path to a scenario JSON")
    run_p.add_argument("--param", action="append", metavar="KEY=VALUE",
                       help="preset builder override (repeatable)")
    run_p.add_argument("--trajectories", type=int, default=1)
    run_p.add_argument("--seed", type=int, default=0)
    run_p.add_argument("--dt", type=float, default=None)
    run_p.add_argument("--workers", type=int, default=None,
                       help="worker processes (default: NCQF_WORKERS or 1)")
    run_p.add_argument("--out", required=True, help="output directory")
    run_p.add_argument("--observable-stride", type=int, default=None)
    run_p.add_argument("--save-trajectories", type=int, default=1,
                       help="number of per-trajectory CSVs to write")
    run_p.add_argument("--no-aggregate", action="store_true",
                       help="skip the across-trajectory aggregate series")
    run_p.set_defaults(fn=cmd_run)

    an_p = sub.add_parser("analytic", help="closed-form distillation curves")
    an_p.add_argument("quantity", choices=["msd_ps", "msd_eps_out"])
    an_p.add_argument("eps", type=float, nargs="+")
    an_p.set_defaults(fn=cmd_analytic)

    ls_p = sub.add_parser("list", help="available presets")
    ls_p.set_defaults(fn=cmd_list)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
