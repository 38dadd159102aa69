"""Renderers for the five figure kinds produced from simulator outputs.

Every plotted number is read from an input file (trajectory/aggregate CSVs,
ensemble JSONs, spectrum CSVs, state-snapshot JSONs, analytic-curve CSVs);
nothing is recomputed here.  Outputs are deterministic: fixed figure geometry,
no timestamps or software tags in the image metadata.
"""

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

KINDS = ("timeseries", "spectrum", "histogram", "sweep", "matrix_heatmap")


class SchemaError(ValueError):
    """An input file does not match the expected simulator schema."""

    def __init__(self, message: str, path: str = "", fieldname: str = ""):
        self.path = path
        self.fieldname = fieldname
        where = f" [{path}{':' + fieldname if fieldname else ''}]" if path else ""
        super().__init__(message + where)


@dataclass
class FigureSpec:
    kind: str
    inputs: list
    style: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"unknown figure kind {self.kind!r}; "
                              f"expected one of {KINDS}")
        if not self.inputs:
            raise SchemaError("figure spec needs at least one input file")

    @classmethod
    def from_json(cls, path) -> "FigureSpec":
        doc = json.loads(Path(path).read_text())
        for key in ("kind", "inputs"):
            if key not in doc:
                raise SchemaError(f"missing key {key!r}", str(path), key)
        return cls(kind=doc["kind"], inputs=doc["inputs"],
                   style=doc.get("style", {}))


# ------------------------------------------------------------------ readers

def read_csv_columns(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise SchemaError("input file does not exist", str(path))
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or not rows[0]:
        raise SchemaError("empty CSV", str(path))
    header = rows[0]
    if header[0] != "t":
        raise SchemaError("first CSV column must be 't'", str(path), header[0])
    if len(rows) < 2:
        raise SchemaError("CSV has no data rows", str(path))
    data = np.array([[float(x) for x in row] for row in rows[1:]])
    return {name: data[:, i] for i, name in enumerate(header)}


def read_ensemble(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise SchemaError("input file does not exist", str(path))
    doc = json.loads(path.read_text())
    if doc.get("schema") != "ncqfsim-ensemble-v1":
        raise SchemaError("not an ncqfsim ensemble document", str(path), "schema")
    if not doc.get("metrics"):
        raise SchemaError("ensemble has no per-trajectory metrics", str(path),
                          "metrics")
    return doc


def read_states(path) -> list:
    path = Path(path)
    if not path.exists():
        raise SchemaError("input file does not exist", str(path))
    doc = json.loads(path.read_text())
    if doc.get("schema") != "ncqfsim-states-v1":
        raise SchemaError("not an ncqfsim state-snapshot document", str(path),
                          "schema")
    if not doc.get("snapshots"):
        raise SchemaError("no snapshots in file", str(path), "snapshots")
    out = []
    for item in doc["snapshots"]:
        rho = np.array(item["rho_re"]) + 1j * np.array(item["rho_im"])
        out.append((float(item["t"]), rho))
    return out


def read_scenario_eps(ensemble_path) -> float:
    """Input error of the run, from the scenario document beside the ensemble."""
    sc = Path(ensemble_path).parent / "scenario.json"
    if not sc.exists():
        raise SchemaError("scenario.json not found next to ensemble", str(sc))
    doc = json.loads(sc.read_text())
    try:
        return float(doc["initial_state"]["eps_in"])
    except KeyError as exc:
        raise SchemaError("scenario has no initial_state.eps_in", str(sc),
                          "initial_state") from exc


def read_analytic_csv(path) -> tuple:
    path = Path(path)
    if not path.exists():
        raise SchemaError("input file does not exist", str(path))
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["eps", "value"]:
        raise SchemaError("expected an 'eps,value' analytic table", str(path))
    data = np.array([[float(a), float(b)] for a, b in rows[1:]])
    return data[:, 0], data[:, 1]


# ---------------------------------------------------------------- renderers

def _new_figure(style):
    size = style.get("figsize", (6.0, 4.0))
    return plt.subplots(figsize=size, dpi=style.get("dpi", 120))


def _save(fig, out, style):
    out = Path(out)
    kw = {}
    if out.suffix == ".png":
        kw["metadata"] = {"Software": None}
    elif out.suffix == ".svg":
        matplotlib.rcParams["svg.hashsalt"] = "ncqf-plots"
        kw["metadata"] = {"Date": None}
    fig.savefig(out, **kw)
    plt.close(fig)


def _timeseries(spec, out):
    cols = read_csv_columns(spec.inputs[0])
    names = spec.style.get("columns")
    if names is None:
        names = [n for n in cols if n != "t"
                 and not n.startswith(("r_", "dW_", "N_"))]
    missing = [n for n in names if n not in cols]
    if missing:
        raise SchemaError(f"columns {missing} not in file", spec.inputs[0],
                          missing[0])
    inset_name = spec.style.get("inset")
    fig, ax = _new_figure(spec.style)
    for name in names:
        if name == inset_name:
            continue
        ax.plot(cols["t"], cols[name], label=name, linewidth=1.4)
    ax.set_xlabel("t (1/rate)")
    ax.set_ylabel(spec.style.get("ylabel", "value"))
    ax.legend(loc="center right", fontsize=8)
    ax.set_title(spec.style.get("title", Path(spec.inputs[0]).stem))
    if inset_name:
        if inset_name not in cols:
            raise SchemaError(f"inset column {inset_name!r} not in file",
                              spec.inputs[0], inset_name)
        ins = ax.inset_axes([0.55, 0.2, 0.4, 0.35])
        ins.plot(cols["t"], cols[inset_name], color="black", linewidth=1.2)
        ins.set_title(inset_name, fontsize=8)
        ins.tick_params(labelsize=7)
    _save(fig, out, spec.style)


def _spectrum(spec, out):
    cols = read_csv_columns(spec.inputs[0])
    branches = sorted({int(n[4:]) for n in cols if n.startswith("re_l")})
    if not branches:
        raise SchemaError("no re_l*/im_l* spectrum columns", spec.inputs[0])
    fig, ax = _new_figure(spec.style)
    cmap = plt.get_cmap("tab10")
    for k in branches:
        ax.plot(cols["t"], cols[f"re_l{k}"], color=cmap(k % 10),
                label=f"Re $\\lambda_{{{k}}}$", linewidth=1.4)
        ax.plot(cols["t"], cols[f"im_l{k}"], color=cmap(k % 10),
                linestyle=":", linewidth=1.2)
    ax.set_xlabel("t (1/rate)")
    ax.set_ylabel("eigenvalues of $-i H_{NC}$ (rate)")
    ax.legend(fontsize=8)
    ax.set_title(spec.style.get("title", "effective non-Hermitian spectrum"))
    _save(fig, out, spec.style)


def _histogram(spec, out):
    metric = spec.style.get("metric", "fid_F1L")
    fig, ax = _new_figure(spec.style)
    palettes = [("tab:orange", "///"), ("tab:blue", "ooo")]
    for path, (color, hatch) in zip(spec.inputs, palettes * len(spec.inputs)):
        doc = read_ensemble(path)
        if metric not in doc["metrics"]:
            raise SchemaError(f"metric {metric!r} not in ensemble", str(path),
                              metric)
        values = np.asarray(doc["metrics"][metric], dtype=float)
        values = values[np.isfinite(values)]
        label = spec.style.get("labels", {}).get(str(path), Path(path).parent.name)
        ax.hist(values, bins=spec.style.get("bins", 30),
                range=spec.style.get("range"), histtype="step", hatch=hatch,
                color=color, label=f"{label} (n={len(values)})", fill=False)
    ax.set_xlabel(metric)
    ax.set_ylabel("trajectories")
    ax.legend(fontsize=8)
    ax.set_title(spec.style.get("title", f"distribution of {metric}"))
    _save(fig, out, spec.style)


def _sweep(spec, out):
    metric = spec.style.get("metric", "success_fraction")
    analytic = [p for p in spec.inputs if str(p).endswith(".csv")]
    ensembles = [p for p in spec.inputs if not str(p).endswith(".csv")]
    if not ensembles:
        raise SchemaError("sweep needs at least one ensemble input")
    xs, ys, lo, hi = [], [], [], []
    for path in ensembles:
        doc = read_ensemble(path)
        xs.append(read_scenario_eps(path))
        if metric == "success_fraction":
            if doc.get("success_fraction") is None:
                raise SchemaError("ensemble has no postselection data",
                                  str(path), "success_fraction")
            ys.append(doc["success_fraction"])
            lo.append(np.nan)
            hi.append(np.nan)
        else:
            agg = doc.get("aggregates", {}).get(metric)
            if agg is None:
                raise SchemaError(f"aggregate {metric!r} missing", str(path),
                                  metric)
            ys.append(agg["p50"])
            lo.append(agg["p50"] - agg["p16"])
            hi.append(agg["p84"] - agg["p50"])
    order = np.argsort(xs)
    xs = np.asarray(xs)[order]
    ys = np.asarray(ys)[order]
    err = None
    if np.isfinite(lo).all():
        err = np.vstack([np.asarray(lo)[order], np.asarray(hi)[order]])
    fig, ax = _new_figure(spec.style)
    ax.errorbar(xs, ys, yerr=err, marker="o", linestyle="-",
                color="tab:blue", capsize=3, label=metric)
    for path in analytic:
        ax_x, ax_y = read_analytic_csv(path)
        ax.plot(ax_x, ax_y, color="black", linewidth=1.2,
                label=Path(path).stem)
    ax.set_xlabel("input error eps_in")
    ax.set_ylabel(metric)
    ax.legend(fontsize=8)
    ax.set_title(spec.style.get("title", f"{metric} vs input error"))
    _save(fig, out, spec.style)


def _matrix_heatmap(spec, out):
    states = read_states(spec.inputs[0])
    index = int(spec.style.get("index", -1))
    try:
        t, rho = states[index]
    except IndexError as exc:
        raise SchemaError(f"snapshot index {index} out of range",
                          spec.inputs[0], "index") from exc
    dim = rho.shape[0]
    # populations down the diagonal, Re coherences above, Im below
    disp = np.zeros((dim, dim))
    for i in range(dim):
        disp[i, i] = rho[i, i].real
        for j in range(i + 1, dim):
            disp[i, j] = rho[i, j].real
            disp[j, i] = rho[j, i].imag
    scale = max(np.max(np.abs(disp)), 1e-12)
    fig, ax = _new_figure({**spec.style,
                           "figsize": spec.style.get("figsize", (5.4, 4.6))})
    im = ax.imshow(disp, cmap="RdBu_r", vmin=-scale, vmax=scale)
    n = int(np.log2(dim)) if dim and not dim & (dim - 1) else None
    if n and dim <= 16:
        labels = ["".join("e" if (k >> (n - 1 - q)) & 1 == 0 else "g"
                          for q in range(n)) for k in range(dim)]
        ax.set_xticks(range(dim), labels, rotation=90, fontsize=7)
        ax.set_yticks(range(dim), labels, fontsize=7)
    fig.colorbar(im, ax=ax, shrink=0.85)
    ax.set_title(spec.style.get("title", f"state at t={t:g} "
                                "(diag: populations; upper: Re; lower: Im)"),
                 fontsize=9)
    _save(fig, out, spec.style)


_RENDERERS = {
    "timeseries": _timeseries,
    "spectrum": _spectrum,
    "histogram": _histogram,
    "sweep": _sweep,
    "matrix_heatmap": _matrix_heatmap,
}


def plot(spec: FigureSpec, out) -> int:
    """Render one figure; raises SchemaError on malformed inputs."""
    _RENDERERS[spec.kind](spec, out)
    return 0
