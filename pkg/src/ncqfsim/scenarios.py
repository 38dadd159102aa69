"""Scenario configuration: JSON documents, validation, and resolution.

A scenario is a plain JSON-able dict (validated against SCENARIO_SCHEMA)
describing channels, initial state, feedback, open-loop drive, duration, and
outputs.  `resolve_scenario` turns it into a runtime `Scenario` holding dense
operators and callables.  Worker processes receive the dict and resolve it
locally, so everything that crosses process boundaries is picklable and the
content digest is well defined.

Operators are specified as complex-weighted sums of Pauli strings, which
covers every channel used here (collective sigma_z, lowering operators via
X -/+ iY, stabilizers, and I/Q quadrature mixtures).
"""

import hashlib
import json
from dataclasses import dataclass, field

import jsonschema
import numpy as np

from . import fivequbit
from .feedback import EigenbasisParams, FeedbackLaw, MeasurementChannel
from .observables import resolve_observables
from .qmath import (QuantumState, SX, SY, SZ, UsageError, bell_state, fidelity,
                    ket, pauli_string)

__all__ = [
    "SCENARIO_SCHEMA", "SCHEMA_VERSION", "validate_config", "config_digest",
    "Scenario", "PostselectRule", "resolve_scenario", "op_spec", "pauli_sum",
]

SCHEMA_VERSION = "ncqfsim-scenario-v1"

_COMPLEX = {"type": "array", "items": {"type": "number"},
            "minItems": 2, "maxItems": 2}

_OPSPEC = {
    "type": "object",
    "properties": {
        "kind": {"const": "pauli_sum"},
        "terms": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "properties": {"string": {"type": "string", "pattern": "^[IXYZ]+$"},
                               "coeff": _COMPLEX},
                "required": ["string", "coeff"],
                "additionalProperties": False,
            },
        },
        "scale": _COMPLEX,
    },
    "required": ["kind", "terms"],
    "additionalProperties": False,
}

_STATESPEC = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["plus_product", "basis", "bloch", "noisy_magic"]},
        "label": {"type": "string"},
        "x": {"type": "number"}, "y": {"type": "number"}, "z": {"type": "number"},
        "eps_in": {"type": "number", "minimum": 0, "maximum": 1},
    },
    "required": ["kind"],
}

_FEEDBACKSPEC = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["none", "basic", "eigenbasis", "restricted",
                          "population", "fixed"]},
        "omega_max": {"type": "number", "exclusiveMinimum": 0},
        "rank_tol": {"type": "number", "exclusiveMinimum": 0},
        "degen_tol": {"type": "number", "exclusiveMinimum": 0},
        "mode": {"enum": ["scalar", "multi"]},
        "thetas": {"type": "array", "items": _OPSPEC, "minItems": 1},
        "target": {"enum": ["F1L", "F0L"]},
        "omega_psi": {"type": "number"},
        "op": _OPSPEC,
    },
    "required": ["kind"],
    "additionalProperties": False,
}

SCENARIO_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "properties": {
        "schema": {"const": SCHEMA_VERSION},
        "name": {"type": "string", "minLength": 1},
        "description": {"type": "string"},
        "qubits": {"type": "integer", "minimum": 1, "maximum": 5},
        "duration": {"type": "number", "exclusiveMinimum": 0},
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "integrator": {"enum": ["sde", "ode"]},
        "channels": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "properties": {
                    "label": {"type": "string", "minLength": 1},
                    "eta": {"type": "number", "minimum": 0, "maximum": 1},
                    "op": _OPSPEC,
                },
                "required": ["label", "op"],
                "additionalProperties": False,
            },
        },
        "initial_state": _STATESPEC,
        "feedback": {"oneOf": [_FEEDBACKSPEC,
                               {"type": "array", "items": _FEEDBACKSPEC}]},
        "open_loop": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["none", "constant", "bell_peak_trigger"]},
                "op": _OPSPEC,
                "amplitude": {"type": "number"},
                "arm_threshold": {"type": "number"},
                "target": {"enum": ["phi+", "phi-", "psi+", "psi-"]},
            },
            "required": ["kind"],
            "additionalProperties": False,
        },
        "observables": {"type": "array", "items": {"type": "string"}},
        "observable_stride": {"type": "integer", "minimum": 1},
        "snapshot_stride": {"type": "integer", "minimum": 0},
        "track_spectrum": {"type": "boolean"},
        "record_noise": {"type": "boolean"},
        "postselect": {
            "type": ["object", "null"],
            "properties": {"metric": {"type": "string"},
                           "threshold": {"type": "number"}},
            "required": ["metric", "threshold"],
            "additionalProperties": False,
        },
        "terminal": {"type": "array", "items": {"enum": ["msd_decode"]}},
    },
    "required": ["schema", "name", "qubits", "duration", "dt", "channels",
                 "initial_state"],
    "additionalProperties": False,
}


class ConfigError(UsageError):
    """Scenario document failed validation; carries the offending field path."""

    def __init__(self, message: str, path: str = ""):
        self.path = path
        super().__init__(message if not path else f"{message} (at {path})")


def validate_config(config: dict) -> None:
    try:
        jsonschema.validate(config, SCENARIO_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path)
        raise ConfigError(exc.message, path) from exc
    n_ch = len(config["channels"])
    fb = config.get("feedback", {"kind": "none"})
    if isinstance(fb, list) and len(fb) != n_ch:
        raise ConfigError(f"feedback list has {len(fb)} entries for {n_ch} channels",
                          "feedback")
    labels = [c["label"] for c in config["channels"]]
    if len(set(labels)) != len(labels):
        raise ConfigError("channel labels must be unique", "channels")


def config_digest(config: dict) -> str:
    """sha256 over the canonical (sorted, compact) JSON serialization."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"),
                      ensure_ascii=True).encode()
    return hashlib.sha256(blob).hexdigest()


# ---------------------------------------------------------------- operators

def pauli_sum(terms, scale=1.0) -> dict:
    """Build a pauli_sum op spec: terms = [(string, coeff), ...]."""
    return {
        "kind": "pauli_sum",
        "terms": [{"string": s, "coeff": [complex(c).real, complex(c).imag]}
                  for s, c in terms],
        "scale": [complex(scale).real, complex(scale).imag],
    }


def op_spec(spec: dict, qubits: int) -> np.ndarray:
    """Dense operator from a pauli_sum spec; checks the qubit count."""
    if spec.get("kind") != "pauli_sum":
        raise ConfigError(f"unknown operator kind {spec.get('kind')!r}")
    out = None
    for term in spec["terms"]:
        if len(term["string"]) != qubits:
            raise ConfigError(
                f"Pauli string {term['string']!r} does not match {qubits} qubits")
        coeff = complex(term["coeff"][0], term["coeff"][1])
        mat = coeff * pauli_string(term["string"])
        out = mat if out is None else out + mat
    scale = spec.get("scale", [1.0, 0.0])
    return complex(scale[0], scale[1]) * out


def _initial_state(spec: dict, qubits: int) -> np.ndarray:
    dim = 2 ** qubits
    kind = spec["kind"]
    if kind == "plus_product":
        v = np.full(dim, 1.0 / np.sqrt(dim), dtype=complex)
        return np.outer(v, v.conj())
    if kind == "basis":
        v = ket(spec["label"])
        if v.shape[0] != dim:
            raise ConfigError(f"basis label {spec['label']!r} has wrong qubit count")
        return np.outer(v, v.conj())
    if kind == "bloch":
        if qubits != 1:
            raise ConfigError("bloch initial state needs one qubit")
        x, y, z = spec.get("x", 0.0), spec.get("y", 0.0), spec.get("z", 0.0)
        if x * x + y * y + z * z > 1.0 + 1e-12:
            raise ConfigError("Bloch vector outside the unit ball")
        return 0.5 * (np.eye(2) + x * SX + y * SY + z * SZ)
    if kind == "noisy_magic":
        if qubits != 5:
            raise ConfigError("noisy_magic initial state needs five qubits")
        return fivequbit.noisy_magic_state(spec["eps_in"], copies=5)
    raise ConfigError(f"unknown initial state kind {kind!r}")


def _feedback_law(spec: dict, qubits: int) -> FeedbackLaw:
    kind = spec["kind"]
    if kind in ("none", "basic"):
        return FeedbackLaw(kind)
    if kind == "eigenbasis":
        return FeedbackLaw("eigenbasis", params=EigenbasisParams(
            omega_max=spec.get("omega_max", 50.0),
            rank_tol=spec.get("rank_tol", 1e-10),
            degen_tol=spec.get("degen_tol", 1e-9)))
    if kind == "restricted":
        thetas = [op_spec(t, qubits) for t in spec["thetas"]]
        return FeedbackLaw("restricted", thetas=thetas,
                           mode=spec.get("mode", "scalar"))
    if kind == "population":
        f0l, f1l = fivequbit.logical_states()
        target = f1l if spec.get("target", "F1L") == "F1L" else f0l
        pi0 = np.outer(target, target.conj())
        return FeedbackLaw("population", target_projector=pi0,
                           omega_psi=spec.get("omega_psi", 0.0))
    if kind == "fixed":
        return FeedbackLaw("fixed", operator=op_spec(spec["op"], qubits))
    raise ConfigError(f"unknown feedback kind {kind!r}")


# ---------------------------------------------------------------- open loop

class _NoDrive:
    def __call__(self, t, state, memory):
        return None


class _ConstantDrive:
    def __init__(self, op):
        self.op = op

    def __call__(self, t, state, memory):
        return self.op


class _BellPeakTrigger:
    """Latch a constant drive at the first fidelity peak above a threshold.

    Arms once the fidelity with the target Bell state exceeds arm_threshold;
    latches (permanently) at the first non-increasing sample, i.e. when the
    bare dynamics strike the Bell state.
    """

    def __init__(self, op, target, arm_threshold):
        self.op = op
        self.target = target
        self.arm = arm_threshold

    def __call__(self, t, state, memory):
        if memory.get("drive_on_t") is not None:
            return self.op
        fid = fidelity(state, self.target)
        last = memory.get("trigger_last_fid", -1.0)
        if last > self.arm and fid <= last:
            memory["drive_on_t"] = t
            return self.op
        memory["trigger_last_fid"] = fid
        return None


def _open_loop(spec: dict | None, qubits: int):
    if spec is None or spec["kind"] == "none":
        return _NoDrive()
    if spec["kind"] == "constant":
        return _ConstantDrive(op_spec(spec["op"], qubits))
    if spec["kind"] == "bell_peak_trigger":
        if qubits != 2:
            raise ConfigError("bell_peak_trigger needs a two-qubit scenario")
        op = spec.get("amplitude", 1.0) * op_spec(spec["op"], qubits)
        return _BellPeakTrigger(op, bell_state(spec.get("target", "phi-")),
                                spec.get("arm_threshold", 0.99))
    raise ConfigError(f"unknown open_loop kind {spec['kind']!r}")


# ---------------------------------------------------------------- scenario

@dataclass
class PostselectRule:
    metric: str
    threshold: float

    def passes(self, terminal: dict) -> bool:
        return terminal.get(self.metric, -np.inf) > self.threshold


@dataclass
class Scenario:
    """Resolved runtime scenario; `config` is the validated source document."""

    config: dict
    name: str
    qubits: int
    channels: list
    feedback_laws: list
    open_loop: object
    rho0: np.ndarray
    duration: float
    dt: float
    integrator: str
    observable_pairs: list
    observable_stride: int
    snapshot_stride: int
    track_spectrum: bool
    record_noise: bool
    postselect: PostselectRule | None
    terminal_hooks: list = field(default_factory=list)

    @property
    def observable_names(self):
        return [name for name, _ in self.observable_pairs]

    @property
    def digest(self) -> str:
        return config_digest(self.config)

    def evaluate_observables(self, t, state: QuantumState, memory) -> list:
        return [fn(state) for _, fn in self.observable_pairs]

    def evaluate_terminal(self, state: QuantumState, record) -> dict:
        out = {name: float(series[-1])
               for name, series in record.observables.items()}
        for hook in self.terminal_hooks:
            if hook == "msd_decode":
                dec = fivequbit.msd_decode(state.rho)
                out["eps_out"] = dec.eps_out
                out["codespace_support"] = dec.support
            else:
                raise UsageError(f"unknown terminal hook {hook!r}")
        if self.postselect is not None:
            out["success"] = 1.0 if self.postselect.passes(out) else 0.0
        if "drive_on_t" in record.meta and record.meta["drive_on_t"] is not None:
            out["drive_on_t"] = float(record.meta["drive_on_t"])
        return out


def resolve_scenario(config: dict) -> Scenario:
    """Validate a scenario document and build the runtime objects."""
    validate_config(config)
    qubits = config["qubits"]
    dim = 2 ** qubits
    channels = [MeasurementChannel(L=op_spec(c["op"], qubits),
                                   eta=c.get("eta", 1.0), label=c["label"])
                for c in config["channels"]]
    fb = config.get("feedback", {"kind": "none"})
    if isinstance(fb, dict):
        # one shared law object lets the stepper batch identical synthesis
        laws = [_feedback_law(fb, qubits)] * len(channels)
    else:
        laws = [_feedback_law(spec, qubits) for spec in fb]
    rho0 = _initial_state(config["initial_state"], qubits)
    obs = resolve_observables(config.get("observables", []), dim, channels)
    ps = config.get("postselect")
    rule = PostselectRule(ps["metric"], ps["threshold"]) if ps else None
    return Scenario(
        config=config,
        name=config["name"],
        qubits=qubits,
        channels=channels,
        feedback_laws=laws,
        open_loop=_open_loop(config.get("open_loop"), qubits),
        rho0=rho0,
        duration=config["duration"],
        dt=config["dt"],
        integrator=config.get("integrator", "sde"),
        observable_pairs=obs,
        observable_stride=config.get("observable_stride", 1),
        snapshot_stride=config.get("snapshot_stride", 0),
        track_spectrum=config.get("track_spectrum", False),
        record_noise=config.get("record_noise", False),
        postselect=rule,
        terminal_hooks=list(config.get("terminal", [])),
    )
