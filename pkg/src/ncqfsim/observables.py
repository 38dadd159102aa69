"""Named observables evaluated along trajectories.

Each spec string expands to one or more (column_name, fn) pairs, where fn
maps the current QuantumState to a float.  Specs with parameters use a
"name:arg" form, e.g. "fid_basis:gg" or "signal:hp".
"""

import numpy as np

from . import fivequbit
from .feedback import MeasurementChannel
from .qmath import (QuantumState, SX, SY, SZ, UsageError, bell_state,
                    concurrence, fidelity, hadamard_n, ket)

__all__ = ["resolve_observables"]

_BELL_NAMES = ("phi_plus", "phi_minus", "psi_plus", "psi_minus")
_BELL_KEYS = ("phi+", "phi-", "psi+", "psi-")


def _ghz_targets() -> tuple[np.ndarray, np.ndarray]:
    """(full, half) four-qubit targets in the Hadamard-conjugated frame."""
    full = (ket("eeee") - ket("gggg")) / np.sqrt(2)
    psip = ket("eg") + ket("ge")
    half = (np.sqrt(3.0 / 8.0) * (ket("eeee") + ket("gggg"))
            - (ket("eegg") + ket("ggee") + np.kron(psip, psip)) / np.sqrt(24.0))
    return full, half


def resolve_observables(specs, dim: int, channels: list[MeasurementChannel]):
    """Expand observable spec strings into (name, fn) pairs for this scenario."""
    pairs = []
    for spec in specs:
        name, _, arg = spec.partition(":")
        if name == "bell_populations":
            if dim != 4:
                raise UsageError("bell_populations needs a two-qubit scenario")
            for label, key in zip(_BELL_NAMES, _BELL_KEYS):
                b = bell_state(key)
                pairs.append((f"p_{label}", _fid_fn(b)))
        elif name == "bell_fid_max":
            if dim != 4:
                raise UsageError("bell_fid_max needs a two-qubit scenario")
            bells = [bell_state(k) for k in _BELL_KEYS]

            def fn(state, bells=bells):
                return max(fidelity(state, b) for b in bells)
            pairs.append(("bell_fid_max", fn))
        elif name == "concurrence":
            pairs.append(("concurrence", concurrence))
        elif name == "purity":
            pairs.append(("purity", lambda state: state.purity()))
        elif name == "bloch":
            if dim != 2:
                raise UsageError("bloch needs a single-qubit scenario")
            for label, op in (("x", SX), ("y", SY), ("z", SZ)):
                pairs.append((f"bloch_{label}", _expect_fn(op)))
        elif name == "bloch_r":
            if dim != 2:
                raise UsageError("bloch_r needs a single-qubit scenario")

            def fn(state):
                return float(np.sqrt(sum(state.expect(op) ** 2
                                         for op in (SX, SY, SZ))))
            pairs.append(("bloch_r", fn))
        elif name == "fid_basis":
            target = ket(arg)
            if target.shape[0] != dim:
                raise UsageError(f"fid_basis:{arg} has wrong dimension for this scenario")
            pairs.append((f"fid_{arg}", _fid_fn(target)))
        elif name == "fid_bell":
            if dim != 4:
                raise UsageError("fid_bell needs a two-qubit scenario")
            pairs.append((f"fid_{arg.replace('+', 'plus').replace('-', 'minus')}",
                          _fid_fn(bell_state(arg))))
        elif name == "ghz_fid_full" or name == "ghz_fid_half":
            if dim != 16:
                raise UsageError(f"{name} needs a four-qubit scenario")
            full, half = _ghz_targets()
            target = full if name.endswith("full") else half
            h4 = hadamard_n(4)
            conj_target = h4 @ target  # fid(H rho H, t) = fid(rho, H t)
            pairs.append((name, _fid_fn(conj_target)))
        elif name == "stab_sum":
            if dim != 32:
                raise UsageError("stab_sum needs a five-qubit scenario")
            ops = fivequbit.stabilizers()

            def fn(state, ops=ops):
                return float(sum(state.expect(op) for op in ops))
            pairs.append(("stab_sum", fn))
        elif name == "fid_F1L":
            if dim != 32:
                raise UsageError("fid_F1L needs a five-qubit scenario")
            _, f1l = fivequbit.logical_states()
            pairs.append(("fid_F1L", _fid_fn(f1l)))
        elif name == "signal":
            matches = [ch for ch in channels if ch.label == arg]
            if not matches:
                raise UsageError(f"signal:{arg} does not match a channel label")
            ch = matches[0]
            pairs.append((f"signal_{arg}", _expect_fn(2.0 * ch.X)))
        elif name == "variance_x":
            matches = [ch for ch in channels if ch.label == arg]
            if not matches:
                raise UsageError(f"variance_x:{arg} does not match a channel label")
            ch = matches[0]

            def fn(state, x=ch.X, x2=ch.X @ ch.X):
                return state.expect(x2) - state.expect(x) ** 2
            pairs.append((f"variance_x_{arg}", fn))
        else:
            raise UsageError(f"unknown observable spec {spec!r}")
    return pairs


def _fid_fn(target: np.ndarray):
    def fn(state, target=target):
        return fidelity(state, target)
    return fn


def _expect_fn(op: np.ndarray):
    def fn(state, op=op):
        return state.expect(op)
    return fn
