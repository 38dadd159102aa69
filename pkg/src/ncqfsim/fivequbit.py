"""Five-qubit code artifacts for continuous magic state distillation.

The magic state |F0> = cos(b)|0> + e^{i pi/4} sin(b)|1> with cos(2b) = 1/sqrt(3)
enables a pi/6 gate by teleportation; |F1> = sigma_y H |F0> is its orthogonal
partner.  Projecting five noisy copies onto the +1 joint eigenspace of the
[[5,1,3]] stabilizers and decoding distills a sharper |F0>.  The decode here
is the logical-level isometry |F1_L> -> |F0>, |F0_L> -> |F1>; physical Clifford
decode circuits are out of scope.
"""

from dataclasses import dataclass

import numpy as np

from .qmath import SX, SY, SZ, UsageError, dag, pauli_string

__all__ = [
    "STABILIZER_STRINGS", "stabilizers", "magic_states", "codespace_projector",
    "logical_states", "DecodeResult", "msd_decode", "noisy_magic_state",
]

STABILIZER_STRINGS = ("XZZXI", "IXZZX", "XIXZZ", "ZXIXZ")


def stabilizers() -> list[np.ndarray]:
    """The four generators of the [[5,1,3]] stabilizer group."""
    return [pauli_string(s) for s in STABILIZER_STRINGS]


def magic_states() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(|F0>, |F1>, F) with F the dephasing unitary whose uniform application
    with 1 and F^dag (1/3 each) dephases any qubit state toward the F axis."""
    beta = 0.5 * np.arccos(1.0 / np.sqrt(3.0))
    f0 = np.array([np.cos(beta), np.exp(1j * np.pi / 4) * np.sin(beta)])
    hadamard = (SX + SZ) / np.sqrt(2)
    f1 = SY @ hadamard @ f0
    f_gate = (np.exp(1j * np.pi / 4) / np.sqrt(2)) * np.array([[1, 1], [1j, -1j]])
    return f0, f1, f_gate


def codespace_projector() -> np.ndarray:
    """Pi = (1/16) prod_j (1 + S_j): rank-2 projector onto the +1 syndrome sector."""
    pi = np.eye(32, dtype=complex)
    for s in stabilizers():
        pi = pi @ (np.eye(32) + s) / 2.0
    return pi


def logical_states() -> tuple[np.ndarray, np.ndarray]:
    """(|F0_L>, |F1_L>): |F1_L> = sqrt(6) Pi |F0>^x5 and |F0_L> = sqrt(6) Pi |F1>^x5."""
    f0, f1, _ = magic_states()
    pi = codespace_projector()
    f1l = pi @ _power5(f0)
    f0l = pi @ _power5(f1)
    return f0l / np.linalg.norm(f0l), f1l / np.linalg.norm(f1l)


def _power5(v: np.ndarray) -> np.ndarray:
    out = v
    for _ in range(4):
        out = np.kron(out, v)
    return out


def noisy_magic_state(eps_in: float, copies: int = 5) -> np.ndarray:
    """rho^(x copies) built from (1-eps)|F0><F0| + eps|F1><F1|."""
    if not 0.0 <= eps_in <= 1.0:
        raise UsageError(f"eps_in={eps_in} outside [0, 1]")
    f0, f1, _ = magic_states()
    rho1 = (1.0 - eps_in) * np.outer(f0, f0.conj()) + eps_in * np.outer(f1, f1.conj())
    rho = rho1
    for _ in range(copies - 1):
        rho = np.kron(rho, rho1)
    return rho


@dataclass
class DecodeResult:
    rho_out: np.ndarray          # decoded single-qubit state (normalized)
    eps_out: float               # 1 - <F0|rho_out|F0>
    support: float               # weight of the input on the codespace
    ok: bool                     # support above threshold


def msd_decode(five_qubit_rho: np.ndarray, support_threshold: float = 0.5
               ) -> DecodeResult:
    """Logical decode of a five-qubit state: |F1_L> -> |F0>, |F0_L> -> |F1>.

    Low codespace support is reported as a failed postselection (ok=False)
    rather than raised.
    """
    rho = np.asarray(five_qubit_rho, dtype=complex)
    if rho.shape != (32, 32):
        raise UsageError("msd_decode expects a five-qubit (32x32) state")
    f0, f1, _ = magic_states()
    f0l, f1l = logical_states()
    w = np.outer(f0, f1l.conj()) + np.outer(f1, f0l.conj())
    out = w @ rho @ dag(w)
    support = float(np.trace(out).real)
    if support <= 0.0:
        return DecodeResult(rho_out=np.zeros((2, 2), complex), eps_out=1.0,
                            support=0.0, ok=False)
    out = out / support
    eps_out = 1.0 - float(np.vdot(f0, out @ f0).real)
    return DecodeResult(rho_out=out, eps_out=eps_out, support=support,
                        ok=support >= support_threshold)
