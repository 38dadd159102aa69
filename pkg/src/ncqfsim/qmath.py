"""Dense complex operator algebra for small multi-qubit systems.

Everything downstream (feedback synthesis, trajectory integration, scenario
metrics) works with plain complex numpy arrays; this module provides the
constructors, the Hermitian eigensolver wrapper, a validated density-matrix
container with a cached eigendecomposition, and the state metrics
(concurrence, fidelity) used by the two-qubit and five-qubit scenarios.

Conventions: |e> = |0> is the +1 eigenvector of sigma_z; the leftmost factor
of a tensor product is qubit 0 and the slowest-varying index.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SI", "SX", "SY", "SZ", "SM", "SP", "MAX_DIM",
    "UsageError", "dag", "kron", "pauli_string", "ket", "bell_state",
    "hadamard_n", "EigDecomposition", "herm_eig", "QuantumState",
    "concurrence", "fidelity",
]

SI = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
SM = np.array([[0, 0], [1, 0]], dtype=complex)   # sigma_-, lowers |e> -> |g>
SP = np.array([[0, 1], [0, 0]], dtype=complex)   # sigma_+

_PAULI = {"I": SI, "X": SX, "Y": SY, "Z": SZ}

# Practical cap on Hilbert dimension for the dense constructors (>= 5 qubits
# is never needed here; raise explicitly if you know what you are doing).
MAX_DIM = 64


class UsageError(ValueError):
    """Caller violated a documented precondition."""


def dag(op: np.ndarray) -> np.ndarray:
    return op.conj().T


def kron(ops) -> np.ndarray:
    """Tensor product of a nonempty list of operators, left factor slowest."""
    ops = list(ops)
    if not ops:
        raise UsageError("kron() needs at least one operator")
    out = np.asarray(ops[0], dtype=complex)
    for op in ops[1:]:
        out = np.kron(out, np.asarray(op, dtype=complex))
    if out.shape[0] > MAX_DIM:
        raise UsageError(f"dimension {out.shape[0]} exceeds MAX_DIM={MAX_DIM}")
    return out


def pauli_string(spec: str) -> np.ndarray:
    """Tensor product of single-qubit Paulis, e.g. "XZZXI" (qubit 0 leftmost)."""
    if not spec:
        raise UsageError("empty Pauli string")
    bad = set(spec) - set("IXYZ")
    if bad:
        raise UsageError(f"invalid Pauli characters {sorted(bad)!r} in {spec!r}")
    return kron([_PAULI[c] for c in spec])


def ket(label: str) -> np.ndarray:
    """Computational basis vector from a label over {e,g} or {0,1}."""
    bits = []
    for c in label:
        if c in "e0":
            bits.append(0)
        elif c in "g1":
            bits.append(1)
        else:
            raise UsageError(f"invalid ket label character {c!r}")
    idx = int("".join(map(str, bits)), 2) if bits else 0
    v = np.zeros(2 ** len(bits), dtype=complex)
    v[idx] = 1.0
    return v


def bell_state(name: str) -> np.ndarray:
    """One of the four Bell states: phi+/phi- ~ |ee>+-|gg>, psi+/psi- ~ |eg>+-|ge>."""
    sign = {"+": 1.0, "-": -1.0}[name[-1]]
    if name[:-1] == "phi":
        return (ket("ee") + sign * ket("gg")) / np.sqrt(2)
    if name[:-1] == "psi":
        return (ket("eg") + sign * ket("ge")) / np.sqrt(2)
    raise UsageError(f"unknown Bell state {name!r}")


def hadamard_n(n: int) -> np.ndarray:
    """n-fold tensor power of the Hadamard gate; Hermitian and unitary."""
    if n < 1:
        raise UsageError("hadamard_n needs n >= 1")
    h1 = (SX + SZ) / np.sqrt(2)
    return kron([h1] * n)


@dataclass
class EigDecomposition:
    """Hermitian eigendecomposition with eigenvalues sorted descending."""

    values: np.ndarray
    vectors: np.ndarray            # orthonormal columns, vectors[:, k] <-> values[k]
    degeneracy_tol: float = 1e-9   # relative to the spectral radius

    @property
    def dim(self) -> int:
        return len(self.values)

    def reconstruct(self) -> np.ndarray:
        return (self.vectors * self.values) @ dag(self.vectors)

    def degenerate_blocks(self, tol: float | None = None) -> list[tuple[int, int]]:
        """Half-open index ranges of (near-)degenerate eigenvalue groups."""
        tol = self.degeneracy_tol if tol is None else tol
        scale = max(abs(self.values[0]) if self.dim else 0.0, 1e-300)
        blocks = []
        start = 0
        for i in range(1, self.dim):
            if self.values[i - 1] - self.values[i] > tol * scale:
                blocks.append((start, i))
                start = i
        blocks.append((start, self.dim))
        return blocks


def herm_eig(op: np.ndarray, hermitian_tol: float = 1e-9,
             degeneracy_tol: float = 1e-9) -> EigDecomposition:
    """Eigendecomposition of a Hermitian operator, eigenvalues descending.

    Raises UsageError on non-Hermitian input (the general eigensolver for the
    non-Hermitian effective Hamiltonian lives in the nhh module).
    """
    op = np.asarray(op, dtype=complex)
    defect = np.max(np.abs(op - dag(op)))
    scale = max(np.max(np.abs(op)), 1.0)
    if defect > hermitian_tol * scale:
        raise UsageError(f"herm_eig: input is not Hermitian (defect {defect:.3e})")
    w, v = np.linalg.eigh(0.5 * (op + dag(op)))
    order = np.argsort(w)[::-1]
    return EigDecomposition(values=w[order].copy(), vectors=v[:, order].copy(),
                            degeneracy_tol=degeneracy_tol)


@dataclass
class QuantumState:
    """Density matrix with validation and a lazily cached eigendecomposition."""

    rho: np.ndarray
    purity_tol: float = 1e-7
    _eig: EigDecomposition | None = field(default=None, repr=False, compare=False)

    @classmethod
    def from_ket(cls, psi: np.ndarray, **kw) -> "QuantumState":
        psi = np.asarray(psi, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return cls(rho=np.outer(psi, psi.conj()), **kw)

    @property
    def dim(self) -> int:
        return self.rho.shape[0]

    @property
    def eig(self) -> EigDecomposition:
        if self._eig is None:
            self._eig = herm_eig(self.rho, hermitian_tol=1e-6)
        return self._eig

    def purity(self) -> float:
        return float(np.trace(self.rho @ self.rho).real)

    def is_pure(self) -> bool:
        return self.purity() >= 1.0 - self.purity_tol

    def expect(self, op: np.ndarray) -> float:
        return float(np.trace(op @ self.rho).real)

    def validate(self, trace_tol: float = 1e-9, herm_tol: float = 1e-12,
                 eig_floor: float = -1e-9) -> None:
        """Check unit trace, Hermiticity, and positivity; raise UsageError if violated."""
        tr = np.trace(self.rho).real
        if abs(tr - 1.0) > trace_tol:
            raise UsageError(f"state trace {tr} outside [1-{trace_tol}, 1+{trace_tol}]")
        if np.max(np.abs(self.rho - dag(self.rho))) > herm_tol:
            raise UsageError("state is not Hermitian within tolerance")
        if np.min(self.eig.values) < eig_floor:
            raise UsageError(f"state has eigenvalue {np.min(self.eig.values)} < {eig_floor}")


def concurrence(state: QuantumState | np.ndarray) -> float:
    """Wootters two-qubit concurrence of a (possibly mixed) 4x4 density matrix.

    Evaluated through the Hermitian form sqrt(rho) rho~ sqrt(rho), which is
    similar to rho rho~ but keeps the eigenvalue problem well conditioned.
    """
    rho = state.rho if isinstance(state, QuantumState) else np.asarray(state, dtype=complex)
    if rho.shape != (4, 4):
        raise UsageError("concurrence is defined for two qubits (dim 4)")
    yy = np.kron(SY, SY)
    w, v = np.linalg.eigh(0.5 * (rho + dag(rho)))
    sqrt_rho = (v * np.sqrt(np.clip(w, 0.0, None))) @ dag(v)
    # the Wootters lambdas are the singular values of sqrt(rho) YY sqrt(rho)*,
    # computed without squaring so rank-deficient states stay accurate
    lam = np.linalg.svd(sqrt_rho @ yy @ sqrt_rho.conj(), compute_uv=False)
    return float(max(0.0, 2.0 * lam[0] - lam.sum()))


def fidelity(state: QuantumState | np.ndarray, target: np.ndarray) -> float:
    """Overlap <target|rho|target> with a pure target vector."""
    rho = state.rho if isinstance(state, QuantumState) else np.asarray(state, dtype=complex)
    target = np.asarray(target, dtype=complex)
    if rho.shape[0] != target.shape[0]:
        raise UsageError(f"dimension mismatch: state {rho.shape[0]}, target {target.shape[0]}")
    return float(np.vdot(target, rho @ target).real)
