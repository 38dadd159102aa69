"""Effective non-Hermitian Hamiltonian of the noise-canceled dynamics.

When the noise-cancellation condition holds, the conditional state obeys
|psi_dot> = -i H_NC |psi> with the state-dependent generator

  H_NC = Omega + sum_c [ omega_c L_c - (i/2)(L_c^dag L_c + omega_c^2)
                         + (i/2) s_c (L_c + i omega_c - s_c/4) ].

Real parts of the eigenvalues of -i H_NC are gain/loss rates of the
associated right eigenvectors; imaginary parts are oscillation frequencies.
`spectrum_track` follows eigenvalue branches over time by eigenvector
overlap, which is what the spectrum plots consume.
"""

from dataclasses import dataclass, field

import numpy as np

from .feedback import MeasurementChannel
from .qmath import QuantumState, dag

__all__ = ["build_hnc", "noise_operator", "NhhSpectrum", "spectrum_track"]


def noise_operator(channel: MeasurementChannel, omega: np.ndarray) -> np.ndarray:
    """Xi = L - i omega; under the pure-state NCC, Xi|psi> = (s/2 - i omega_psi)|psi>."""
    return channel.L - 1j * omega


def build_hnc(state: QuantumState, channels: list[MeasurementChannel],
              omegas: list[np.ndarray],
              omega_open_loop: np.ndarray | None = None) -> np.ndarray:
    """Assemble H_NC for the current state, feedback set, and open-loop drive."""
    dim = state.dim
    h = np.zeros((dim, dim), dtype=complex)
    if omega_open_loop is not None:
        h = h + omega_open_loop
    eye = np.eye(dim)
    for ch, om in zip(channels, omegas):
        s = 2.0 * np.trace(ch.X @ state.rho).real
        h = h + om @ ch.L - 0.5j * (ch.LdL + om @ om)
        h = h + 0.5j * s * (ch.L + 1j * om - 0.25 * s * eye)
    return h


@dataclass
class NhhSpectrum:
    """Eigenvalues of -i H_NC at one time, with branch labels continuous in time."""

    time: float
    eigenvalues: np.ndarray        # complex, ordered by branch id
    right_eigenvectors: np.ndarray  # columns, unit norm, phase-fixed
    branch_ids: np.ndarray = field(default=None)
    near_exceptional: bool = False

    def __post_init__(self):
        if self.branch_ids is None:
            self.branch_ids = np.arange(len(self.eigenvalues))


def _phase_fix(vectors: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude component of each column real and positive."""
    out = vectors.copy()
    for k in range(out.shape[1]):
        col = out[:, k]
        idx = np.argmax(np.abs(col))
        phase = col[idx] / abs(col[idx]) if abs(col[idx]) > 0 else 1.0
        out[:, k] = col / phase
    return out


def spectrum_track(hnc_series: list[np.ndarray], times: np.ndarray | None = None,
                   cond_threshold: float = 1e8) -> list[NhhSpectrum]:
    """Eigendecompose -i H_NC along a time series with branch continuity.

    Branches are matched between consecutive samples by maximal eigenvector
    overlap (ties broken by eigenvalue proximity).  Samples whose eigenvector
    matrix is ill-conditioned (near an exceptional point) are flagged.
    """
    if not len(hnc_series):
        raise ValueError("spectrum_track needs a nonempty series")
    n = hnc_series[0].shape[0]
    if times is None:
        times = np.arange(len(hnc_series), dtype=float)
    out: list[NhhSpectrum] = []
    prev_vecs = None
    for t, h in zip(times, hnc_series):
        w, v = np.linalg.eig(-1j * np.asarray(h, dtype=complex))
        v = v / np.linalg.norm(v, axis=0, keepdims=True)
        near_ep = bool(np.linalg.cond(v) > cond_threshold)
        if prev_vecs is None:
            order = np.argsort(-w.real)
        else:
            # greedy assignment: previous branch k takes the unused column
            # with the largest |<prev_k|new_j>|, eigenvalue distance as tiebreak
            overlap = np.abs(dag(prev_vecs) @ v)
            order = np.full(n, -1, dtype=int)
            used = np.zeros(n, dtype=bool)
            prev_w = out[-1].eigenvalues
            for k in np.argsort(-np.max(overlap, axis=1)):
                row = overlap[k].copy()
                row[used] = -1.0
                best = np.flatnonzero(row >= row.max() - 1e-12)
                if len(best) > 1:
                    best = best[np.argmin(np.abs(w[best] - prev_w[k]))]
                else:
                    best = best[0]
                order[k] = best
                used[best] = True
        w = w[order]
        v = _phase_fix(v[:, order])
        out.append(NhhSpectrum(time=float(t), eigenvalues=w, right_eigenvectors=v,
                               branch_ids=np.arange(n), near_exceptional=near_ep))
        prev_vecs = v
    return out
