"""Synthesis of noise-canceling / noise-minimizing feedback operators.

A continuously monitored channel contributes a stochastic term
B = sqrt(eta)*K - i[omega, rho] to the conditional master equation, with
K = {X - <X>, rho} + [Y, rho] and L = X + Y split into Hermitian and
anti-Hermitian parts.  Feedback omega that zeroes B makes the conditional
evolution deterministic.  This module provides

* the always-existing pure-state solution omega0 = i([rho, X] - Y),
* the mixed-state existence test (equal diagonal X elements on the support),
* the eigenbasis construction A_mn = i sqrt(eta) X_mn (l_m+l_n)/(l_m-l_n)
  with degenerate-block rotation and magnitude capping,
* quadratic noise minimization for restricted controls omega = sum_j f_j T_j,
* the population-based law targeting a fixed pure projector, and
* the deterministic drift of the noise-canceled (or average) evolution.

All synthesized operators are Hermitian; all functions are pure.
"""

from dataclasses import dataclass, field

import numpy as np

from .qmath import QuantumState, UsageError, dag, herm_eig

__all__ = [
    "MeasurementChannel", "FeedbackLaw", "EigenbasisParams", "NoiseReport",
    "signal", "split_xy", "basic_ncqf", "noise_superop", "noise_magnitude",
    "ncc_exists_mixed", "eigenbasis_ncqf", "restricted_min_scalar",
    "restricted_min_multi", "population_ncqf", "nc_drift", "synthesize",
]


@dataclass
class MeasurementChannel:
    """A monitored Lindblad channel: jump operator L (units sqrt(rate)) and efficiency eta."""

    L: np.ndarray
    eta: float = 1.0
    label: str = ""

    def __post_init__(self):
        self.L = np.asarray(self.L, dtype=complex)
        if not (0.0 <= self.eta <= 1.0):
            raise UsageError(f"channel {self.label!r}: eta={self.eta} outside [0, 1]")
        if not np.all(np.isfinite(self.L)):
            raise UsageError(f"channel {self.label!r}: non-finite entries in L")
        self.X = 0.5 * (self.L + dag(self.L))
        self.Y = 0.5 * (self.L - dag(self.L))
        self.LdL = dag(self.L) @ self.L

    @property
    def dim(self) -> int:
        return self.L.shape[0]


def split_xy(channel: MeasurementChannel) -> tuple[np.ndarray, np.ndarray]:
    """Hermitian and anti-Hermitian parts of L; X + Y = L exactly."""
    return channel.X, channel.Y


def signal(state: QuantumState, channel: MeasurementChannel) -> float:
    """Expected readout signal s = <L + L^dag> = 2<X> (without the sqrt(eta) factor)."""
    return 2.0 * float(np.trace(channel.X @ state.rho).real)


def _hermitize(op: np.ndarray) -> np.ndarray:
    return 0.5 * (op + dag(op))


def basic_ncqf(state: QuantumState, channel: MeasurementChannel,
               purity_tol: float = 1e-6) -> np.ndarray:
    """Pure-state noise-canceling feedback omega0 = i([rho, X] - Y).

    Satisfies (L - i omega0 - s/2)|psi> = 0 for pure states; for eta < 1 the
    same expression cancels the leading stochastic term but the evolution
    develops impurity that this law cannot follow.
    """
    if state.purity() < 1.0 - purity_tol:
        raise UsageError(
            f"basic_ncqf needs a pure state (purity {state.purity():.6f}); "
            "use eigenbasis_ncqf for mixed states")
    rho = state.rho
    om = 1j * ((rho @ channel.X - channel.X @ rho) - channel.Y)
    return _hermitize(om)


def _kraus_k(state: QuantumState, channel: MeasurementChannel) -> np.ndarray:
    """K = {X - <X>, rho} + [Y, rho]; the no-feedback noise term is sqrt(eta) K."""
    rho = state.rho
    x_mean = np.trace(channel.X @ rho).real
    dX = channel.X - x_mean * np.eye(state.dim)
    return dX @ rho + rho @ dX + channel.Y @ rho - rho @ channel.Y


def noise_superop(state: QuantumState, channel: MeasurementChannel,
                  omega: np.ndarray) -> np.ndarray:
    """Residual stochastic term B = sqrt(eta) K - i[omega, rho]; Hermitian, traceless."""
    rho = state.rho
    b = np.sqrt(channel.eta) * _kraus_k(state, channel) - 1j * (omega @ rho - rho @ omega)
    return _hermitize(b)


@dataclass
class NoiseReport:
    """Noise magnitude N = tr(B^dag B) and its quadratic split in the feedback."""

    N_total: float
    N_a: float = 0.0          # quadratic in omega, >= 0
    N_b: float = 0.0          # linear in omega
    N_c: float = 0.0          # feedback-independent, = eta tr K^2
    quad: tuple | None = None  # (a, b, c) for restricted controls
    discriminant: float | None = None
    cancellable: bool = False
    degenerate: bool = False
    capped: bool = False


def noise_magnitude(state: QuantumState, channel: MeasurementChannel,
                    omega: np.ndarray | None = None,
                    cancel_tol: float = 1e-10) -> NoiseReport:
    """Evaluate N = tr(B^dag B) = N_a + N_b + N_c for a given feedback operator."""
    rho = state.rho
    k = _kraus_k(state, channel)
    eta = channel.eta
    n_c = float(eta * np.trace(k @ k).real)
    if omega is None:
        omega = np.zeros_like(rho)
    comm = omega @ rho - rho @ omega
    n_a = float(np.trace(dag(comm) @ comm).real)
    n_b = float((2j * np.sqrt(eta) * np.trace(omega @ (k @ rho - rho @ k))).real)
    total = n_a + n_b + n_c
    return NoiseReport(N_total=total, N_a=n_a, N_b=n_b, N_c=n_c,
                       cancellable=total <= cancel_tol)


def ncc_exists_mixed(state: QuantumState, channel: MeasurementChannel,
                     tol: float = 1e-9, rank_tol: float = 1e-10,
                     degen_tol: float = 1e-9) -> tuple[bool, dict]:
    """Test whether a perfectly noise-canceling feedback exists for this state.

    Exists iff every supported rho-eigenvector satisfies <n|X|n> = s/2, after
    rotating within degenerate eigenvalue blocks so the X restriction is
    diagonal there.
    """
    eig = herm_eig(state.rho, hermitian_tol=1e-6, degeneracy_tol=degen_tol)
    lam = np.clip(eig.values, 0.0, None)
    support = lam > rank_tol
    v = eig.vectors.copy()
    xe = dag(v) @ channel.X @ v
    for (a, b) in eig.degenerate_blocks():
        if b - a > 1:
            _, w = np.linalg.eigh(xe[a:b, a:b])
            v[:, a:b] = v[:, a:b] @ w
    xe = dag(v) @ channel.X @ v
    s_half = float(np.sum(lam * np.diag(xe).real))
    devs = np.abs(np.diag(xe).real[support] - s_half)
    exists = bool(devs.size == 0 or np.max(devs) <= tol)
    diagnostics = {
        "max_deviation": float(np.max(devs)) if devs.size else 0.0,
        "support_rank": int(np.sum(support)),
        "s_half": s_half,
    }
    return exists, diagnostics


@dataclass
class EigenbasisParams:
    """Free-parameter policy for the eigenbasis noise-canceling construction."""

    omega_max: float = 50.0     # cap on |A_mn|, in units of the dominant rate
    rank_tol: float = 1e-10     # eigenvalues below are assigned to the kernel
    degen_tol: float = 1e-9     # relative gap below which a block is degenerate
    a_diagonal: np.ndarray | None = None   # free diagonal of A in the rho eigenbasis
    b_block: np.ndarray | None = None      # free kernel-block operator (full-dim, projected)

    def __post_init__(self):
        if self.omega_max <= 0 or self.rank_tol <= 0 or self.degen_tol <= 0:
            raise UsageError("EigenbasisParams tolerances and omega_max must be positive")


class _EigenbasisPrep:
    """Per-state machinery shared by every channel's eigenbasis synthesis."""

    __slots__ = ("lam", "vectors", "blocks", "nontrivial", "ratio", "kernel")

    def __init__(self, eig, params: EigenbasisParams):
        self.lam = np.clip(eig.values, 0.0, None)
        self.vectors = eig.vectors
        self.blocks = eig.degenerate_blocks(params.degen_tol)
        self.nontrivial = [b for b in self.blocks if b[1] - b[0] > 1]
        lamc = self.lam[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = (lamc + lamc.T) / (lamc - lamc.T)
        n = len(self.lam)
        block_id = np.empty(n, dtype=int)
        for bi, (a, b) in enumerate(self.blocks):
            block_id[a:b] = bi
        ratio[block_id[:, None] == block_id[None, :]] = 0.0
        self.ratio = ratio
        self.kernel = self.lam <= params.rank_tol


def _eigenbasis_omega(prep: _EigenbasisPrep, channel: MeasurementChannel,
                      params: EigenbasisParams) -> tuple[np.ndarray, bool]:
    """One channel's omega from shared prep; returns (omega, capped)."""
    sqeta = np.sqrt(channel.eta)
    v = prep.vectors
    xe = dag(v) @ channel.X @ v
    if prep.nontrivial:
        # rotate inside (near-)degenerate blocks so the X restriction is
        # diagonal there; the rotated entries then need no feedback at all
        v = v.copy()
        for (a, b) in prep.nontrivial:
            _, w = np.linalg.eigh(xe[a:b, a:b])
            v[:, a:b] = v[:, a:b] @ w
            xe[:, a:b] = xe[:, a:b] @ w
            xe[a:b, :] = dag(w) @ xe[a:b, :]

    a_mat = (1j * sqeta) * xe * prep.ratio
    mag = np.abs(a_mat)
    over = mag > params.omega_max
    capped = bool(np.any(over))
    if capped:
        a_mat[over] *= params.omega_max / mag[over]

    if params.a_diagonal is not None:
        a_mat[np.diag_indices(len(prep.lam))] = np.asarray(params.a_diagonal,
                                                           dtype=complex)
    if params.b_block is not None:
        mask = np.outer(prep.kernel, prep.kernel)
        be = dag(v) @ np.asarray(params.b_block, dtype=complex) @ v
        a_mat[mask] = be[mask]

    omega_tilde = v @ a_mat @ dag(v)
    return _hermitize(omega_tilde - 1j * sqeta * channel.Y), capped


def eigenbasis_ncqf(state: QuantumState, channel: MeasurementChannel,
                    params: EigenbasisParams | None = None,
                    want_report: bool = True,
                    ) -> tuple[np.ndarray, NoiseReport | None]:
    """Noise-canceling (or minimizing) feedback built in the rho eigenbasis.

    omega~ = Pi A Pi + i sqrt(eta) [Pi, X] + Pi_perp B Pi_perp with
    A_mn = i sqrt(eta) X_mn (l_m + l_n)/(l_m - l_n); degenerate blocks are
    rotated so X_mn = 0 there, and surviving entries above omega_max are
    magnitude-capped (flagged).  Returns omega = omega~ - i sqrt(eta) Y.
    """
    params = params or EigenbasisParams()
    prep = _EigenbasisPrep(state.eig, params)
    omega, capped = _eigenbasis_omega(prep, channel, params)
    if not want_report:
        return omega, None
    report = noise_magnitude(state, channel, omega)
    report.capped = capped
    return omega, report


def eigenbasis_ncqf_batch(state: QuantumState, channels: list[MeasurementChannel],
                          params: EigenbasisParams) -> list[np.ndarray]:
    """Eigenbasis feedback for several channels sharing one state prep."""
    prep = _EigenbasisPrep(state.eig, params)
    return [_eigenbasis_omega(prep, ch, params)[0] for ch in channels]


def restricted_min_scalar(state: QuantumState, channel: MeasurementChannel,
                          theta: np.ndarray, degenerate_tol: float = 1e-12,
                          cancel_tol: float = 1e-10) -> tuple[float, NoiseReport]:
    """Best scalar weight f for feedback omega = f*Theta.

    N(f) = a f^2 + b f + c with a = tr([T,rho][rho,T]), b = 2i sqrt(eta)
    tr(T [K, rho]), c = eta tr K^2; minimized at f* = -b/2a.  When Theta
    commutes with rho (a ~ 0) the control is inert: returns f* = 0 flagged
    degenerate.
    """
    rho = state.rho
    theta = np.asarray(theta, dtype=complex)
    k = _kraus_k(state, channel)
    comm = theta @ rho - rho @ theta
    a = float(np.trace(dag(comm) @ comm).real)
    b = float((2j * np.sqrt(channel.eta) * np.trace(theta @ (k @ rho - rho @ k))).real)
    c = float(channel.eta * np.trace(k @ k).real)
    disc = b * b - 4.0 * a * c
    scale = max(abs(c), 1.0)
    if a <= degenerate_tol * scale:
        return 0.0, NoiseReport(N_total=c, N_a=0.0, N_b=0.0, N_c=c, quad=(a, b, c),
                                discriminant=disc, cancellable=False, degenerate=True)
    f_star = -b / (2.0 * a)
    n_min = c - b * b / (4.0 * a)
    rep = NoiseReport(N_total=n_min, N_a=a * f_star ** 2, N_b=b * f_star, N_c=c,
                      quad=(a, b, c), discriminant=disc,
                      cancellable=n_min <= cancel_tol)
    return f_star, rep


def restricted_min_multi(state: QuantumState, channel: MeasurementChannel,
                         thetas: list[np.ndarray], degenerate_tol: float = 1e-12,
                         cancel_tol: float = 1e-10) -> tuple[np.ndarray, NoiseReport]:
    """Best weight vector f for feedback omega = sum_j f_j Theta_j.

    N(f) = f.a.f + f.b + c with a_jk = tr([T_j,rho][rho,T_k]); null directions
    of (a + a^T) are projected out with a pseudo-inverse, so inert controls get
    zero weight.
    """
    rho = state.rho
    k = _kraus_k(state, channel)
    m = len(thetas)
    if m == 0:
        raise UsageError("restricted_min_multi needs at least one control operator")
    comms = [t @ rho - rho @ t for t in thetas]
    a_mat = np.empty((m, m))
    for j in range(m):
        for l in range(j, m):
            val = float(np.trace(dag(comms[j]) @ comms[l]).real)
            a_mat[j, l] = a_mat[l, j] = val
    b_vec = np.array([
        float((2j * np.sqrt(channel.eta) * np.trace(t @ (k @ rho - rho @ k))).real)
        for t in thetas])
    c = float(channel.eta * np.trace(k @ k).real)
    m_sym = a_mat + a_mat.T
    scale = max(np.max(np.abs(m_sym)), 1.0)
    if np.max(np.abs(m_sym)) <= degenerate_tol * max(abs(c), 1.0):
        return np.zeros(m), NoiseReport(N_total=c, N_c=c, quad=(a_mat, b_vec, c),
                                        cancellable=False, degenerate=True)
    f_star = -np.linalg.pinv(m_sym, rcond=1e-10) @ b_vec
    n_min = float(f_star @ a_mat @ f_star + f_star @ b_vec + c)
    rep = NoiseReport(N_total=n_min, N_a=float(f_star @ a_mat @ f_star),
                      N_b=float(f_star @ b_vec), N_c=c, quad=(a_mat, b_vec, c),
                      cancellable=n_min <= cancel_tol)
    return f_star, rep


def population_ncqf(target_projector: np.ndarray, channel: MeasurementChannel,
                    omega_psi: float = 0.0, b_block: np.ndarray | None = None,
                    rank_tol: float = 1e-9) -> np.ndarray:
    """Feedback canceling the noise of a target pure state's population.

    omega = omega_psi Pi0 - i[Pi0, X] - iY + Pi0_perp B Pi0_perp for a rank-1
    projector Pi0; satisfies Pi0 Xi + Xi^dag Pi0 = 2 p0 Pi0 with
    p0 = tr(X Pi0), independent of the system state.  The -iY term absorbs
    the anti-Hermitian part of L (zero for a Hermitian observable).
    """
    pi0 = np.asarray(target_projector, dtype=complex)
    evals = np.linalg.eigvalsh(pi0)
    if abs(np.trace(pi0).real - 1.0) > rank_tol or np.sum(evals > rank_tol) != 1:
        raise UsageError("population_ncqf target must be a rank-1 projector")
    dim = pi0.shape[0]
    om = (omega_psi * pi0 - 1j * (pi0 @ channel.X - channel.X @ pi0)
          - 1j * channel.Y)
    if b_block is not None:
        perp = np.eye(dim) - pi0
        om = om + perp @ np.asarray(b_block, dtype=complex) @ perp
    return _hermitize(om)


def nc_drift(state: QuantumState, channels: list[MeasurementChannel],
             omegas: list[np.ndarray], omega_open_loop: np.ndarray | None = None,
             ) -> np.ndarray:
    """Deterministic drift of the conditional state under instantaneous feedback.

    d(rho)/dt = i[rho, Omega] + sum_c { i[b_c[rho], omega_c] + D[L_c](rho)
    + D[omega_c](rho) }; this is the noise-canceled flow when the NCC holds,
    and the mean (Lindblad-equivalent) evolution otherwise.
    """
    rho = state.rho
    out = np.zeros_like(rho)
    if omega_open_loop is not None:
        out = out + 1j * (rho @ omega_open_loop - omega_open_loop @ rho)
    for ch, om in zip(channels, omegas):
        l_op = ch.L
        s = 2.0 * np.trace(ch.X @ rho).real
        b_l = np.sqrt(ch.eta) * (l_op @ rho + rho @ dag(l_op) - s * rho)
        out = out + 1j * (b_l @ om - om @ b_l)
        out = out + l_op @ rho @ dag(l_op) - 0.5 * (ch.LdL @ rho + rho @ ch.LdL)
        om2 = om @ om
        out = out + om @ rho @ om - 0.5 * (om2 @ rho + rho @ om2)
    return _hermitize(out)


@dataclass
class FeedbackLaw:
    """Tagged per-channel policy for producing omega_c each step.

    kind: none | fixed | basic | eigenbasis | restricted | population.
    """

    kind: str = "none"
    operator: np.ndarray | None = None           # fixed
    params: EigenbasisParams = field(default_factory=EigenbasisParams)  # eigenbasis
    thetas: list | None = None                   # restricted
    mode: str = "scalar"                         # restricted: scalar | multi
    target_projector: np.ndarray | None = None   # population
    omega_psi: float = 0.0                       # population
    purity_tol: float = 1e-6                     # basic

    KINDS = ("none", "fixed", "basic", "eigenbasis", "restricted", "population")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise UsageError(f"unknown feedback kind {self.kind!r}")


def synthesize(law: FeedbackLaw, state: QuantumState,
               channel: MeasurementChannel,
               stage: bool = False) -> np.ndarray | None:
    """Produce the feedback operator for this step, or None when inactive.

    stage=True relaxes the basic law's purity gate: Runge-Kutta stage states
    sit off the purity manifold by O((dt |drift|)^2) even for an exactly
    purity-preserving flow.
    """
    if law.kind == "none":
        return None
    if law.kind == "fixed":
        return law.operator
    if law.kind == "basic":
        tol = max(law.purity_tol, 5e-3) if stage else law.purity_tol
        return basic_ncqf(state, channel, purity_tol=tol)
    if law.kind == "eigenbasis":
        omega, _ = eigenbasis_ncqf(state, channel, law.params, want_report=False)
        return omega
    if law.kind == "restricted":
        if law.mode == "scalar":
            if len(law.thetas) != 1:
                raise UsageError("restricted scalar mode needs exactly one Theta")
            f, _ = restricted_min_scalar(state, channel, law.thetas[0])
            return f * law.thetas[0]
        f, _ = restricted_min_multi(state, channel, law.thetas)
        return sum(fj * tj for fj, tj in zip(f, law.thetas))
    if law.kind == "population":
        return population_ncqf(law.target_projector, channel, law.omega_psi)
    raise UsageError(f"unknown feedback kind {law.kind!r}")
