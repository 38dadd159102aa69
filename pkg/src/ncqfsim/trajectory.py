"""Ito integrator for diffusive trajectories with instantaneous feedback.

One step applies, in this fixed order: (1) the measurement Kraus update of
every channel, composed in channel order, with readout r_c dt = sqrt(eta_c)
s_c dt + dW_c; (2) one combined coherent kick U = exp(-i(Omega dt + sum_c
omega_c dW_c)).  The measurement precedes the feedback; the feedback
operators are synthesized from the pre-step state, which is where the
noise-cancellation condition is formulated.

The same module integrates the deterministic noise-canceled flow (RK4 on the
drift) for scenarios where the feedback makes the dynamics exactly
deterministic, and runs seeded, schedule-invariant ensembles.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import nhh
from .feedback import (FeedbackLaw, MeasurementChannel, eigenbasis_ncqf_batch,
                       nc_drift, noise_magnitude, synthesize)
from .qmath import QuantumState, UsageError, dag

__all__ = [
    "ControlInputs", "StepResult", "TrajectoryRecord", "EnsembleSummary",
    "IntegrationError", "kraus_pair", "step", "simulate_trajectory",
    "run_ensemble", "split_seed",
]

# Positivity repair policy: eigenvalues in [NEG_EIG_FLOOR, 0) are clipped to
# zero and the trace renormalized; anything below NEG_EIG_FLOOR, or clipped
# mass beyond CLIP_MASS_ABORT in one step, aborts the trajectory.
NEG_EIG_FLOOR = -1e-8
CLIP_MASS_ABORT = 1e-6


class IntegrationError(RuntimeError):
    """State invariants violated beyond repair during integration."""

    def __init__(self, message: str, step_index: int | None = None,
                 channel: str | None = None):
        self.step_index = step_index
        self.channel = channel
        where = f" at step {step_index}" if step_index is not None else ""
        chan = f" (channel {channel})" if channel else ""
        super().__init__(message + where + chan)


@dataclass
class ControlInputs:
    """Open-loop Hermitian drive Omega plus per-channel feedback laws."""

    omega_open_loop: np.ndarray | None = None
    feedback: list[FeedbackLaw] = field(default_factory=list)


@dataclass
class StepResult:
    state: QuantumState
    readouts: np.ndarray            # r_c * dt per channel
    noise: np.ndarray               # dW_c per channel
    omega_applied: list
    noise_magnitude: np.ndarray     # residual N_c per channel (NaN if not evaluated)


def kraus_pair(channel: MeasurementChannel, r: float, dt: float
               ) -> tuple[np.ndarray, np.ndarray]:
    """First-order Kraus pair for readout value r over a window dt.

    M0 = 1 + (sqrt(eta) r L - L^dag L / 2) dt collects the record; M1 =
    sqrt(1-eta) sqrt(dt) L carries the unobserved loss (zero for eta = 1).
    """
    if dt <= 0:
        raise UsageError("kraus_pair needs dt > 0")
    dim = channel.dim
    m0 = np.eye(dim, dtype=complex) + (np.sqrt(channel.eta) * r * channel.L
                                       - 0.5 * channel.LdL) * dt
    m1 = math.sqrt(max(1.0 - channel.eta, 0.0) * dt) * channel.L
    return m0, m1


def _expmh(h: np.ndarray) -> np.ndarray:
    """exp(-i h) for Hermitian h, exact via eigendecomposition."""
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * w)) @ dag(v)


def _repair(rho: np.ndarray, step_index: int | None = None
            ) -> tuple[np.ndarray, "np.ndarray", np.ndarray]:
    """Hermitize, clip tiny negative eigenvalues, renormalize; return (rho, lam, V)."""
    rho = 0.5 * (rho + dag(rho))
    lam, v = np.linalg.eigh(rho)
    low = lam[lam < 0.0]
    if low.size:
        if lam[0] < NEG_EIG_FLOOR or -low.sum() > CLIP_MASS_ABORT:
            raise IntegrationError(
                f"positivity repair out of tolerance (min eig {lam[0]:.3e}, "
                f"clipped mass {-low.sum():.3e})", step_index)
        lam = np.clip(lam, 0.0, None)
    tr = lam.sum()
    # the readout-conditioned Kraus map shifts the trace by O(s dW) each
    # step; renormalization is part of the nonlinear update, so only guard
    # against genuine blow-up here
    if not np.isfinite(tr) or tr < 0.2 or tr > 5.0:
        raise IntegrationError(f"trace diverged to {tr}", step_index)
    lam = lam / tr
    rho = (v * lam) @ dag(v)
    return rho, lam[::-1].copy(), v[:, ::-1].copy()


def step(state: QuantumState, channels: list[MeasurementChannel],
         controls: ControlInputs, dt: float, dW: np.ndarray,
         want_noise: bool = True, pure_path: bool = False,
         step_index: int | None = None, cache_eig: bool = True) -> StepResult:
    """Advance the conditional state by one measurement+feedback interval.

    cache_eig=False trades the cached eigendecomposition of the new state for
    a cheaper eigenvalue-only positivity check (the Kraus-plus-unitary map is
    completely positive, so negatives can only be roundoff); feedback laws
    that need the eigenbasis should keep the default.
    """
    if dt <= 0:
        raise UsageError("step needs dt > 0")
    dW = np.asarray(dW, dtype=float)
    if dW.shape != (len(channels),):
        raise UsageError(f"dW must have one entry per channel, got {dW.shape}")
    rho = state.rho
    dim = state.dim
    eye = np.eye(dim)

    if controls.omega_open_loop is not None:
        defect = np.max(np.abs(controls.omega_open_loop
                               - dag(controls.omega_open_loop)))
        if defect > 1e-12 * max(1.0, np.max(np.abs(controls.omega_open_loop))):
            raise UsageError("open-loop drive must be Hermitian")
    laws = controls.feedback or [FeedbackLaw("none")] * len(channels)
    if (len(laws) > 1 and all(l.kind == "eigenbasis" for l in laws)
            and all(l.params is laws[0].params for l in laws[1:])):
        try:
            omegas = eigenbasis_ncqf_batch(state, channels, laws[0].params)
        except UsageError as exc:
            raise IntegrationError(f"feedback synthesis failed: {exc}",
                                   step_index) from exc
    else:
        omegas = []
        for ch, law in zip(channels, laws):
            try:
                omegas.append(synthesize(law, state, ch))
            except UsageError as exc:
                raise IntegrationError(f"feedback synthesis failed: {exc}",
                                       step_index, ch.label) from exc

    signals = np.array([2.0 * np.trace(ch.X @ rho).real for ch in channels])
    readouts = np.array([np.sqrt(ch.eta) * s * dt + dw
                         for ch, s, dw in zip(channels, signals, dW)])

    out = rho
    for ch, s, dw in zip(channels, signals, dW):
        m0 = eye + (ch.L * (ch.eta * s * dt + np.sqrt(ch.eta) * dw)
                    - 0.5 * ch.LdL * dt)
        nxt = m0 @ out @ dag(m0)
        if ch.eta < 1.0:
            nxt = nxt + (1.0 - ch.eta) * dt * (ch.L @ out @ dag(ch.L))
        out = nxt

    dh = None
    for om, dw in zip(omegas, dW):
        if om is not None:
            dh = om * dw if dh is None else dh + om * dw
    if controls.omega_open_loop is not None:
        dh = (controls.omega_open_loop * dt if dh is None
              else dh + controls.omega_open_loop * dt)
    if dh is not None:
        u = _expmh(dh)
        out = u @ out @ dag(u)

    if pure_path:
        out = 0.5 * (out + dag(out))
        tr = np.trace(out).real
        if not np.isfinite(tr) or tr < 0.2 or tr > 5.0:
            raise IntegrationError(f"trace diverged to {tr}", step_index)
        new = QuantumState(rho=out / tr, purity_tol=state.purity_tol)
    elif cache_eig:
        rho_new, lam, vecs = _repair(out, step_index)
        new = QuantumState(rho=rho_new, purity_tol=state.purity_tol)
        from .qmath import EigDecomposition
        new._eig = EigDecomposition(values=lam, vectors=vecs)
    else:
        out = 0.5 * (out + dag(out))
        tr = np.trace(out).real
        if not np.isfinite(tr) or tr < 0.2 or tr > 5.0:
            raise IntegrationError(f"trace diverged to {tr}", step_index)
        out = out / tr
        wmin = float(np.linalg.eigvalsh(out)[0])
        if wmin < -1e-12:
            out, _, _ = _repair(out, step_index)
        new = QuantumState(rho=out, purity_tol=state.purity_tol)

    n_res = np.full(len(channels), np.nan)
    if want_noise:
        for i, (ch, om) in enumerate(zip(channels, omegas)):
            n_res[i] = noise_magnitude(state, ch, om).N_total
    return StepResult(state=new, readouts=readouts, noise=dW,
                      omega_applied=omegas, noise_magnitude=n_res)


@dataclass
class TrajectoryRecord:
    """Sampled time series of one trajectory plus terminal metrics."""

    times: np.ndarray
    observables: dict
    readouts: np.ndarray            # (n_samples, n_channels), r_c * dt
    noise: np.ndarray               # (n_samples, n_channels), dW_c
    seed: int
    dt: float
    channel_labels: list
    terminal_state: QuantumState = None
    terminal_metrics: dict = field(default_factory=dict)
    snapshots: list = field(default_factory=list)        # (t, rho) pairs
    spectra: list = field(default_factory=list)          # nhh.NhhSpectrum
    noise_residuals: np.ndarray | None = None            # (n_samples, n_channels)
    meta: dict = field(default_factory=dict)


def split_seed(master_seed: int, index: int) -> int:
    """Per-trajectory seed derived from a counter-based split of the master seed."""
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(index,))
    return int(ss.generate_state(2, np.uint64)[0])


def _rng_for(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def simulate_trajectory(scenario, seed: int) -> TrajectoryRecord:
    """Integrate one trajectory of a scenario, deterministically in seed.

    Accepts either a resolved Scenario or its config dict (resolved here), so
    worker processes only ever receive plain JSON-able payloads.
    """
    if isinstance(scenario, dict):
        from .scenarios import resolve_scenario
        scenario = resolve_scenario(scenario)
    n_steps = int(round(scenario.duration / scenario.dt))
    dt = scenario.dt
    channels = scenario.channels
    n_ch = len(channels)
    state = QuantumState(rho=scenario.rho0.copy())
    state.validate(trace_tol=1e-6, herm_tol=1e-9)

    stride = max(1, int(scenario.observable_stride))
    rng = _rng_for(seed)
    if scenario.integrator == "sde":
        dws = rng.normal(0.0, math.sqrt(dt), size=(n_steps, n_ch))
    else:
        dws = np.zeros((n_steps, n_ch))

    pure_flow = (all(ch.eta >= 1.0 for ch in channels)
                 and state.purity() >= 1.0 - 1e-9)
    pure_path = scenario.integrator == "sde" and pure_flow
    needs_eig = any(law.kind == "eigenbasis" for law in scenario.feedback_laws)

    memory: dict = {}
    times = [0.0]
    obs_rows = [scenario.evaluate_observables(0.0, state, memory)]
    readout_rows = [np.zeros(n_ch)]
    noise_rows = [np.zeros(n_ch)]
    nres_rows = [np.full(n_ch, np.nan)] if scenario.record_noise else None
    snapshots = []
    hnc_series, hnc_times = [], []
    if scenario.snapshot_stride:
        snapshots.append((0.0, state.rho.copy()))

    for k in range(n_steps):
        t = (k + 1) * dt
        omega_ol = scenario.open_loop(k * dt, state, memory)
        controls = ControlInputs(omega_open_loop=omega_ol,
                                 feedback=scenario.feedback_laws)
        try:
            if scenario.integrator == "sde":
                res = step(state, channels, controls, dt, dws[k],
                           want_noise=bool(scenario.record_noise),
                           pure_path=pure_path, step_index=k,
                           cache_eig=needs_eig)
            else:
                res = _ode_step(state, channels, controls, dt, k,
                                pure_flow=pure_flow)
        except IntegrationError:
            raise
        except Exception as exc:  # defensive: annotate with the step index
            raise IntegrationError(f"step failed: {exc}", k) from exc
        state = res.state

        if (k + 1) % stride == 0 or k == n_steps - 1:
            times.append(t)
            obs_rows.append(scenario.evaluate_observables(t, state, memory))
            readout_rows.append(res.readouts)
            noise_rows.append(res.noise)
            if nres_rows is not None:
                nres_rows.append(res.noise_magnitude)
            if scenario.track_spectrum:
                omegas = [om if om is not None else np.zeros_like(state.rho)
                          for om in res.omega_applied]
                hnc_series.append(nhh.build_hnc(state, channels, omegas, omega_ol))
                hnc_times.append(t)
            if scenario.snapshot_stride and ((k + 1) % scenario.snapshot_stride == 0
                                             or k == n_steps - 1):
                snapshots.append((t, state.rho.copy()))

    names = scenario.observable_names
    columns = np.array(obs_rows) if obs_rows else np.zeros((0, 0))
    observables = {name: columns[:, i] for i, name in enumerate(names)}
    record = TrajectoryRecord(
        times=np.array(times), observables=observables,
        readouts=np.array(readout_rows), noise=np.array(noise_rows),
        seed=seed, dt=dt, channel_labels=[ch.label for ch in channels],
        terminal_state=state,
        snapshots=snapshots,
        spectra=nhh.spectrum_track(hnc_series, np.array(hnc_times))
        if hnc_series else [],
        noise_residuals=np.array(nres_rows) if nres_rows is not None else None,
        meta=dict(memory),
    )
    record.terminal_metrics = scenario.evaluate_terminal(state, record)
    return record


def _ode_step(state: QuantumState, channels, controls: ControlInputs,
              dt: float, step_index: int, pure_flow: bool = False) -> StepResult:
    """RK4 update of the deterministic noise-canceled drift, resynthesizing
    the feedback at every stage.

    pure_flow=True snaps the state back onto the purity manifold after the
    update; the exact noise-canceled flow of a pure state is pure, so this
    only removes integrator-induced rank leakage.
    """
    laws = controls.feedback or [FeedbackLaw("none")] * len(channels)

    def drift(rho, stage=True):
        st = QuantumState(rho=rho)
        omegas = []
        for ch, law in zip(channels, laws):
            om = synthesize(law, st, ch, stage=stage)
            omegas.append(om if om is not None else np.zeros_like(rho))
        return nc_drift(st, channels, omegas, controls.omega_open_loop), omegas

    rho = state.rho
    k1, omegas = drift(rho, stage=False)
    k2, _ = drift(rho + 0.5 * dt * k1)
    k3, _ = drift(rho + 0.5 * dt * k2)
    k4, _ = drift(rho + dt * k3)
    out = rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    out = 0.5 * (out + dag(out))
    tr = np.trace(out).real
    if not np.isfinite(tr) or abs(tr - 1.0) > 1e-6:
        raise IntegrationError(f"trace drifted to {tr}", step_index)
    out = out / tr
    if pure_flow:
        w, v = np.linalg.eigh(out)
        top = v[:, -1]
        out = np.outer(top, top.conj())
    new = QuantumState(rho=out, purity_tol=state.purity_tol)
    signals = np.array([2.0 * np.trace(ch.X @ rho).real for ch in channels])
    readouts = np.array([np.sqrt(ch.eta) * s * dt for ch, s in zip(channels, signals)])
    return StepResult(state=new, readouts=readouts, noise=np.zeros(len(channels)),
                      omega_applied=omegas,
                      noise_magnitude=np.full(len(channels), np.nan))


@dataclass
class EnsembleSummary:
    """Order-independent reduction of per-trajectory terminal metrics."""

    n_traj: int
    master_seed: int
    metrics: dict                    # name -> np.ndarray over trajectories
    aggregates: dict                 # name -> {mean, p16, p50, p84}
    success_count: int | None
    success_fraction: float | None
    failures: list
    config_digest: str = ""
    series_mean: dict | None = None  # name -> mean time series over trajectories
    series_times: np.ndarray | None = None

    def to_jsonable(self) -> dict:
        out = {
            "schema": "ncqfsim-ensemble-v1",
            "n_traj": self.n_traj,
            "master_seed": self.master_seed,
            "config_digest": self.config_digest,
            "success_count": self.success_count,
            "success_fraction": self.success_fraction,
            "failures": self.failures,
            "metrics": {k: [float(x) for x in v] for k, v in self.metrics.items()},
            "aggregates": self.aggregates,
        }
        if self.series_mean is not None:
            out["series_times"] = [float(t) for t in self.series_times]
            out["series_mean"] = {k: [float(x) for x in v]
                                  for k, v in self.series_mean.items()}
        return out


def _run_one(args):
    config, master_seed, index, keep_series = args
    seed = split_seed(master_seed, index)
    try:
        rec = simulate_trajectory(config, seed)
    except IntegrationError as exc:
        return index, None, f"{exc}"
    payload = {
        "terminal": rec.terminal_metrics,
        "series": {k: v for k, v in rec.observables.items()} if keep_series else None,
        "times": rec.times if keep_series else None,
    }
    return index, payload, None


def run_ensemble(scenario, n_traj: int, master_seed: int, workers: int = 1,
                 keep_series: bool = False, max_failure_fraction: float = 0.02
                 ) -> EnsembleSummary:
    """Run n_traj independent trajectories; trajectory i uses split(master_seed, i).

    The reduction is performed in trajectory-index order, so the result is
    identical for any worker count or scheduling.
    """
    if n_traj < 1:
        raise UsageError("run_ensemble needs n_traj >= 1")
    config = scenario if isinstance(scenario, dict) else scenario.config
    from .scenarios import config_digest as digest_fn, resolve_scenario
    digest = digest_fn(config)
    resolved = scenario if not isinstance(scenario, dict) else resolve_scenario(scenario)
    tasks = [(config, master_seed, i, keep_series) for i in range(n_traj)]
    if workers > 1 and n_traj > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, tasks,
                                    chunksize=max(1, min(16, n_traj // max(1, workers)))))
    else:
        results = [_run_one(t) for t in tasks]
    results.sort(key=lambda r: r[0])

    failures = [{"index": i, "error": err} for i, payload, err in results
                if payload is None]
    if len(failures) > max_failure_fraction * n_traj:
        raise IntegrationError(
            f"{len(failures)}/{n_traj} trajectories failed "
            f"(cap {max_failure_fraction:.0%}); first: {failures[0]['error']}")
    good = [(i, p) for i, p, err in results if p is not None]

    metric_names = list(good[0][1]["terminal"].keys()) if good else []
    metrics = {name: np.array([p["terminal"][name] for _, p in good])
               for name in metric_names}
    aggregates = {}
    for name, vals in metrics.items():
        finite = vals[np.isfinite(vals)]
        if finite.size:
            aggregates[name] = {
                "mean": float(np.mean(finite)),
                "p16": float(np.percentile(finite, 16)),
                "p50": float(np.percentile(finite, 50)),
                "p84": float(np.percentile(finite, 84)),
            }
    success_count = success_fraction = None
    if resolved.postselect is not None and "success" in metrics:
        success_count = int(np.sum(metrics["success"] > 0.5))
        success_fraction = success_count / len(good) if good else 0.0

    series_mean = series_times = None
    if keep_series and good:
        series_times = good[0][1]["times"]
        series_mean = {}
        for name in good[0][1]["series"]:
            stack = np.stack([p["series"][name] for _, p in good])
            series_mean[name] = stack.mean(axis=0)

    return EnsembleSummary(n_traj=n_traj, master_seed=master_seed,
                           metrics=metrics, aggregates=aggregates,
                           success_count=success_count,
                           success_fraction=success_fraction,
                           failures=failures, config_digest=digest,
                           series_mean=series_mean, series_times=series_times)
