"""Diffusive quantum trajectories with noise-canceling measurement feedback."""

__version__ = "0.1.0"

from .feedback import (EigenbasisParams, FeedbackLaw, MeasurementChannel,
                       NoiseReport, basic_ncqf, eigenbasis_ncqf,
                       ncc_exists_mixed, nc_drift, noise_magnitude,
                       noise_superop, population_ncqf, restricted_min_multi,
                       restricted_min_scalar, signal, split_xy)
from .nhh import NhhSpectrum, build_hnc, noise_operator, spectrum_track
from .qmath import (EigDecomposition, QuantumState, UsageError, bell_state,
                    concurrence, fidelity, hadamard_n, herm_eig, ket, kron,
                    pauli_string)
from .scenarios import (SCENARIO_SCHEMA, Scenario, config_digest,
                        resolve_scenario, validate_config)
from .trajectory import (ControlInputs, EnsembleSummary, IntegrationError,
                         StepResult, TrajectoryRecord, kraus_pair,
                         run_ensemble, simulate_trajectory, split_seed, step)

__all__ = [name for name in dir() if not name.startswith("_")]
