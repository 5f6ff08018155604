"""Simulation and analysis toolkit for a Josephson traveling-wave
single-photon detector: stochastic MPS trajectories of a monitored nonlinear
metamaterial, a perturbative master-equation cross-check, detector figures of
merit, and hardware design formulas."""

from .config import (
    DetectorConfig,
    HardwareParams,
    WavepacketSpec,
    config_hash,
    load_config,
    save_config,
    standard_setup,
    with_overrides,
)
from .conveyor import (
    ConveyorSimulation,
    EnsembleResult,
    TrajectoryRecord,
    build_emitter_gate,
    build_interaction_gate,
    load_ensemble,
    load_trajectory,
    run_ensemble,
    run_trajectory,
    save_ensemble,
    save_trajectory,
)
from .detection import (
    DetectionReport,
    MatchedFilter,
    assignment_report,
    build_filter,
    filtered_signal,
    optimize_threshold,
    roc_curve,
    score_records,
    wigner,
)
from .errors import ConfigError, IntegrationError, TruncationError
from .keldysh import KeldyshState, MomentSeries, integrate, langevin_mean
from .model import (
    coupler_energy,
    coupling_profile,
    emitter_rate,
    emitter_survival,
    n_cells_required,
    noise_rate,
    photon_fraction,
    steady_state_alpha,
    wavepacket_envelope,
)
from .mps import MatrixProductState, TwoSiteGate, init_product_state

__all__ = [
    "ConfigError",
    "ConveyorSimulation",
    "DetectionReport",
    "DetectorConfig",
    "EnsembleResult",
    "HardwareParams",
    "IntegrationError",
    "KeldyshState",
    "MatchedFilter",
    "MatrixProductState",
    "MomentSeries",
    "TrajectoryRecord",
    "TruncationError",
    "TwoSiteGate",
    "WavepacketSpec",
    "build_emitter_gate",
    "build_interaction_gate",
    "config_hash",
    "coupler_energy",
    "coupling_profile",
    "emitter_rate",
    "emitter_survival",
    "init_product_state",
    "integrate",
    "langevin_mean",
    "load_config",
    "load_ensemble",
    "load_trajectory",
    "n_cells_required",
    "noise_rate",
    "photon_fraction",
    "run_ensemble",
    "run_trajectory",
    "assignment_report",
    "build_filter",
    "filtered_signal",
    "optimize_threshold",
    "roc_curve",
    "score_records",
    "wigner",
    "save_config",
    "save_ensemble",
    "save_trajectory",
    "standard_setup",
    "steady_state_alpha",
    "wavepacket_envelope",
    "with_overrides",
]
