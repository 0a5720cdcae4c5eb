"""DLCZ photon-pair Monte-Carlo simulator and coincidence analysis."""

from ._dlczsim import (
    AnalysisError,
    ConfigError,
    DomainError,
    __version__,
    cauchy_schwarz_R,
    decay_time_us,
    default_config,
    eta_decoh,
    eta_loss,
    eta_write,
    infer_eta_rephasing,
    linewidth_kHz,
    preset_names,
    readout_budget,
    run_preset,
    simulate,
    simulate_and_analyze,
    validate,
)

CHANNELS = ("S", "AS")

__all__ = [
    "AnalysisError",
    "CHANNELS",
    "ConfigError",
    "DomainError",
    "__version__",
    "cauchy_schwarz_R",
    "decay_time_us",
    "default_config",
    "eta_decoh",
    "eta_loss",
    "eta_write",
    "infer_eta_rephasing",
    "linewidth_kHz",
    "preset_names",
    "readout_budget",
    "run_preset",
    "simulate",
    "simulate_and_analyze",
    "validate",
]
