"""Joint channel estimation and prediction for frequency-hopping SRS."""

from ._jcep import (
    DivergenceError,
    GridSpec,
    HmpOptions,
    Scenario,
    SystemConfig,
    doppler_from_speed,
    estimate,
    nmse_db,
    qpsk_pilots,
    run_experiment,
    sample_paths,
    steering_delay,
    summarize_csv,
    synth_channel,
    synth_received,
)

__all__ = [
    "DivergenceError",
    "GridSpec",
    "HmpOptions",
    "Scenario",
    "SystemConfig",
    "doppler_from_speed",
    "estimate",
    "nmse_db",
    "qpsk_pilots",
    "run_experiment",
    "sample_paths",
    "steering_delay",
    "summarize_csv",
    "synth_channel",
    "synth_received",
]
