"""Python access to the stalesim simulator core."""

from ._stalesim import (
    ConfigError,
    FormatError,
    cmd_probe,
    cmd_report,
    cmd_run,
    cmd_sweep,
    cmd_verify_theorem,
    fingerprint,
    match_mean_geometric,
    normalize_config,
    optimal_staleness,
    run,
    run_id,
    sample_delays,
    theorem_bound,
    theorem_stepsize,
)

__all__ = [
    "ConfigError",
    "FormatError",
    "cmd_probe",
    "cmd_report",
    "cmd_run",
    "cmd_sweep",
    "cmd_verify_theorem",
    "fingerprint",
    "match_mean_geometric",
    "normalize_config",
    "optimal_staleness",
    "run",
    "run_id",
    "sample_delays",
    "theorem_bound",
    "theorem_stepsize",
]
