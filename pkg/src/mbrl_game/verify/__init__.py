"""Numerical certification of the model-error bounds and error-amplification diagnostics."""

from .amplification import AmplificationProfile, amplification_profile, check_error_amplification
from .bounds import (
    BoundReport,
    check_performance_difference,
    check_simulation_lemma,
    check_theorem1,
    make_report,
    model_kl_error,
    truncation_horizon,
    truncation_slack,
)
from .sweeps import (
    SUITES,
    SuiteResult,
    dump_violation,
    random_mdp,
    random_model,
    random_policy,
    replay_violation,
    run_suite,
    write_sweep_csv,
)
from .tabular import certify_gridworld_pair, export_model, export_policy

__all__ = [
    "AmplificationProfile",
    "BoundReport",
    "SUITES",
    "SuiteResult",
    "amplification_profile",
    "certify_gridworld_pair",
    "check_error_amplification",
    "check_performance_difference",
    "check_simulation_lemma",
    "check_theorem1",
    "dump_violation",
    "export_model",
    "export_policy",
    "make_report",
    "model_kl_error",
    "random_mdp",
    "random_model",
    "random_policy",
    "replay_violation",
    "run_suite",
    "truncation_horizon",
    "truncation_slack",
    "write_sweep_csv",
]
