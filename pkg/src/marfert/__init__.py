"""Marriage, fertility and intra-household time use in a stationary matching equilibrium."""

__version__ = "0.1.0"

from .params import ModelParams, SolverSettings, baseline_params, load_params, past_params  # noqa: E402
from .equilibrium import EquilibriumSolution, solve_equilibrium  # noqa: E402
from .simulate import event_study, simulate_panel  # noqa: E402

__all__ = [
    "ModelParams",
    "SolverSettings",
    "EquilibriumSolution",
    "baseline_params",
    "past_params",
    "load_params",
    "solve_equilibrium",
    "simulate_panel",
    "event_study",
]
