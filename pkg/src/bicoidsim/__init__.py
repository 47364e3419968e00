"""Stochastic, mean-field and agent-based simulators for a 1-D Bicoid morphogen gradient."""

__version__ = "0.1.0"

from .model import (  # noqa: E402
    LatticeState,
    ModelParams,
    Trajectory,
    hop_rate,
    reference_params,
    source_rate,
)
from .ssa import compute_propensities, direct_method_step, run_ensemble, run_ssa  # noqa: E402
from .ode import mean_field_rhs, solve_mean_field  # noqa: E402
from .abm import AbmConfig, abm_step, run_abm, run_abm_ensemble  # noqa: E402
from .calibration import SweepSpec, enumerate_cases, run_sweep, square_distance  # noqa: E402

__all__ = [
    "AbmConfig",
    "LatticeState",
    "ModelParams",
    "SweepSpec",
    "Trajectory",
    "abm_step",
    "compute_propensities",
    "direct_method_step",
    "enumerate_cases",
    "hop_rate",
    "mean_field_rhs",
    "reference_params",
    "run_abm",
    "run_abm_ensemble",
    "run_ensemble",
    "run_ssa",
    "run_sweep",
    "solve_mean_field",
    "source_rate",
    "square_distance",
]
