"""Balanced truncation for a finite-difference model of a geothermal storage."""

from .baltrunc import (
    BalancedReduction,
    balance_truncate,
    error_bound,
    hankel_svd,
    hankel_values,
    minimal_order,
    selection_criterion,
)
from .estimator import BalancedTruncation
from .exceptions import *  # noqa: F401,F403
from .experiments import ExperimentConfig, energy_rates, l2_error, load_config, run_experiment
from .gramians import GramianPair, energy_functions, gramians, solve_lyapunov
from .lti import (
    LtiRealization,
    Schedule,
    Trajectory,
    input_signal,
    shift_temperature,
    simulate,
    transform_realization,
)
from .storage_model import (
    DRY_SOIL,
    WATER,
    MaterialParams,
    StorageGeometry,
    assemble_input,
    assemble_outputs,
    assemble_system,
    build_grid,
    build_storage_system,
    thermal_diffusivity,
    verify_stability,
)

__version__ = "0.1.0"
