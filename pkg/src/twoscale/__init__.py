"""Two time-scale linear stochastic approximation with constant step
sizes: simulation, finite-time mean-square-error certification, adaptive
learning-rate scheduling, and a TDC policy-evaluation benchmark harness."""

__version__ = "0.1.0"

from . import adapt, bench, certify, chainlab, errors, matproc, rl, tsa
from .adapt import AdaptiveHyperparams, AdaptiveState, adaptive_update, best_fit_slope
from .bench import ExperimentConfig, compare_schedules, parse_config, run_experiment
from .certify import DriftConstants, compute_constants, drift_check, mse_bound
from .chainlab import (
    MarkovLSAInstance,
    SteadyState,
    center_offsets,
    mixing_time,
    random_instance,
    stationary_distribution,
    steady_state_means,
    validate_assumptions,
)
from .matproc import build_block_P, is_hurwitz, operator_norm, solve_lyapunov, spectral_bounds
from .rl import EnvSpec, FourierBasis, TdcWeights, env_reset, env_step, features, neu, tdc_step
from .tsa import (
    Adaptive,
    Constant,
    IterateState,
    PolynomialDecay,
    Trace,
    lyapunov_value,
    run_trajectory,
    schedule_rates,
    step,
)
