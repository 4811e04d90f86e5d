"""Rank-constrained low-order FIR identification via nonconvex ADMM.

The public surface mirrors the workflow: simulate or load data, assemble
the lifted problem, solve it with a penalty strategy of choice, and run
Monte Carlo comparisons over strategies.
"""

from rcadmm.admm import admm_step, augmented_lagrangian, initial_state, residuals
from rcadmm.driver import DriverConfig, IterationRecord, SolveResult, solve
from rcadmm.errors import (
    ConfigError,
    IllConditionedError,
    NumericFailure,
    SensitivityUnavailable,
)
from rcadmm.penalty import (
    ConstantPenalty,
    MultiplicativePenalty,
    ResidualBasedPenalty,
    SelfAdaptivePenalty,
    increment_diagnostics,
)
from rcadmm.problem import (
    KernelConfig,
    RcpProblem,
    RegressionData,
    assemble_problem,
    kernel_initialize,
    least_squares_estimate,
)
from rcadmm.simulate import (
    BenchmarkScenario,
    ExperimentCell,
    McResult,
    RelayConfig,
    SotdPlant,
    default_scenario,
    monte_carlo,
    simulate_relay,
    true_impulse_response,
)

__version__ = "0.1.0"

__all__ = [
    "BenchmarkScenario",
    "ConfigError",
    "ConstantPenalty",
    "DriverConfig",
    "ExperimentCell",
    "IllConditionedError",
    "IterationRecord",
    "KernelConfig",
    "McResult",
    "MultiplicativePenalty",
    "NumericFailure",
    "RcpProblem",
    "RegressionData",
    "RelayConfig",
    "ResidualBasedPenalty",
    "SelfAdaptivePenalty",
    "SensitivityUnavailable",
    "SolveResult",
    "SotdPlant",
    "admm_step",
    "assemble_problem",
    "augmented_lagrangian",
    "default_scenario",
    "increment_diagnostics",
    "initial_state",
    "kernel_initialize",
    "least_squares_estimate",
    "monte_carlo",
    "residuals",
    "simulate_relay",
    "solve",
    "true_impulse_response",
    "__version__",
]
