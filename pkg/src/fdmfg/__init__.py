"""Energy-aware power control for battery-powered full-duplex cells.

The package solves a mean field game over a population of battery-powered
radio units: a backward Hamilton-Jacobi-Bellman sweep for the value of
residual energy, a forward Fokker-Planck transport sweep for the battery
distribution, iterated to a fixed point. A stochastic-geometry Monte Carlo
simulator validates the solution on sampled networks, and experiment runners
emit reproducible CSV bundles.

Typical use:

    from fdmfg import NetworkParams, build_grid, solve_emfg
    grid = build_grid(horizon_t=1.0, e_max=2.0, num_time_steps=100,
                      num_energy_steps=100)
    eq = solve_emfg(grid, NetworkParams())
"""

from .core import (
    ConfigurationError,
    DivergenceError,
    FdmfgError,
    Field2D,
    GridSpec,
    NetworkParams,
    SchemeError,
    StabilityError,
    build_grid,
    check_mean_field,
    check_policy,
    initial_mean_field,
    terminal_value,
    validate_cfl,
)
from .meanfield import (
    DEFAULT_QUADRATURE,
    InterferenceConstant,
    MeanInterference,
    QuadratureSpec,
    UtilityTable,
    expected_power,
    interference_constant,
    mean_interference,
    phi1,
    phi2,
    utility_profile,
    utility_table,
    weighted_utility,
)
from .solver import (
    Equilibrium,
    SolverConfig,
    fpk_forward_sweep,
    hjb_backward_sweep,
    maximize_hamiltonian,
    network_energy_efficiency,
    solve_emfg,
)
from .simulator import (
    NetworkRealization,
    PolicySource,
    SimWindow,
    StepDraws,
    TrajectoryStats,
    coverage_probability,
    downlink_sinr,
    path_gain,
    sample_network,
    simulate_trajectory,
    step_batteries,
    uplink_sinr,
    weighted_bs_ee,
)
from .config import ExperimentConfig, load_config
from .bundle import ResultBundle, emit_bundle, format_float
from .experiments import (
    load_policy_csv,
    policy_trajectory,
    run_compare,
    run_figure,
    run_simulate,
    run_solve,
)

__version__ = "0.1.0"

__all__ = [
    "FdmfgError",
    "ConfigurationError",
    "StabilityError",
    "DivergenceError",
    "SchemeError",
    "GridSpec",
    "NetworkParams",
    "Field2D",
    "build_grid",
    "validate_cfl",
    "terminal_value",
    "initial_mean_field",
    "check_policy",
    "check_mean_field",
    "InterferenceConstant",
    "MeanInterference",
    "QuadratureSpec",
    "DEFAULT_QUADRATURE",
    "UtilityTable",
    "interference_constant",
    "expected_power",
    "mean_interference",
    "phi1",
    "phi2",
    "utility_profile",
    "weighted_utility",
    "utility_table",
    "SolverConfig",
    "Equilibrium",
    "maximize_hamiltonian",
    "hjb_backward_sweep",
    "fpk_forward_sweep",
    "solve_emfg",
    "network_energy_efficiency",
    "SimWindow",
    "NetworkRealization",
    "StepDraws",
    "PolicySource",
    "TrajectoryStats",
    "sample_network",
    "path_gain",
    "downlink_sinr",
    "uplink_sinr",
    "weighted_bs_ee",
    "step_batteries",
    "coverage_probability",
    "simulate_trajectory",
    "ExperimentConfig",
    "load_config",
    "ResultBundle",
    "emit_bundle",
    "format_float",
    "run_solve",
    "run_simulate",
    "run_compare",
    "run_figure",
    "policy_trajectory",
    "load_policy_csv",
    "__version__",
]
