"""TOML experiment configuration: parsing, defaults, validation, echo.

An empty file is a valid configuration; every field has a default. Unknown
sections or keys are rejected rather than ignored so typos cannot silently
fall back to defaults. Fields that were defaulted are reported so a run log
shows the effective configuration. Stability of the solver grid is checked
here, at load time, not at solve time.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

try:
    import tomllib as tomli
except ModuleNotFoundError:  # Python 3.10
    import tomli

from .core import (
    ConfigurationError,
    GridSpec,
    NetworkParams,
    UPLINK_SIGNAL_MODES,
    build_grid,
    validate_cfl,
)
from .meanfield import QuadratureSpec
from .solver import SolverConfig

__all__ = ["ExperimentConfig", "load_config"]

logger = logging.getLogger(__name__)

_NETWORK_KEYS = {
    "p_static": float, "alpha": float, "lambda_bs": float, "lambda_ue": float,
    "n0": float, "p_t_ue": float, "p_ue_static": float, "h_self": float,
    "p_max": float, "beta": float, "uplink_signal": str,
}
_GRID_KEYS = {
    "horizon_t": float, "e_max": float,
    "num_time_steps": int, "num_energy_steps": int,
}
_SOLVER_KEYS = {
    "tolerance": float, "max_iterations": int, "damping": float,
    "power_scan_points": int, "terminal_coeff_a": float, "terminal_coeff_b": float,
}
_QUADRATURE_KEYS = {
    "omega_nodes": int, "r_nodes": int, "omega_cutoff": float, "r_cutoff": float,
}
_SIMULATION_KEYS = {
    "n_realizations": int, "window_half_width": float, "window_guard": float,
    "thresholds_db": list, "workers": int, "fixed_power": float,
}
_EXPERIMENT_KEYS = {"seed": int, "label": str}

_GRID_DEFAULTS = {"horizon_t": 1.0, "e_max": 2.0,
                  "num_time_steps": 100, "num_energy_steps": 100}
_SIMULATION_DEFAULTS = {
    "n_realizations": 200, "window_half_width": 200.0, "window_guard": 100.0,
    "thresholds_db": [-10.0, 0.0, 10.0], "workers": 1, "fixed_power": 1.0,
}
_EXPERIMENT_DEFAULTS = {"seed": 0, "label": ""}


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated bundle of every knob a run needs, plus its TOML echo."""

    network: NetworkParams
    grid: GridSpec
    solver: SolverConfig
    quadrature: QuadratureSpec
    n_realizations: int
    window_half_width: float
    window_guard: float
    thresholds_db: tuple
    workers: int
    fixed_power: float
    seed: int
    label: str
    echo: dict = field(repr=False, default_factory=dict)


def _coerce(section: str, key: str, value, expected):
    if expected is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigurationError(
                f"[{section}] {key} must be a number, got {value!r}")
        return float(value)
    if expected is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigurationError(
                f"[{section}] {key} must be an integer, got {value!r}")
        return value
    if expected is str:
        if not isinstance(value, str):
            raise ConfigurationError(
                f"[{section}] {key} must be a string, got {value!r}")
        return value
    if expected is list:
        if not isinstance(value, list) or not value or \
                any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value):
            raise ConfigurationError(
                f"[{section}] {key} must be a non-empty list of numbers, got {value!r}")
        return [float(v) for v in value]
    raise AssertionError(expected)


def _read_section(data: dict, section: str, schema: dict) -> dict:
    raw = data.pop(section, {})
    if not isinstance(raw, dict):
        raise ConfigurationError(f"[{section}] must be a table")
    unknown = set(raw) - set(schema)
    if unknown:
        raise ConfigurationError(
            f"unknown key(s) in [{section}]: {', '.join(sorted(unknown))}")
    out = {}
    for key, expected in schema.items():
        if key in raw:
            out[key] = _coerce(section, key, raw[key], expected)
    return out


def _log_defaults(section: str, given: dict, all_keys) -> None:
    missing = sorted(set(all_keys) - set(given))
    if missing:
        logger.info("[%s] using defaults for: %s", section, ", ".join(missing))


def load_config(path: Optional[str] = None) -> ExperimentConfig:
    """Load and validate a TOML file; None or an empty file means all defaults."""
    if path is None:
        data = {}
        echo = {}
    else:
        try:
            with open(path, "rb") as fh:
                data = tomli.load(fh)
        except tomli.TOMLDecodeError as exc:
            raise ConfigurationError(f"invalid TOML in {path}: {exc}") from exc
        echo = _roundtrip(data)

    network_kw = _read_section(data, "network", _NETWORK_KEYS)
    grid_kw = _read_section(data, "grid", _GRID_KEYS)
    solver_kw = _read_section(data, "solver", _SOLVER_KEYS)
    quad_kw = _read_section(data, "quadrature", _QUADRATURE_KEYS)
    sim_kw = _read_section(data, "simulation", _SIMULATION_KEYS)
    exp_kw = _read_section(data, "experiment", _EXPERIMENT_KEYS)
    if data:
        raise ConfigurationError(
            f"unknown section(s): {', '.join(sorted(data))}")

    _log_defaults("network", network_kw, _NETWORK_KEYS)
    _log_defaults("grid", grid_kw, _GRID_KEYS)
    _log_defaults("solver", solver_kw, _SOLVER_KEYS)
    _log_defaults("quadrature", quad_kw, _QUADRATURE_KEYS)
    _log_defaults("simulation", sim_kw, _SIMULATION_KEYS)
    _log_defaults("experiment", exp_kw, _EXPERIMENT_KEYS)

    if "uplink_signal" in network_kw and \
            network_kw["uplink_signal"] not in UPLINK_SIGNAL_MODES:
        raise ConfigurationError(
            f"[network] uplink_signal must be one of {UPLINK_SIGNAL_MODES}, "
            f"got {network_kw['uplink_signal']!r}")
    network = NetworkParams(**network_kw)
    grid_args = dict(_GRID_DEFAULTS, **grid_kw)
    grid = build_grid(**grid_args)
    solver = SolverConfig(**solver_kw)
    quadrature = QuadratureSpec(**quad_kw)
    sim = dict(_SIMULATION_DEFAULTS, **sim_kw)
    exp = dict(_EXPERIMENT_DEFAULTS, **exp_kw)

    # fail fast: an unstable grid should never reach the solver
    validate_cfl(grid, network.p_max)

    if sim["n_realizations"] < 1:
        raise ConfigurationError(
            f"[simulation] n_realizations must be >= 1, got {sim['n_realizations']}")
    if not sim["window_half_width"] > 0:
        raise ConfigurationError(
            f"[simulation] window_half_width must be positive, "
            f"got {sim['window_half_width']!r}")
    if sim["window_guard"] < 0:
        raise ConfigurationError(
            f"[simulation] window_guard must be non-negative, got {sim['window_guard']!r}")
    if sim["workers"] < 1:
        raise ConfigurationError(
            f"[simulation] workers must be >= 1, got {sim['workers']}")
    if not 0.0 <= sim["fixed_power"] <= network.p_max:
        raise ConfigurationError(
            f"[simulation] fixed_power must lie in [0, p_max], got {sim['fixed_power']!r}")
    if exp["seed"] < 0 or exp["seed"] >= 2 ** 64:
        raise ConfigurationError(
            f"[experiment] seed must be an unsigned 64-bit integer, got {exp['seed']}")

    return ExperimentConfig(
        network=network,
        grid=grid,
        solver=solver,
        quadrature=quadrature,
        n_realizations=sim["n_realizations"],
        window_half_width=sim["window_half_width"],
        window_guard=sim["window_guard"],
        thresholds_db=tuple(sim["thresholds_db"]),
        workers=sim["workers"],
        fixed_power=sim["fixed_power"],
        seed=exp["seed"],
        label=exp["label"],
        echo=echo,
    )


def _roundtrip(data):
    """Deep-copy parsed TOML into plain dict/list/scalar structures."""
    if isinstance(data, dict):
        return {k: _roundtrip(v) for k, v in data.items()}
    if isinstance(data, list):
        return [_roundtrip(v) for v in data]
    return data
