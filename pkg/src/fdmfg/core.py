"""Grid, parameter, and field primitives shared by the solver and the simulator.

The state space is one recharge period [0, T] seconds crossed with residual
battery energy [0, E_max] joules. Time is discretized into X uniform steps
(X+1 grid rows) and energy into Y uniform steps (Y+1 grid columns). A
distribution over battery levels is carried as a probability mass vector over
the Y+1 energy points, so expectations are plain weighted sums.

Everything defined here is an immutable value type; instances can be shared
freely across workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

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
]

#: Allowed drift of a mass row away from unit total.
MASS_TOLERANCE = 1e-6

UPLINK_SIGNAL_MODES = ("ue-power", "own-power")


class FdmfgError(Exception):
    """Base class for package failures."""


class ConfigurationError(FdmfgError, ValueError):
    """A parameter, argument, or configuration value violates a precondition."""


class StabilityError(FdmfgError, RuntimeError):
    """Grid resolution violates the explicit transport scheme's CFL bound."""

    def __init__(self, message: str, ratio: float):
        super().__init__(message)
        self.ratio = ratio


class DivergenceError(FdmfgError, ValueError):
    """A requested integral or constant has no finite value."""


class SchemeError(FdmfgError, RuntimeError):
    """A numerical sweep produced an invalid state (negative mass, NaN)."""


@dataclass(frozen=True)
class GridSpec:
    """Uniform discretization of the time/energy rectangle [0, T] x [0, E_max].

    ``num_time_steps`` is the step count X (the grid has X+1 time points) and
    ``num_energy_steps`` is Y (Y+1 energy points). ``dt`` and ``de`` are the
    derived step widths T/X and E_max/Y.
    """

    horizon_t: float
    e_max: float
    num_time_steps: int
    num_energy_steps: int
    dt: float
    de: float

    @property
    def time_points(self) -> int:
        return self.num_time_steps + 1

    @property
    def energy_points(self) -> int:
        return self.num_energy_steps + 1

    def times(self) -> np.ndarray:
        """Time coordinates of the grid rows."""
        return np.arange(self.time_points) * self.dt

    def energies(self) -> np.ndarray:
        """Energy coordinates of the grid columns."""
        return np.arange(self.energy_points) * self.de


def build_grid(horizon_t: float, e_max: float, num_time_steps: int,
               num_energy_steps: int) -> GridSpec:
    """Build the uniform grid; rejects degenerate extents and step counts.

    At least two steps per axis are required so that interior stencils and
    one-sided boundary differences both exist.
    """
    if not (horizon_t > 0 and math.isfinite(horizon_t)):
        raise ConfigurationError(f"horizon must be positive and finite, got {horizon_t!r}")
    if not (e_max > 0 and math.isfinite(e_max)):
        raise ConfigurationError(f"energy capacity must be positive and finite, got {e_max!r}")
    if num_time_steps < 2:
        raise ConfigurationError(f"need at least 2 time steps, got {num_time_steps}")
    if num_energy_steps < 2:
        raise ConfigurationError(f"need at least 2 energy steps, got {num_energy_steps}")
    return GridSpec(
        horizon_t=float(horizon_t),
        e_max=float(e_max),
        num_time_steps=int(num_time_steps),
        num_energy_steps=int(num_energy_steps),
        dt=float(horizon_t) / int(num_time_steps),
        de=float(e_max) / int(num_energy_steps),
    )


def validate_cfl(grid: GridSpec, p_max: float) -> float:
    """Check the stability bound dt * p_max / de <= 1 and return the ratio.

    The battery drains at most p_max watts, so the transport speed never
    exceeds p_max and the explicit scheme is stable exactly when the returned
    ratio is at most one. On violation the error reports the ratio together
    with the largest stable energy-step count and the smallest stable
    time-step count for the same physical extents.
    """
    ratio = grid.dt * p_max / grid.de
    if ratio > 1.0:
        max_y = int(math.floor(grid.num_time_steps * grid.e_max / (grid.horizon_t * p_max)))
        min_x = int(math.ceil(grid.horizon_t * p_max * grid.num_energy_steps / grid.e_max))
        raise StabilityError(
            f"CFL violation: dt*p_max/de = {ratio:g} > 1 "
            f"(dt={grid.dt:g}, de={grid.de:g}, p_max={p_max:g}); "
            f"use at most {max_y} energy steps or at least {min_x} time steps",
            ratio=ratio,
        )
    return ratio


@dataclass(frozen=True)
class NetworkParams:
    """Physical constants of the cellular network model.

    Powers in watts, intensities per square meter, path-loss exponent and
    gains dimensionless. ``beta`` weights the uplink term of the utility.
    ``uplink_signal`` picks the desired-signal power inside the uplink rate
    integral: ``"ue-power"`` (default) uses the UE transmit power, matching
    the uplink SINR definition; ``"own-power"`` uses the base station's own
    transmit power, an alternative convention kept for study.
    """

    p_static: float = 6.0
    alpha: float = 3.0
    lambda_bs: float = 5e-4
    lambda_ue: float = 2.5e-3
    n0: float = 1e-8
    p_t_ue: float = 0.1
    p_ue_static: float = 0.5
    h_self: float = 4e-4
    p_max: float = 1.0
    beta: float = 1.0
    uplink_signal: str = "ue-power"

    def __post_init__(self):
        if not self.alpha > 2:
            raise ConfigurationError(
                f"path-loss exponent must exceed 2 (aggregate interference "
                f"diverges at alpha = 2), got {self.alpha!r}")
        if not self.p_static > 0:
            raise ConfigurationError(f"p_static must be positive, got {self.p_static!r}")
        for name in ("lambda_bs", "lambda_ue", "n0", "p_t_ue", "p_ue_static",
                     "h_self", "beta"):
            value = getattr(self, name)
            if not (value >= 0 and math.isfinite(value)):
                raise ConfigurationError(f"{name} must be finite and non-negative, got {value!r}")
        if not self.p_max > 0:
            raise ConfigurationError(f"p_max must be positive, got {self.p_max!r}")
        if self.uplink_signal not in UPLINK_SIGNAL_MODES:
            raise ConfigurationError(
                f"uplink_signal must be one of {UPLINK_SIGNAL_MODES}, got {self.uplink_signal!r}")


@dataclass(frozen=True)
class Field2D:
    """A real-valued function sampled on the grid, shape (X+1, Y+1).

    Concrete roles: value function, transmit-power policy, mean field. The
    value matrix is copied on construction and frozen read-only.
    """

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True)
        expected = (self.grid.time_points, self.grid.energy_points)
        if v.shape != expected:
            raise ConfigurationError(f"field shape {v.shape} does not match grid {expected}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


def check_policy(field: Field2D, p_max: float) -> None:
    """Validate the policy role: values in [0, p_max], zero at empty battery."""
    v = field.values
    if v.min() < 0 or v.max() > p_max:
        raise ConfigurationError(
            f"policy values outside [0, {p_max:g}]: range [{v.min():g}, {v.max():g}]")
    if np.any(v[:, 0] != 0.0):
        raise ConfigurationError("policy must be exactly 0 at zero battery energy")


def check_mean_field(field: Field2D, mass_tolerance: float = MASS_TOLERANCE) -> None:
    """Validate the mean-field role: non-negative rows of unit mass."""
    v = field.values
    if v.min() < 0:
        raise ConfigurationError(f"mean field has negative mass {v.min():g}")
    drift = np.abs(v.sum(axis=1) - 1.0)
    worst = int(np.argmax(drift))
    if drift[worst] > mass_tolerance:
        raise ConfigurationError(
            f"mean-field row {worst} mass deviates from 1 by {drift[worst]:g} "
            f"(tolerance {mass_tolerance:g})")


def terminal_value(grid: GridSpec, coeff_a: float = 0.05, coeff_b: float = 1.0) -> np.ndarray:
    """Terminal value row V(T, e) = coeff_a * exp(coeff_b * e).

    Rewards residual battery energy at the end of the period; strictly
    increasing in e for positive coefficients.
    """
    return coeff_a * np.exp(coeff_b * grid.energies())


def initial_mean_field(grid: GridSpec) -> np.ndarray:
    """Uniform initial battery distribution: mass 1/(Y+1) on every level."""
    n = grid.energy_points
    return np.full(n, 1.0 / n)
