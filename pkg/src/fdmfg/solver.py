"""Coupled backward-induction / forward-transport solver for the power game.

Each station maximizes its accumulated weighted energy efficiency over one
recharge period subject to the battery drift de = -p dt, while the population
distribution m of battery levels it plays against is itself transported by
everyone's optimal policy. The equilibrium is a fixed point of two sweeps:

  backward (value function, step x to x-1):
      V(x-1, y) = V(x, y) + dt * max_p [ U(p; I_mean(x-1)) - p * dV/de ],
      dV/de taken one-sided in y, forced p = 0 at the empty-battery row;

  forward (population, Lax-Friedrichs, step x to x+1):
      m(x+1, y) = (m(x, y-1) + m(x, y+1)) / 2
                  + (dt / 2 de) * [p(x, y+1) m(x, y+1) - p(x, y-1) m(x, y-1)],
      with zero transport flux through both energy boundaries.

The two sweeps alternate under damped relaxation of m until the sup-norm
update falls below tolerance. The scheme is explicit, so dt * p_max / de <= 1
is enforced before any sweep.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import (
    ConfigurationError,
    Field2D,
    GridSpec,
    NetworkParams,
    SchemeError,
    check_mean_field,
    initial_mean_field,
    terminal_value,
    validate_cfl,
)
from .meanfield import (
    DEFAULT_QUADRATURE,
    MeanInterference,
    QuadratureSpec,
    UtilityTable,
    interference_constant,
    utility_profile,
    utility_table,
)

__all__ = [
    "SolverConfig",
    "Equilibrium",
    "maximize_hamiltonian",
    "hjb_backward_sweep",
    "fpk_forward_sweep",
    "solve_emfg",
    "network_energy_efficiency",
]

#: Mass is clamped to zero only above this floor; anything below is a scheme bug.
_NEGATIVE_MASS_FLOOR = -1e-12

#: Fixed golden-section iteration count; shrinks the scan bracket by ~1e9.
_GOLDEN_ITERATIONS = 44

_INVPHI = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class SolverConfig:
    """Fixed-point iteration knobs plus the terminal-reward coefficients.

    ``damping`` is the relaxation weight on the new mean field each round;
    1.0 is undamped. ``power_scan_points`` sets the Hamiltonian scan
    resolution P (the scan has P+1 points). The terminal value row is
    coeff_a * exp(coeff_b * e).
    """

    tolerance: float = 1e-5
    max_iterations: int = 200
    damping: float = 0.5
    power_scan_points: int = 128
    terminal_coeff_a: float = 0.05
    terminal_coeff_b: float = 1.0

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ConfigurationError(f"tolerance must be positive, got {self.tolerance!r}")
        if not (0.0 < self.damping <= 1.0):
            raise ConfigurationError(f"damping must be in (0, 1], got {self.damping!r}")
        if self.max_iterations < 1:
            raise ConfigurationError(
                f"max_iterations must be at least 1, got {self.max_iterations!r}")
        if self.power_scan_points < 16:
            raise ConfigurationError(
                f"power_scan_points must be at least 16, got {self.power_scan_points!r}")


@dataclass(frozen=True)
class Equilibrium:
    """Converged policy / value / mean-field triple with diagnostics.

    ``mean_field`` is the forward transport of ``policy`` from the uniform
    initial row, so the pair is self-consistent by construction. The
    ``converged`` flag reports the fixed-point criterion honestly;
    ``residual_history`` holds the sup-norm mean-field update per round.
    """

    policy: Field2D
    value: Field2D
    mean_field: Field2D
    iterations: int
    final_residual: float
    converged: bool
    residual_history: tuple


TableBuilder = Callable[[MeanInterference], UtilityTable]


def _maximize_batch(table: UtilityTable, marginal_values: np.ndarray):
    """Maximize u(p) - p*c over [0, p_max] for a vector of slopes c.

    Discrete scan over the table (first maximum wins, so ties resolve to the
    smaller power), then a fixed-length golden-section pass on the table's
    interpolant inside the bracketing interval. The refined point displaces
    the scan incumbent only when it is strictly better beyond a small
    absolute margin, preserving the tie-break.
    """
    c = np.asarray(marginal_values, dtype=float)
    p_grid = table.p_grid
    u = table.u_values
    last = p_grid.size - 1

    ham = u[None, :] - p_grid[None, :] * c[:, None]
    j = np.argmax(ham, axis=1)
    p_star = p_grid[j]
    h_star = ham[np.arange(c.size), j]

    a = p_grid[np.maximum(j - 1, 0)]
    b = p_grid[np.minimum(j + 1, last)]
    interp = table.interpolant()

    def f_of(x):
        return interp(x) - x * c

    x1 = b - _INVPHI * (b - a)
    x2 = a + _INVPHI * (b - a)
    f1 = f_of(x1)
    f2 = f_of(x2)
    for _ in range(_GOLDEN_ITERATIONS):
        # ties keep the left interval, biasing the refinement to smaller power
        take_left = f1 >= f2
        a = np.where(take_left, a, x1)
        b = np.where(take_left, x2, b)
        fresh = np.where(take_left, b - _INVPHI * (b - a), a + _INVPHI * (b - a))
        ff = f_of(fresh)
        x1, x2 = np.where(take_left, fresh, x2), np.where(take_left, x1, fresh)
        f1, f2 = np.where(take_left, ff, f2), np.where(take_left, f1, ff)
    p_mid = 0.5 * (a + b)
    h_mid = interp(p_mid) - p_mid * c
    margin = 1e-12 * np.maximum(1.0, np.abs(h_star))
    better = h_mid > h_star + margin
    return np.where(better, p_mid, p_star), np.where(better, h_mid, h_star)


def maximize_hamiltonian(u_table: UtilityTable, marginal_value: float):
    """Best transmit power and Hamiltonian value at one marginal energy price."""
    p, h = _maximize_batch(u_table, np.array([float(marginal_value)]))
    return float(p[0]), float(h[0])


def _default_table_builder(params: NetworkParams, config: SolverConfig,
                           quad: QuadratureSpec) -> TableBuilder:
    def build(i: MeanInterference) -> UtilityTable:
        return utility_table(i, params, quad, config.power_scan_points)
    return build


def _backward(m_vals: np.ndarray, grid: GridSpec, params: NetworkParams,
              config: SolverConfig, terminal_row: np.ndarray,
              table_builder: TableBuilder):
    """Array-level backward sweep; pure function of the mean field values."""
    x_last = grid.num_time_steps
    n_e = grid.energy_points
    const = interference_constant(params.lambda_bs, params.alpha)
    v = np.empty((x_last + 1, n_e))
    pol = np.zeros((x_last + 1, n_e))
    v[x_last] = terminal_row
    rows = np.arange(1, n_e)
    for x in range(x_last - 1, -1, -1):
        # interference for row x: the population at row x playing the policy
        # already computed one step ahead (zero at the terminal bootstrap)
        ep = float(pol[x + 1] @ m_vals[x])
        i_mean = MeanInterference(
            i_rru=const.value * ep, i_ue=const.value * ep, expected_power=ep)
        table = table_builder(i_mean)
        dv = (v[x + 1, 1:] - v[x + 1, :-1]) / grid.de
        p_star, h_val = _maximize_batch(table, dv)
        pol[x, rows] = p_star
        v[x, rows] = v[x + 1, rows] + grid.dt * h_val
        # empty battery: no transmit choice, value accrues the idle utility
        v[x, 0] = v[x + 1, 0] + grid.dt * table.u_values[0]
        if not np.all(np.isfinite(v[x])):
            bad = int(np.flatnonzero(~np.isfinite(v[x]))[0])
            raise SchemeError(f"non-finite value at time row {x}, energy index {bad}")
    # the policy is a step function of time; extend the last interval's
    # control to the closed endpoint
    pol[x_last] = pol[x_last - 1]
    pol[:, 0] = 0.0
    return v, pol


def hjb_backward_sweep(m: Field2D, grid: GridSpec, params: NetworkParams,
                       config: SolverConfig,
                       quad: QuadratureSpec = DEFAULT_QUADRATURE,
                       terminal_row: Optional[np.ndarray] = None,
                       table_builder: Optional[TableBuilder] = None):
    """Backward value sweep against a fixed mean field.

    Returns ``(value, policy)`` fields. The terminal row of ``value`` is the
    supplied ``terminal_row`` (default: the exponential terminal reward),
    bitwise untouched. One utility table is built per time row, keyed on
    that row's mean interference.
    """
    check_mean_field(m)
    if terminal_row is None:
        terminal_row = terminal_value(grid, config.terminal_coeff_a,
                                      config.terminal_coeff_b)
    terminal_row = np.asarray(terminal_row, dtype=float)
    if terminal_row.shape != (grid.energy_points,):
        raise ConfigurationError(
            f"terminal row length {terminal_row.shape} does not match grid "
            f"({grid.energy_points},)")
    if table_builder is None:
        table_builder = _default_table_builder(params, config, quad)
    v, pol = _backward(m.values, grid, params, config, terminal_row, table_builder)
    return Field2D(grid, v), Field2D(grid, pol)


def _forward(pol_vals: np.ndarray, m0: np.ndarray, grid: GridSpec):
    """Array-level forward transport; returns the field and per-step renorms."""
    x_last = grid.num_time_steps
    n_e = grid.energy_points
    r = grid.dt / (2.0 * grid.de)
    m = np.empty((x_last + 1, n_e))
    m[0] = m0
    renorms = np.empty(x_last)
    for x in range(x_last):
        row = m[x]
        q = pol_vals[x] * row
        new = np.empty(n_e)
        new[1:-1] = 0.5 * (row[:-2] + row[2:]) + r * (q[2:] - q[:-2])
        # boundary rows: numerical flux through the wall is zero, which is
        # the conservative form of mirrored ghost cells
        new[0] = 0.5 * (row[0] + row[1]) + r * (q[1] + q[0])
        new[-1] = 0.5 * (row[-1] + row[-2]) - r * (q[-1] + q[-2])
        worst = new.min()
        if worst < _NEGATIVE_MASS_FLOOR:
            raise SchemeError(
                f"negative mass {worst:g} at time step {x + 1}; transport "
                f"scheme unstable (check the CFL ratio and boundary handling)")
        np.clip(new, 0.0, None, out=new)
        total = new.sum()
        renorms[x] = abs(total - 1.0)
        m[x + 1] = new / total
    return m, renorms


def fpk_forward_sweep(policy: Field2D, m0: np.ndarray, grid: GridSpec,
                      renorm_log: Optional[list] = None) -> Field2D:
    """Transport the initial mass row forward under a policy field.

    Assumes the CFL bound was validated by the caller. Tiny negative masses
    above -1e-12 are clamped and each row is renormalized to unit mass; the
    per-step renormalization magnitudes are appended to ``renorm_log`` when
    given. Anything below the floor aborts with a scheme failure.
    """
    if policy.values.min() < 0:
        raise ConfigurationError("policy field has negative power")
    if np.any(policy.values[:, 0] != 0.0):
        raise ConfigurationError("policy must be exactly 0 at zero battery energy")
    m0 = np.asarray(m0, dtype=float)
    if m0.shape != (grid.energy_points,):
        raise ConfigurationError(
            f"initial mass row length {m0.shape} does not match grid "
            f"({grid.energy_points},)")
    if abs(m0.sum() - 1.0) > 1e-9:
        raise ConfigurationError(f"initial mass row sums to {m0.sum()!r}, expected 1")
    m, renorms = _forward(policy.values, m0, grid)
    if renorm_log is not None:
        renorm_log.extend(renorms.tolist())
    return Field2D(grid, m)


def solve_emfg(grid: GridSpec, params: NetworkParams,
               config: SolverConfig = SolverConfig(),
               quad: QuadratureSpec = DEFAULT_QUADRATURE,
               table_builder: Optional[TableBuilder] = None) -> Equilibrium:
    """Alternate backward and forward sweeps to the mean-field fixed point.

    The mean-field iterate starts uniform on every row. Each round computes
    the best response to the current iterate, transports the population under
    that response, and relaxes the iterate toward the transported field by
    the damping weight. Convergence is a sup-norm test on the undamped
    update. Non-convergence is reported through the returned flag, not an
    exception.
    """
    validate_cfl(grid, params.p_max)
    if table_builder is None:
        table_builder = _default_table_builder(params, config, quad)
    terminal_row = terminal_value(grid, config.terminal_coeff_a, config.terminal_coeff_b)

    m0 = initial_mean_field(grid)
    m = np.tile(m0, (grid.time_points, 1))
    history = []
    converged = False
    v = pol = m_new = None
    for _ in range(config.max_iterations):
        v, pol = _backward(m, grid, params, config, terminal_row, table_builder)
        m_new, _ = _forward(pol, m0, grid)
        residual = float(np.max(np.abs(m_new - m)))
        history.append(residual)
        if residual <= config.tolerance:
            converged = True
            break
        m = config.damping * m_new + (1.0 - config.damping) * m

    return Equilibrium(
        policy=Field2D(grid, pol),
        value=Field2D(grid, v),
        mean_field=Field2D(grid, m_new),
        iterations=len(history),
        final_residual=history[-1],
        converged=converged,
        residual_history=tuple(history),
    )


def network_energy_efficiency(eq: Equilibrium, x: int, params: NetworkParams,
                              quad: QuadratureSpec = DEFAULT_QUADRATURE,
                              profile_fn=utility_profile) -> float:
    """Population-average weighted energy efficiency at time row x.

    Every term uses the same mean interference, computed from row x of the
    equilibrium mean field and policy.
    """
    if not (0 <= x <= eq.mean_field.grid.num_time_steps):
        raise ConfigurationError(f"time row {x} outside the grid")
    m_row = eq.mean_field.values[x]
    p_row = eq.policy.values[x]
    const = interference_constant(params.lambda_bs, params.alpha)
    ep = float(p_row @ m_row)
    i = MeanInterference(i_rru=const.value * ep, i_ue=const.value * ep,
                         expected_power=ep)
    u = profile_fn(p_row, i, params, quad)
    return float(m_row @ u)
