"""Experiment runners: solve, simulate, compare, and the figure recipes.

Each runner assembles a ResultBundle of CSV tables from one configured run.
Long-format grid tables use columns (t, e, value). The comparison runner
pairs the analytic network efficiency of the solved equilibrium with the
empirical efficiency measured by the simulator, under a shared seed so both
policy variants see identical deployments and fading.

Figure tables and their columns (golden headers):
  figure3.csv  t, e, power                     policy slices at t in {0, 0.5, 1}
  figure4.csv  beta, e0, t, e, power           drained-battery trajectories
  figure5.csv  t, e, m                         mean-field slices at t in {0, 0.5, 1}
  figure6.csv  beta, e, t, m                   mean-field time series at e in {0, 1, 2}
  figure7.csv  beta, t, psi_emfg, psi_fixed    network EE, analytic vs empirical
  figure8.csv  t, delta_db, theta_emfg, theta_fixed, ci_halfwidth
"""

from __future__ import annotations

import csv
import logging
from dataclasses import replace
from typing import Optional

import numpy as np

from .bundle import ResultBundle
from .config import ExperimentConfig
from .core import ConfigurationError, Field2D, GridSpec
from .meanfield import utility_profile, utility_table
from .solver import Equilibrium, network_energy_efficiency, solve_emfg
from .simulator import PolicySource, SimWindow, TrajectoryStats, simulate_trajectory

__all__ = [
    "run_solve",
    "run_simulate",
    "run_compare",
    "run_figure",
    "policy_trajectory",
    "load_policy_csv",
    "FIGURE_IDS",
]

logger = logging.getLogger(__name__)

FIGURE_IDS = (3, 4, 5, 6, 7, 8)

_SLICE_TIMES = (0.0, 0.5, 1.0)
_SLICE_ENERGIES = (0.0, 1.0, 2.0)


def _grid_rows(field: Field2D):
    """Long-format rows (t, e, value), row-major in time then energy."""
    grid = field.grid
    times = grid.times()
    energies = grid.energies()
    rows = []
    for x in range(grid.time_points):
        for y in range(grid.energy_points):
            rows.append([times[x], energies[y], field.values[x, y]])
    return rows


def _time_index(grid: GridSpec, t: float) -> int:
    x = int(round(t / grid.dt))
    if not 0 <= x <= grid.num_time_steps or abs(x * grid.dt - t) > 1e-9 * max(1.0, grid.horizon_t):
        raise ConfigurationError(f"time {t!r} is not on the grid")
    return x


def _energy_index(grid: GridSpec, e: float) -> int:
    y = int(round(e / grid.de))
    if not 0 <= y <= grid.num_energy_steps or abs(y * grid.de - e) > 1e-9 * max(1.0, grid.e_max):
        raise ConfigurationError(f"energy {e!r} is not on the grid")
    return y


def _psi_series(eq: Equilibrium, config: ExperimentConfig, profile_fn) -> np.ndarray:
    """Analytic network energy efficiency at every time row."""
    grid = eq.policy.grid
    return np.array([
        network_energy_efficiency(eq, x, config.network, quad=config.quadrature,
                                  profile_fn=profile_fn)
        for x in range(grid.time_points)
    ])


def run_solve(config: ExperimentConfig, profile_fn=None):
    """Solve the mean field game; returns (bundle, equilibrium, manifest extra).

    ``profile_fn`` substitutes the utility profile (test seam); the default
    is the full network utility.
    """
    fn = profile_fn if profile_fn is not None else utility_profile

    def table_builder(interference):
        return utility_table(interference, config.network, config.quadrature,
                             config.solver.power_scan_points, profile_fn=fn)

    eq = solve_emfg(config.grid, config.network, config=config.solver,
                    quad=config.quadrature, table_builder=table_builder)
    if eq.converged:
        logger.info("converged in %d iterations, residual %.3e",
                    eq.iterations, eq.final_residual)
    else:
        logger.warning("did not converge in %d iterations, residual %.3e",
                       eq.iterations, eq.final_residual)
    psi = _psi_series(eq, config, fn)

    bundle = ResultBundle()
    bundle.add_table("policy.csv", ["t", "e", "power"], _grid_rows(eq.policy))
    bundle.add_table("value.csv", ["t", "e", "value"], _grid_rows(eq.value))
    bundle.add_table("mean_field.csv", ["t", "e", "m"], _grid_rows(eq.mean_field))
    bundle.add_table("convergence.csv", ["iteration", "residual"],
                     [[i + 1, r] for i, r in enumerate(eq.residual_history)])
    bundle.add_table("psi.csv", ["t", "psi"],
                     [[t, p] for t, p in zip(config.grid.times(), psi)])
    extra = {"converged": eq.converged, "iterations": eq.iterations}
    return bundle, eq, extra


def _window(config: ExperimentConfig) -> SimWindow:
    return SimWindow(half_width=config.window_half_width, guard=config.window_guard)


def _simulate(config: ExperimentConfig, policy: PolicySource) -> TrajectoryStats:
    return simulate_trajectory(
        policy, config.network, config.grid, _window(config),
        n_realizations=config.n_realizations,
        thresholds_db=config.thresholds_db,
        rng_seed=config.seed, workers=config.workers)


def _stats_tables(bundle: ResultBundle, stats: TrajectoryStats, suffix: str = ""):
    tag = f"_{suffix}" if suffix else ""
    bundle.add_table(
        f"sim_ee{tag}.csv",
        ["t", "ee_bs", "ee_bs_halfwidth", "ee_link"],
        [[t, a, hw, b] for t, a, hw, b in zip(
            stats.times, stats.mean_ee, stats.ee_halfwidth, stats.mean_ee_link)])
    cov_rows = []
    for i, delta in enumerate(stats.thresholds_db):
        for x, t in enumerate(stats.times):
            cov_rows.append([t, delta, stats.coverage[x, i],
                             stats.coverage_halfwidth[x, i]])
    bundle.add_table(f"coverage{tag}.csv",
                     ["t", "delta_db", "coverage", "ci_halfwidth"], cov_rows)
    bundle.add_table(
        f"energy{tag}.csv",
        ["t", "mean_energy", "dead_fraction"],
        [[t, e, d] for t, e, d in zip(
            stats.times, stats.mean_energy, stats.dead_fraction)])
    grid_e = np.arange(stats.battery_histogram.shape[1])
    hist_rows = []
    for x, t in enumerate(stats.times):
        for y in grid_e:
            hist_rows.append([t, int(y), int(stats.battery_histogram[x, y])])
    bundle.add_table(f"battery_hist{tag}.csv", ["t", "e_index", "count"], hist_rows)


def run_simulate(config: ExperimentConfig, policy: PolicySource):
    """Simulate one policy; returns (bundle, stats)."""
    stats = _simulate(config, policy)
    logger.info("simulated %d realizations (%d discarded), %d stations scored",
                stats.n_realizations, stats.n_discarded, stats.n_bs_scored)
    bundle = ResultBundle()
    _stats_tables(bundle, stats)
    return bundle, stats


def run_compare(config: ExperimentConfig):
    """Solve, then simulate equilibrium and fixed policies on shared draws.

    Returns (bundle, diagnostics) where diagnostics carries the equilibrium
    and both trajectory statistics. psi_emfg is the analytic efficiency of
    the solved equilibrium; psi_fixed is the empirical per-station average
    from the simulator under the fixed power.
    """
    bundle, eq, extra = run_solve(config)
    policy_eq = PolicySource.from_equilibrium(eq.policy, config.network.p_max)
    policy_fx = PolicySource.fixed_power(config.fixed_power, config.network.p_max)
    stats_eq = _simulate(config, policy_eq)
    stats_fx = _simulate(config, policy_fx)

    psi_emfg = [row[1] for row in bundle.tables["psi.csv"][1]]
    del bundle.tables["psi.csv"]
    bundle.add_table(
        "psi_compare.csv", ["t", "psi_emfg", "psi_fixed"],
        [[t, a, b] for t, a, b in zip(config.grid.times(), psi_emfg,
                                      stats_fx.mean_ee)])
    cov_rows = []
    for i, delta in enumerate(stats_eq.thresholds_db):
        for x, t in enumerate(stats_eq.times):
            hw = max(stats_eq.coverage_halfwidth[x, i],
                     stats_fx.coverage_halfwidth[x, i])
            cov_rows.append([t, delta, stats_eq.coverage[x, i],
                             stats_fx.coverage[x, i], hw])
    bundle.add_table(
        "coverage_compare.csv",
        ["t", "delta_db", "theta_emfg", "theta_fixed", "ci_halfwidth"], cov_rows)
    _stats_tables(bundle, stats_eq, "emfg")
    _stats_tables(bundle, stats_fx, "fixed")
    diagnostics = {"equilibrium": eq, "stats_emfg": stats_eq, "stats_fixed": stats_fx}
    return bundle, diagnostics, extra


def policy_trajectory(policy: PolicySource, grid: GridSpec, e0: float):
    """Deterministic battery path under a policy: e' = e - p*dt, floored at 0.

    Returns (times, energies, radiated powers), each of length X+1; the power
    at each step is the drain actually taken, matching the simulator's
    truncation at an emptying battery.
    """
    if not 0.0 <= e0 <= grid.e_max:
        raise ConfigurationError(f"initial energy {e0!r} outside [0, {grid.e_max}]")
    times = grid.times()
    energies = np.empty(grid.time_points)
    powers = np.empty(grid.time_points)
    e = float(e0)
    for x, t in enumerate(times):
        p = float(policy.power(t, np.array([e]))[0])
        drain = min(p * grid.dt, e)
        energies[x] = e
        powers[x] = drain / grid.dt
        e -= drain
    return times, energies, powers


def _solve_for_beta(config: ExperimentConfig, beta: float):
    cfg = replace(config, network=replace(config.network, beta=beta))
    _, eq, _ = run_solve(cfg)
    return cfg, eq


def _merge_converged(extra: dict, eq: Equilibrium) -> None:
    extra["converged"] = extra.get("converged", True) and eq.converged


def run_figure(config: ExperimentConfig, figure_id: int):
    """Produce the data table behind one figure; returns (bundle, extra)."""
    if figure_id not in FIGURE_IDS:
        raise ConfigurationError(
            f"figure id must be one of {FIGURE_IDS}, got {figure_id!r}")
    grid = config.grid
    bundle = ResultBundle()
    extra = {}

    if figure_id == 3:
        _, eq, extra = run_solve(replace(
            config, network=replace(config.network, beta=1.0)))
        rows = []
        for t in _SLICE_TIMES:
            x = _time_index(grid, t * grid.horizon_t)
            for y in range(grid.energy_points):
                rows.append([grid.times()[x], grid.energies()[y],
                             eq.policy.values[x, y]])
        bundle.add_table("figure3.csv", ["t", "e", "power"], rows)

    elif figure_id == 4:
        rows = []
        for beta in (0.5, 1.0, 1.5):
            cfg, eq = _solve_for_beta(config, beta)
            _merge_converged(extra, eq)
            source = PolicySource.from_equilibrium(eq.policy, cfg.network.p_max)
            for e0 in (1.0, 2.0):
                times, energies, powers = policy_trajectory(source, grid, e0)
                for t, e, p in zip(times, energies, powers):
                    rows.append([beta, e0, t, e, p])
        bundle.add_table("figure4.csv", ["beta", "e0", "t", "e", "power"], rows)

    elif figure_id == 5:
        _, eq, extra = run_solve(replace(
            config, network=replace(config.network, beta=1.0)))
        rows = []
        for t in _SLICE_TIMES:
            x = _time_index(grid, t * grid.horizon_t)
            for y in range(grid.energy_points):
                rows.append([grid.times()[x], grid.energies()[y],
                             eq.mean_field.values[x, y]])
        bundle.add_table("figure5.csv", ["t", "e", "m"], rows)

    elif figure_id == 6:
        rows = []
        for beta in (0.5, 1.0):
            _, eq = _solve_for_beta(config, beta)
            _merge_converged(extra, eq)
            for e in _SLICE_ENERGIES:
                y = _energy_index(grid, min(e, grid.e_max))
                for x in range(grid.time_points):
                    rows.append([beta, grid.energies()[y], grid.times()[x],
                                 eq.mean_field.values[x, y]])
        bundle.add_table("figure6.csv", ["beta", "e", "t", "m"], rows)

    elif figure_id == 7:
        rows = []
        for beta in (0.5, 1.0):
            cfg, eq = _solve_for_beta(config, beta)
            _merge_converged(extra, eq)
            psi = _psi_series(eq, cfg, utility_profile)
            policy_fx = PolicySource.fixed_power(cfg.fixed_power, cfg.network.p_max)
            stats_fx = _simulate(cfg, policy_fx)
            for t, a, b in zip(grid.times(), psi, stats_fx.mean_ee):
                rows.append([beta, t, a, b])
        bundle.add_table("figure7.csv", ["beta", "t", "psi_emfg", "psi_fixed"], rows)

    elif figure_id == 8:
        cfg, eq = _solve_for_beta(config, 1.0)
        _merge_converged(extra, eq)
        policy_eq = PolicySource.from_equilibrium(eq.policy, cfg.network.p_max)
        policy_fx = PolicySource.fixed_power(cfg.fixed_power, cfg.network.p_max)
        cfg8 = replace(cfg, thresholds_db=(-10.0, 0.0, 10.0))
        stats_eq = _simulate(cfg8, policy_eq)
        stats_fx = _simulate(cfg8, policy_fx)
        rows = []
        for i, delta in enumerate(stats_eq.thresholds_db):
            for x, t in enumerate(stats_eq.times):
                hw = max(stats_eq.coverage_halfwidth[x, i],
                         stats_fx.coverage_halfwidth[x, i])
                rows.append([t, delta, stats_eq.coverage[x, i],
                             stats_fx.coverage[x, i], hw])
        bundle.add_table(
            "figure8.csv",
            ["t", "delta_db", "theta_emfg", "theta_fixed", "ci_halfwidth"], rows)

    return bundle, extra


def load_policy_csv(path: str, grid: GridSpec) -> Field2D:
    """Read a long-format policy table back into a grid field.

    The rows must cover exactly this grid's (t, e) points; mismatched shapes
    or coordinates are configuration errors.
    """
    values = np.full((grid.time_points, grid.energy_points), np.nan)
    times = grid.times()
    energies = grid.energies()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) != 3:
            raise ConfigurationError(f"{path}: expected header t,e,power")
        for lineno, row in enumerate(reader, start=2):
            try:
                t, e, p = (float(v) for v in row)
            except (TypeError, ValueError) as exc:
                raise ConfigurationError(f"{path}:{lineno}: bad row {row!r}") from exc
            x = int(round(t / grid.dt))
            y = int(round(e / grid.de))
            if not (0 <= x <= grid.num_time_steps and 0 <= y <= grid.num_energy_steps
                    and abs(times[x] - t) <= 1e-9 * max(1.0, grid.horizon_t)
                    and abs(energies[y] - e) <= 1e-9 * max(1.0, grid.e_max)):
                raise ConfigurationError(
                    f"{path}:{lineno}: point (t={t}, e={e}) is not on the configured grid")
            values[x, y] = p
    if np.isnan(values).any():
        raise ConfigurationError(f"{path}: table does not cover the full grid")
    return Field2D(grid=grid, values=values)
