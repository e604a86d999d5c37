"""Shared fixtures: reference parameters and pre-solved equilibria."""

import numpy as np
import pytest

from fdmfg import NetworkParams, SolverConfig, build_grid, solve_emfg


@pytest.fixture(scope="session")
def params():
    return NetworkParams()


@pytest.fixture(scope="session")
def grid100():
    return build_grid(1.0, 2.0, 100, 100)


@pytest.fixture(scope="session")
def eq_default(params, grid100):
    """Equilibrium on the full reference grid, default parameters."""
    return solve_emfg(grid100, params)


@pytest.fixture(scope="session")
def params_own():
    """Variant whose uplink term rewards spending: nontrivial equilibrium."""
    return NetworkParams(uplink_signal="own-power")


@pytest.fixture(scope="session")
def grid24():
    return build_grid(1.0, 2.0, 24, 24)


@pytest.fixture(scope="session")
def eq_own_small(params_own, grid24):
    return solve_emfg(grid24, params_own,
                      config=SolverConfig(power_scan_points=48))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
