"""Shared fixtures: solved value grids and matching simulator settings."""

import pytest

from src.reachability.grid import GridSpec, signed_distance_init
from src.reachability.solver import solve_brs
from src.safety.policy import PolicyConfig
from src.simulation.simulator import SimConfig

SPEED = 5.0
OMEGA_BAR = 1.0
RC = 5.0


def make_sim_config(**overrides) -> SimConfig:
    """SimConfig for the fixture physics, with optional overrides."""
    policy_overrides = overrides.pop("policy", {})
    params = {"v": SPEED, "omega_bar": OMEGA_BAR, "rc": RC, **overrides}
    policy = PolicyConfig(v=params["v"], omega_bar=params["omega_bar"], **policy_overrides)
    return SimConfig(policy=policy, **params)


@pytest.fixture(scope="session")
def small_grid():
    """Coarse solved grid; good enough for policy and simulator tests."""
    init = signed_distance_init(GridSpec.default(extent=15.0, dims_xy=31, dims_theta=25), RC)
    return solve_brs(init, SPEED, OMEGA_BAR, tol=1e-2, t_max=20.0)


@pytest.fixture(scope="session")
def default_grid():
    """Grid at the default resolution and stopping rule."""
    init = signed_distance_init(GridSpec.default(), RC)
    return solve_brs(init, SPEED, OMEGA_BAR)


@pytest.fixture
def sim_config():
    return make_sim_config()
