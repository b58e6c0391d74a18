"""Synchronous multi-vehicle simulation under the least-restrictive policy.

Every step all active vehicles decide from the same snapshot, then all move.
Vehicles that reach their goal are frozen. The run ends when nobody is left
under way or the time budget is spent; a violation is one unordered active
pair within Rc at one recorded instant.
"""

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
import structlog

from ..dynamics.dubins import VehicleState, step_rk4_array
from ..reachability.grid import ValueGrid
from ..safety.policy import (
    ControlDecision,
    Mode,
    PolicyConfig,
    least_restrictive_control,
    threat_assessment,
)
from ..scenarios.features import Scenario
from ..utils.exceptions import (
    ConfigurationError,
    GridMismatchError,
    SimulationError,
    ValidationError,
)

logger = structlog.get_logger(__name__)


@dataclass(frozen=True)
class SimConfig:
    """Physical and numerical parameters of one simulation."""

    v: float = 5.0
    omega_bar: float = 1.0
    rc: float = 5.0
    dt: float = 0.1
    t_max: float = 60.0
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    arrived_are_obstacles: bool = False

    def __post_init__(self):
        if self.dt <= 0 or self.t_max < self.dt or self.rc <= 0:
            raise ConfigurationError(
                "Invalid simulation timing or danger-zone radius",
                {"dt": self.dt, "t_max": self.t_max, "rc": self.rc},
            )
        if not (
            math.isclose(self.policy.v, self.v)
            and math.isclose(self.policy.omega_bar, self.omega_bar)
        ):
            raise ConfigurationError(
                "Policy and simulation disagree on v or omega_bar",
                {"v": self.v, "policy_v": self.policy.v},
            )


@dataclass(frozen=True)
class TrajectoryPoint:
    """One recorded instant of one vehicle."""

    t: float
    state: VehicleState
    mode: Mode
    active: bool


@dataclass
class SimResult:
    """Outcome of one simulation run."""

    success: bool
    violation_count: int
    reached_all: bool
    timed_out: bool
    time_to_completion: float
    trajectories: list[list[TrajectoryPoint]]
    violation_log: list[tuple[float, int, int]]


def count_step_violations(states, active, rc: float) -> list[tuple[int, int]]:
    """All unordered active pairs within distance Rc (closed), sorted.

    Args:
        states: N VehicleStates or an (N, 3) array
        active: Vehicles taking part in the check
        rc: Danger-zone radius (m)
    """
    if isinstance(states, np.ndarray):
        pos = np.atleast_2d(states)[:, :2]
    else:
        pos = np.array([[s.qx, s.qy] for s in states], dtype=float).reshape(-1, 2)
    idx = [i for i in range(len(pos)) if active[i]]
    pairs = []
    for i, j in combinations(idx, 2):
        if math.hypot(pos[j, 0] - pos[i, 0], pos[j, 1] - pos[i, 1]) <= rc:
            pairs.append((i, j))
    return pairs


def check_grid_params(grid: ValueGrid, cfg: SimConfig) -> None:
    """Raise GridMismatchError unless the grid was solved for cfg's v, omega_bar and Rc."""
    if not grid.params.matches(cfg.v, cfg.omega_bar, cfg.rc):
        raise GridMismatchError(
            "Value grid was computed for different parameters",
            {
                "grid": (grid.params.v, grid.params.omega_bar, grid.params.rc),
                "sim": (cfg.v, cfg.omega_bar, cfg.rc),
            },
        )


def run_simulation(scenario: Scenario, grid: ValueGrid, cfg: SimConfig) -> SimResult:
    """Simulate all vehicles from their initial states until done or timed out.

    Raises:
        GridMismatchError: If the grid does not match cfg's (v, omega_bar, Rc)
        SimulationError: If a state becomes non-finite
    """
    check_grid_params(grid, cfg)
    n = scenario.n_vehicles
    if n < 1:
        raise ValidationError("Scenario needs at least one vehicle")

    states = np.array([s.as_array() for s in scenario.initial_states], dtype=float)
    goals = np.array(scenario.goals, dtype=float)
    active = np.ones(n, dtype=bool)
    policy = cfg.policy
    n_steps = int(round(cfg.t_max / cfg.dt))

    trajectories: list[list[TrajectoryPoint]] = [[] for _ in range(n)]
    violation_log: list[tuple[float, int, int]] = []

    def record_violations(t: float) -> None:
        participants = np.ones(n, dtype=bool) if cfg.arrived_are_obstacles else active
        for i, j in count_step_violations(states, participants, cfg.rc):
            # two parked vehicles are not an encounter
            if active[i] or active[j]:
                violation_log.append((t, i, j))

    def deactivate_arrived() -> None:
        dist = np.hypot(states[:, 0] - goals[:, 0], states[:, 1] - goals[:, 1])
        active[:] = active & (dist > policy.goal_radius)

    deactivate_arrived()
    record_violations(0.0)

    step = 0
    timed_out = False
    while True:
        t = step * cfg.dt
        obstacles = ~active if cfg.arrived_are_obstacles else None
        values = threat_assessment(states, active, grid, obstacles=obstacles)
        decisions: list[ControlDecision | None] = [
            least_restrictive_control(
                i, states, active, goals, grid, policy, values=values, hold=cfg.dt
            )
            if active[i]
            else None
            for i in range(n)
        ]

        for i in range(n):
            mode = decisions[i].mode if decisions[i] is not None else Mode.ARRIVED
            trajectories[i].append(
                TrajectoryPoint(t, VehicleState.from_array(states[i]), mode, bool(active[i]))
            )

        if not active.any():
            break
        if step >= n_steps:
            timed_out = True
            logger.warning(
                "Simulation timed out", t=t, still_active=int(active.sum())
            )
            break

        moving = np.nonzero(active)[0]
        omegas = np.array([decisions[i].omega for i in moving])
        states[moving] = step_rk4_array(states[moving], omegas, cfg.v, cfg.dt)

        if not np.all(np.isfinite(states)):
            raise SimulationError(
                "Non-finite vehicle state",
                {"t": t, "states": states.tolist(), "active": active.tolist()},
            )

        step += 1
        deactivate_arrived()
        record_violations(step * cfg.dt)

    reached_all = not active.any()
    violation_count = len(violation_log)
    return SimResult(
        success=reached_all and violation_count == 0 and not timed_out,
        violation_count=violation_count,
        reached_all=reached_all,
        timed_out=timed_out,
        time_to_completion=step * cfg.dt,
        trajectories=trajectories,
        violation_log=violation_log,
    )
