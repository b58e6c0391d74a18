"""Least-restrictive safety-aware control.

Each active vehicle runs its task controller until some pairwise value drops
to the safety threshold; it then applies the optimal avoidance turn rate
against the single most threatening vehicle. Callers that hold controls over
a sampling interval pass it as ``hold`` and get the turn that is best over
that interval against either turn of the other vehicle.
"""

import math
from abc import ABC, abstractmethod
from collections.abc import Sequence
from dataclasses import dataclass
from enum import Enum

import numpy as np
import structlog

from ..dynamics.dubins import (
    ControlInput,
    VehicleState,
    relative_state,
    relative_states_array,
    step_rk4_array,
    wrap_angle,
)
from ..reachability.grid import ValueGrid
from ..reachability.solver import optimal_avoid_control
from ..utils.exceptions import ConfigurationError, ValidationError

logger = structlog.get_logger(__name__)

# worst-case values closer than this count as a tie
VALUE_TIE_TOL = 1e-9


@dataclass(frozen=True)
class PolicyConfig:
    """Parameters of the least-restrictive switch and the goal controller."""

    safety_threshold: float = 0.5
    goal_gain: float = 2.0
    goal_radius: float = 1.0
    omega_bar: float = 1.0
    v: float = 5.0

    def __post_init__(self):
        if self.safety_threshold < 0:
            raise ConfigurationError(
                "Safety threshold must be non-negative",
                {"safety_threshold": self.safety_threshold},
            )
        if self.goal_radius <= 0 or self.goal_gain <= 0:
            raise ConfigurationError(
                "Goal radius and gain must be positive",
                {"goal_radius": self.goal_radius, "goal_gain": self.goal_gain},
            )
        if self.omega_bar <= 0 or self.v <= 0:
            raise ConfigurationError(
                "Speed and turn-rate bound must be positive",
                {"v": self.v, "omega_bar": self.omega_bar},
            )


class Mode(str, Enum):
    GOAL = "goal"
    AVOID = "avoid"
    ARRIVED = "arrived"


@dataclass(frozen=True)
class ControlDecision:
    """Turn rate chosen for one vehicle and why."""

    omega: float
    mode: Mode
    target: int | None = None


class TaskController(ABC):
    """Controller a vehicle runs whenever it is safe."""

    @abstractmethod
    def control(
        self, state: VehicleState, goal: Sequence[float], cfg: PolicyConfig
    ) -> ControlInput:
        """Turn-rate command towards the vehicle's task."""
        pass


class GoalController(TaskController):
    """Proportional heading controller towards the goal bearing."""

    def control(
        self, state: VehicleState, goal: Sequence[float], cfg: PolicyConfig
    ) -> ControlInput:
        return goal_controller(state, goal, cfg)


def goal_controller(
    s: VehicleState, goal: Sequence[float], cfg: PolicyConfig
) -> ControlInput:
    """omega = clamp(k_p * wrap(bearing - theta), +-omega_bar)."""
    bearing = math.atan2(goal[1] - s.qy, goal[0] - s.qx)
    error = wrap_angle(bearing - s.theta)
    omega = min(cfg.omega_bar, max(-cfg.omega_bar, cfg.goal_gain * error))
    return ControlInput(omega)


def _as_state_array(states) -> np.ndarray:
    if isinstance(states, np.ndarray):
        return np.atleast_2d(states).astype(float, copy=False)
    return np.array([s.as_array() for s in states], dtype=float).reshape(-1, 3)


def threat_assessment(
    states,
    active: Sequence[bool],
    grid: ValueGrid,
    obstacles: Sequence[bool] | None = None,
) -> np.ndarray:
    """Pairwise values V(x_ij) for every ordered pair of participating vehicles.

    Args:
        states: N VehicleStates or an (N, 3) array
        active: Vehicles still under way
        grid: Solved value grid
        obstacles: Inactive vehicles that still count as threats (column side)

    Returns:
        (N, N) matrix; +inf on the diagonal and for non-participating pairs
    """
    arr = _as_state_array(states)
    n = len(arr)
    active = np.asarray(active, dtype=bool)
    threats = active.copy()
    if obstacles is not None:
        threats |= np.asarray(obstacles, dtype=bool)

    values = np.full((n, n), np.inf)
    rows, cols = np.nonzero(active[:, None] & threats[None, :] & ~np.eye(n, dtype=bool))
    if len(rows):
        rel = relative_states_array(arr[rows], arr[cols])
        values[rows, cols] = grid.interpolate(rel)
    return values


def sampled_avoid_control(
    grid: ValueGrid,
    si: VehicleState,
    sj: VehicleState,
    cfg: PolicyConfig,
    hold: float,
) -> ControlInput:
    """Avoid turn rate under a zero-order hold of length ``hold``.

    Both vehicles keep their turn rate for the whole interval. Vehicle i takes
    the bound that maximizes the lowest value over j's two bounds after one
    RK4 step; a tie falls back to the continuous-time switching law.

    Args:
        grid: Solved value grid
        si: State of the deciding vehicle
        sj: State of the vehicle it avoids
        cfg: Policy configuration
        hold: Interval the turn rate is held for (s)

    Returns:
        Turn rate +omega_bar or -omega_bar
    """
    turns = np.array([cfg.omega_bar, -cfg.omega_bar])
    omega_i = np.repeat(turns, 2)
    omega_j = np.tile(turns, 2)
    nxt_i = step_rk4_array(np.tile(si.as_array(), (4, 1)), omega_i, cfg.v, hold)
    nxt_j = step_rk4_array(np.tile(sj.as_array(), (4, 1)), omega_j, cfg.v, hold)
    worst = grid.interpolate(relative_states_array(nxt_i, nxt_j)).reshape(2, 2).min(axis=1)

    if worst[0] == worst[1] or abs(worst[0] - worst[1]) <= VALUE_TIE_TOL:
        return optimal_avoid_control(grid, relative_state(si, sj), cfg.omega_bar)
    return ControlInput(float(turns[int(np.argmax(worst))]))


def least_restrictive_control(
    i: int,
    states,
    active: Sequence[bool],
    goals,
    grid: ValueGrid,
    cfg: PolicyConfig,
    values: np.ndarray | None = None,
    task_controller: TaskController | None = None,
    hold: float | None = None,
) -> ControlDecision:
    """Decide vehicle i's turn rate from a common state snapshot.

    Args:
        i: Vehicle index (must be active)
        states: N VehicleStates or an (N, 3) array
        active: Vehicles still under way
        goals: N goal positions
        grid: Solved value grid
        cfg: Policy configuration
        values: Precomputed threat_assessment matrix for this snapshot
        task_controller: Controller used while safe (goal controller by default)
        hold: Zero-order-hold interval of the caller; when given, the avoid
            turn comes from sampled_avoid_control instead of the
            continuous-time law

    Returns:
        Avoid decision against the lowest-value vehicle when that value is at
        or below the threshold, otherwise the task controller's command
    """
    if not active[i]:
        raise ValidationError("Only active vehicles take decisions", {"vehicle": i})

    arr = _as_state_array(states)
    if values is None:
        values = threat_assessment(arr, active, grid)

    row = values[i]
    target = int(np.argmin(row))
    if row[target] <= cfg.safety_threshold:
        si = VehicleState.from_array(arr[i])
        sj = VehicleState.from_array(arr[target])
        if hold is None:
            u = optimal_avoid_control(grid, relative_state(si, sj), cfg.omega_bar)
        else:
            u = sampled_avoid_control(grid, si, sj, cfg, hold)
        return ControlDecision(omega=u.omega, mode=Mode.AVOID, target=target)

    controller = task_controller or GoalController()
    u = controller.control(VehicleState.from_array(arr[i]), goals[i], cfg)
    return ControlDecision(omega=u.omega, mode=Mode.GOAL)
