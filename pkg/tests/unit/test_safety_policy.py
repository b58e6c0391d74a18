"""Unit tests for the least-restrictive safety policy."""

import math

import numpy as np
import pytest

from src.dynamics.dubins import ControlInput, VehicleState, relative_state
from src.reachability.solver import optimal_avoid_control
from src.safety.policy import (
    Mode,
    PolicyConfig,
    TaskController,
    goal_controller,
    least_restrictive_control,
    sampled_avoid_control,
    threat_assessment,
)
from src.utils.exceptions import ConfigurationError, ValidationError


@pytest.fixture
def cfg():
    return PolicyConfig()


class TestPolicyConfig:
    """Test cases for policy configuration validation."""

    def test_defaults(self, cfg):
        """Test threshold, gain and goal radius defaults."""
        assert (cfg.safety_threshold, cfg.goal_gain, cfg.goal_radius) == (0.5, 2.0, 1.0)

    @pytest.mark.parametrize(
        "kwargs",
        [{"safety_threshold": -0.1}, {"goal_gain": 0.0}, {"goal_radius": 0.0}, {"v": -1.0}],
    )
    def test_invalid_values(self, kwargs):
        """Test out-of-range parameters raise ConfigurationError."""
        with pytest.raises(ConfigurationError):
            PolicyConfig(**kwargs)


class TestGoalController:
    """Test cases for the proportional heading controller."""

    def test_aligned_vehicle_goes_straight(self, cfg):
        """Test zero turn rate when the goal is dead ahead."""
        assert goal_controller(VehicleState(0, 0, 0), (10.0, 0.0), cfg).omega == 0.0

    def test_left_turn_is_clamped(self, cfg):
        """Test 2 * pi / 2 is clamped to omega_bar."""
        assert goal_controller(VehicleState(0, 0, 0), (0.0, 10.0), cfg).omega == 1.0

    def test_right_turn_is_clamped(self, cfg):
        """Test a goal to the right turns at -omega_bar."""
        assert goal_controller(VehicleState(0, 0, math.pi / 2), (10.0, 0.0), cfg).omega == -1.0

    def test_small_error_is_proportional(self, cfg):
        """Test small bearing errors scale with the gain."""
        u = goal_controller(VehicleState(0, 0, 0), (10.0, 1.0), cfg)

        assert u.omega == pytest.approx(2.0 * math.atan2(1.0, 10.0))


class TestThreatAssessment:
    """Test cases for pairwise value lookups."""

    def test_far_apart_vehicles_are_safe(self, small_grid):
        """Test vehicles beyond the grid extent get +inf both ways."""
        states = [VehicleState(0, 0, 0), VehicleState(40, 0, 0)]

        values = threat_assessment(states, [True, True], small_grid)

        assert values[0, 1] == math.inf
        assert values[1, 0] == math.inf

    def test_coincident_vehicles_deep_inside(self, small_grid):
        """Test coincident vehicles sit deep inside the danger zone."""
        states = [VehicleState(1, 1, 0.3), VehicleState(1, 1, 0.3)]

        values = threat_assessment(states, [True, True], small_grid)

        assert values[0, 1] <= -5.0 + small_grid.spec.cell_diagonal

    def test_head_on_is_symmetric(self, small_grid):
        """Test both vehicles of a head-on pair see the same value."""
        states = [VehicleState(0, 0, 0), VehicleState(10, 0, math.pi)]

        values = threat_assessment(states, [True, True], small_grid)

        assert values[0, 1] == pytest.approx(values[1, 0], abs=1e-9)

    def test_diagonal_and_inactive_entries(self, small_grid):
        """Test the diagonal and inactive vehicles are +inf."""
        states = np.array([[0, 0, 0], [6, 0, math.pi], [0, 6, -math.pi / 2]], dtype=float)

        values = threat_assessment(states, [True, True, False], small_grid)

        assert np.all(np.diag(values) == math.inf)
        assert np.all(values[2, :] == math.inf)
        assert np.all(values[:, 2] == math.inf)
        assert math.isfinite(values[0, 1])

    def test_inactive_obstacles_still_threaten(self, small_grid):
        """Test obstacle vehicles appear as threats but take no decisions."""
        states = [VehicleState(0, 0, 0), VehicleState(6, 0, math.pi)]

        values = threat_assessment(states, [True, False], small_grid, obstacles=[False, True])

        assert math.isfinite(values[0, 1])
        assert values[1, 0] == math.inf


class TestLeastRestrictiveControl:
    """Test cases for the safety switch."""

    def test_goal_mode_is_untouched_task_control(self, small_grid, cfg):
        """Test without threats the goal controller output passes through bit-identically."""
        states = [VehicleState(0, 0, 0.4), VehicleState(40, 40, 0)]
        goals = [(20.0, 5.0), (60.0, 40.0)]

        decision = least_restrictive_control(0, states, [True, True], goals, small_grid, cfg)

        assert decision.mode is Mode.GOAL
        assert decision.target is None
        assert decision.omega == goal_controller(states[0], goals[0], cfg).omega

    def test_threshold_crossing_triggers_avoidance(self, small_grid, cfg):
        """Test a value just below the threshold selects Avoid."""
        states = [VehicleState(0, 0, 0), VehicleState(8, 0, math.pi)]
        values = np.array([[math.inf, cfg.safety_threshold - 0.01], [math.inf, math.inf]])

        decision = least_restrictive_control(
            0, states, [True, True], [(9, 9), (-9, -9)], small_grid, cfg, values=values
        )

        assert decision.mode is Mode.AVOID
        assert decision.target == 1
        assert abs(decision.omega) == cfg.omega_bar

    def test_value_above_threshold_keeps_goal_mode(self, small_grid, cfg):
        """Test a value just above the threshold leaves the task controller in charge."""
        states = [VehicleState(0, 0, 0), VehicleState(8, 0, math.pi)]
        values = np.array([[math.inf, cfg.safety_threshold + 0.01], [math.inf, math.inf]])

        decision = least_restrictive_control(
            0, states, [True, True], [(9, 9), (-9, -9)], small_grid, cfg, values=values
        )

        assert decision.mode is Mode.GOAL

    def test_most_threatening_vehicle_is_avoided(self, small_grid, cfg):
        """Test the argmin vehicle becomes the avoidance target."""
        states = [VehicleState(0, 0, 0), VehicleState(7, 0, math.pi), VehicleState(0, 7, 0)]
        values = np.full((3, 3), math.inf)
        values[0, 1], values[0, 2] = 0.3, 0.1

        decision = least_restrictive_control(
            0, states, [True] * 3, [(9, 9), (-9, -9), (9, -9)], small_grid, cfg, values=values
        )

        assert decision.target == 2

    def test_equal_threats_pick_lowest_index(self, small_grid, cfg):
        """Test ties go to the lower vehicle index."""
        states = [VehicleState(0, 0, 0), VehicleState(7, 0, math.pi), VehicleState(0, 7, 0)]
        values = np.full((3, 3), math.inf)
        values[0, 1] = values[0, 2] = 0.2

        decision = least_restrictive_control(
            0, states, [True] * 3, [(9, 9), (-9, -9), (9, -9)], small_grid, cfg, values=values
        )

        assert decision.target == 1

    def test_head_on_pair_avoids(self, small_grid, cfg):
        """Test a close head-on pair is inside the threshold band."""
        states = [VehicleState(0, 0, 0), VehicleState(6, 0, math.pi)]

        decision = least_restrictive_control(
            0, states, [True, True], [(20, 0), (-20, 0)], small_grid, cfg
        )

        assert decision.mode is Mode.AVOID
        assert decision.target == 1

    def test_inactive_vehicle_rejected(self, small_grid, cfg):
        """Test arrived vehicles take no decisions."""
        with pytest.raises(ValidationError):
            least_restrictive_control(
                0, [VehicleState(0, 0, 0)], [False], [(1, 1)], small_grid, cfg
            )

    def test_custom_task_controller(self, small_grid, cfg):
        """Test any task controller may run while safe."""

        class Circler(TaskController):
            def control(self, state, goal, cfg):
                return ControlInput(0.25)

        decision = least_restrictive_control(
            0, [VehicleState(0, 0, 0)], [True], [(10, 0)], small_grid, cfg,
            task_controller=Circler(),
        )

        assert decision.omega == 0.25
        assert decision.mode is Mode.GOAL

    def test_decisions_are_deterministic(self, small_grid, cfg):
        """Test identical snapshots give identical decisions."""
        states = [VehicleState(0, 0, 0.1), VehicleState(7, 1, 3.0), VehicleState(2, 6, -1.5)]
        goals = [(9, 9), (-9, -9), (9, -9)]

        first = [least_restrictive_control(i, states, [True] * 3, goals, small_grid, cfg)
                 for i in range(3)]
        second = [least_restrictive_control(i, states, [True] * 3, goals, small_grid, cfg)
                  for i in range(3)]

        assert first == second


class TestSampledAvoidControl:
    """Test cases for the avoid turn under a held control."""

    PARALLEL = [VehicleState(0, 0, 0), VehicleState(0, -5.2, 0)]
    GOALS = [(20, 0), (20, -5.2)]

    def test_parallel_pair_turns_apart(self, small_grid, cfg):
        """Test side-by-side vehicles each turn away from the other."""
        values = np.array([[math.inf, 0.1], [0.1, math.inf]])
        upper = least_restrictive_control(
            0, self.PARALLEL, [True, True], self.GOALS, small_grid, cfg, values=values, hold=0.1
        )
        lower = least_restrictive_control(
            1, self.PARALLEL, [True, True], self.GOALS, small_grid, cfg, values=values, hold=0.1
        )

        assert upper.mode is Mode.AVOID and lower.mode is Mode.AVOID
        assert upper.omega == cfg.omega_bar
        assert lower.omega == -cfg.omega_bar

    def test_choice_is_stable_over_consecutive_holds(self, small_grid, cfg):
        """Test the held turn keeps its sign on the next step instead of flipping."""
        si, sj = self.PARALLEL
        first = sampled_avoid_control(small_grid, si, sj, cfg, 0.1)
        moved_i = VehicleState(0.5, 0.025, 0.1)
        moved_j = VehicleState(0.5, -5.225, -0.1)

        second = sampled_avoid_control(small_grid, moved_i, moved_j, cfg, 0.1)

        assert first.omega == second.omega == cfg.omega_bar

    def test_without_hold_uses_switching_law(self, small_grid, cfg):
        """Test omitting the hold keeps the continuous-time avoid law."""
        states = [VehicleState(0, 0, 0), VehicleState(6, 0, math.pi)]

        decision = least_restrictive_control(
            0, states, [True, True], [(20, 0), (-20, 0)], small_grid, cfg
        )

        expected = optimal_avoid_control(small_grid, relative_state(*states), cfg.omega_bar)
        assert decision.omega == expected.omega

    def test_equal_outcomes_fall_back_to_switching_law(self, small_grid, cfg):
        """Test a pair beyond the grid, where every outcome is +inf, uses sign(0) -> +1."""
        si, sj = VehicleState(0, 0, 0), VehicleState(40, 0, math.pi)

        u = sampled_avoid_control(small_grid, si, sj, cfg, 0.1)

        assert u.omega == cfg.omega_bar
