"""Unit tests for the closed-form Hamiltonian and optimal controls."""

import math

import numpy as np
import pytest

from src.dynamics.dubins import RelativeState, relative_derivative
from src.reachability.solver import (
    avoid_control_from_costate,
    dissipation_bounds,
    hamiltonian,
    hamiltonian_array,
    optimal_pursue_control,
    pursue_controls_from_costates,
)
from src.reachability.grid import GridSpec

V = 5.0
OMEGA_BAR = 1.0


def brute_force_max_min(r, p, v, omega_bar, n=201):
    """max over omega_i of min over omega_j of p . relative dynamics on a lattice."""
    omegas = np.linspace(-omega_bar, omega_bar, n)
    wi = omegas[:, None]
    wj = omegas[None, :]
    xr, yr, th = r
    inner = (
        p[0] * (-v + v * np.cos(th) + wi * yr)
        + p[1] * (v * np.sin(th) - wi * xr)
        + p[2] * (wj - wi)
    )
    return float(np.max(np.min(inner, axis=1)))


class TestHamiltonian:
    """Test cases for the closed-form max-min Hamiltonian."""

    def test_tailgating_zero(self):
        """Test the drift term vanishes for aligned vehicles."""
        assert hamiltonian(RelativeState(0, 0, 0), (1.0, 0.0, 0.0), V, OMEGA_BAR) == 0.0

    def test_head_on_drift(self):
        """Test head-on closing gives -2v."""
        h = hamiltonian(RelativeState(5, 0, math.pi), (1.0, 0.0, 0.0), V, OMEGA_BAR)

        assert h == pytest.approx(-10.0)

    def test_matches_fine_lattice_example(self):
        """Test the worked example against a 0.01-spaced control lattice."""
        r, p = (2.0, 3.0, 0.0), (0.5, -1.0, 0.2)

        expected = brute_force_max_min(r, p, V, OMEGA_BAR)

        assert hamiltonian(RelativeState(*r), p, V, OMEGA_BAR) == pytest.approx(expected, abs=1e-6)

    def test_matches_brute_force_on_random_inputs(self):
        """Test 1000 random inputs against the 201 x 201 lattice max-min."""
        rng = np.random.default_rng(2024)
        for _ in range(1000):
            r = rng.uniform([-20, -20, -math.pi], [20, 20, math.pi])
            p = rng.normal(size=3)
            v = rng.uniform(1.0, 8.0)
            omega_bar = rng.uniform(0.2, 2.0)

            closed = float(hamiltonian_array(r[0], r[1], r[2], p[0], p[1], p[2], v, omega_bar))

            assert closed == pytest.approx(
                brute_force_max_min(r, p, v, omega_bar), abs=1e-6
            )

    def test_dissipation_bounds_default_domain(self):
        """Test alpha for v = 5, omega_bar = 1 on [-20, 20]^2."""
        alphas = dissipation_bounds(GridSpec.default(), V, OMEGA_BAR)

        np.testing.assert_allclose(alphas, [30.0, 25.0, 2.0])


class TestOptimalControls:
    """Test cases for the sign-switching control laws."""

    def test_positive_switch(self):
        """Test p = (1, 0, 0), r = (0, 3, 0) turns left."""
        u = avoid_control_from_costate(RelativeState(0, 3, 0), (1.0, 0.0, 0.0), OMEGA_BAR)

        assert u.omega == OMEGA_BAR

    def test_negative_switch(self):
        """Test p = (0, 0, 1) turns right from any state."""
        u = avoid_control_from_costate(RelativeState(4, -2, 1.0), (0.0, 0.0, 1.0), OMEGA_BAR)

        assert u.omega == -OMEGA_BAR

    def test_zero_switch_breaks_tie_positive(self):
        """Test a zero switching argument yields +omega_bar."""
        u = avoid_control_from_costate(RelativeState(0, 0, 0), (0.0, 0.0, 0.0), OMEGA_BAR)

        assert u.omega == OMEGA_BAR

    def test_avoid_control_attains_lattice_max(self):
        """Test the chosen turn rate is optimal over a 21-point lattice."""
        rng = np.random.default_rng(5)
        lattice = np.linspace(-OMEGA_BAR, OMEGA_BAR, 21)
        for _ in range(200):
            r = RelativeState(*rng.uniform([-15, -15, -math.pi], [15, 15, math.pi]))
            p = rng.normal(size=3)
            omega_j = rng.uniform(-OMEGA_BAR, OMEGA_BAR)

            u = avoid_control_from_costate(r, p, OMEGA_BAR)

            best = max(float(p @ relative_derivative(r, w, omega_j, V)) for w in lattice)
            chosen = float(p @ relative_derivative(r, u.omega, omega_j, V))
            assert chosen == pytest.approx(best, abs=1e-9)

    def test_pursuer_minimizes(self):
        """Test the pursuer turns against the sign of p3."""
        omegas = pursue_controls_from_costates(
            np.array([[0.0, 0.0, 2.0], [0.0, 0.0, -1.0]]), OMEGA_BAR
        )

        np.testing.assert_array_equal(omegas, [-OMEGA_BAR, OMEGA_BAR])

    @pytest.mark.parametrize(
        "p3, expected", [(2.0, -OMEGA_BAR), (0.0, -OMEGA_BAR), (-1e-12, OMEGA_BAR)]
    )
    def test_pursuer_sign_rule(self, p3, expected):
        """Test -omega_bar * sign(p3) with sign(0) -> +1."""
        omegas = pursue_controls_from_costates(np.array([[0.7, -0.3, p3]]), OMEGA_BAR)

        assert omegas[0] == expected

    def test_pursuer_minimizes_relative_rate(self):
        """Test the pursuer's turn rate attains the minimum over a lattice of its inputs."""
        rng = np.random.default_rng(9)
        lattice = np.linspace(-OMEGA_BAR, OMEGA_BAR, 21)
        for _ in range(100):
            r = RelativeState(*rng.uniform([-15, -15, -math.pi], [15, 15, math.pi]))
            p = rng.normal(size=3)
            omega_i = rng.uniform(-OMEGA_BAR, OMEGA_BAR)

            omega_j = pursue_controls_from_costates(p, OMEGA_BAR)[0]

            worst = min(float(p @ relative_derivative(r, omega_i, w, V)) for w in lattice)
            chosen = float(p @ relative_derivative(r, omega_i, omega_j, V))
            assert chosen == pytest.approx(worst, abs=1e-9)


class TestOptimalPursueControl:
    """Test cases for the pursuer's turn rate read from a grid."""

    @pytest.mark.parametrize(
        "p3, expected", [(0.4, -OMEGA_BAR), (0.0, -OMEGA_BAR), (-0.4, OMEGA_BAR)]
    )
    def test_uses_grid_costate(self, mocker, p3, expected):
        """Test the gradient's heading component decides the pursuer's turn."""
        gradient = mocker.patch(
            "src.reachability.solver.gradient_at", return_value=np.array([1.0, -2.0, p3])
        )
        r = RelativeState(3.0, 1.0, 0.5)

        u = optimal_pursue_control(mocker.sentinel.grid, r, OMEGA_BAR)

        assert u.omega == expected
        gradient.assert_called_once_with(mocker.sentinel.grid, r)
