"""Level-set solver for the two-vehicle relative Dubins avoidance game.

The avoiding vehicle i maximizes and the other vehicle j minimizes the rate of
change of the value along the relative dynamics. The Hamiltonian has the
closed form

    H(x, p) = p1 (-v + v cos thetar) + p2 v sin thetar
              + omega_bar |p1 yr - p2 xr - p3| - omega_bar |p3|

and the infinite-horizon value is the fixed point of the pseudo-time
iteration W <- W + dt * min(0, H_LF(x, grad W)), a first-order upwind scheme
with global Lax-Friedrichs dissipation. Sweeps are Jacobi updates over the
whole array.
"""

import math
from dataclasses import dataclass

import numpy as np
import structlog

from ..dynamics.dubins import (
    ControlInput,
    RelativeState,
    relative_states_array,
    step_rk4_array,
)
from ..utils.exceptions import CFLViolationError, DivergenceError, ValidationError
from .grid import BrsParams, GridSpec, ValueGrid, gradient_at

logger = structlog.get_logger(__name__)

DIVERGENCE_WINDOW = 100


def hamiltonian_array(x, y, thetar, p1, p2, p3, v: float, omega_bar: float):
    """Closed-form max-min Hamiltonian, broadcasting over array inputs."""
    return (
        p1 * (-v + v * np.cos(thetar))
        + p2 * v * np.sin(thetar)
        + omega_bar * np.abs(p1 * y - p2 * x - p3)
        - omega_bar * np.abs(p3)
    )


def hamiltonian(r: RelativeState, p, v: float, omega_bar: float) -> float:
    """Hamiltonian at one relative state and costate."""
    return float(
        hamiltonian_array(r.xr, r.yr, r.thetar, p[0], p[1], p[2], v, omega_bar)
    )


def dissipation_bounds(spec: GridSpec, v: float, omega_bar: float) -> np.ndarray:
    """Global bounds alpha_k >= |dH/dp_k| over the domain and control box."""
    max_x = max(abs(spec.mins[0]), abs(spec.maxs[0]))
    max_y = max(abs(spec.mins[1]), abs(spec.maxs[1]))
    return np.array(
        [2.0 * v + omega_bar * max_y, v + omega_bar * max_x, 2.0 * omega_bar]
    )


def cfl_number(spec: GridSpec, alphas: np.ndarray, dt_pde: float) -> float:
    return float(dt_pde * np.sum(alphas / np.asarray(spec.spacing)))


def stable_time_step(spec: GridSpec, v: float, omega_bar: float, cfl: float = 0.5) -> float:
    """Pseudo-time step giving the requested CFL number."""
    if not 0 < cfl <= 1:
        raise ValidationError("CFL number must lie in (0, 1]", {"cfl": cfl})
    alphas = dissipation_bounds(spec, v, omega_bar)
    return cfl / float(np.sum(alphas / np.asarray(spec.spacing)))


def _one_sided(values: np.ndarray, axis: int, h: float, periodic: bool):
    if periodic:
        fwd = (np.roll(values, -1, axis=axis) - values) / h
        bwd = (values - np.roll(values, 1, axis=axis)) / h
        return bwd, fwd
    diff = np.diff(values, axis=axis) / h
    first = np.take(diff, [0], axis=axis)
    last = np.take(diff, [-1], axis=axis)
    return np.concatenate([first, diff], axis=axis), np.concatenate([diff, last], axis=axis)


@dataclass
class _SweepContext:
    spec: GridSpec
    v: float
    omega_bar: float
    alphas: np.ndarray
    x: np.ndarray
    y: np.ndarray
    drift_x: np.ndarray
    drift_y: np.ndarray

    @classmethod
    def build(cls, spec: GridSpec, v: float, omega_bar: float) -> "_SweepContext":
        x, y, th = spec.mesh()
        return cls(
            spec=spec,
            v=v,
            omega_bar=omega_bar,
            alphas=dissipation_bounds(spec, v, omega_bar),
            x=x,
            y=y,
            drift_x=-v + v * np.cos(th),
            drift_y=v * np.sin(th),
        )

    def numerical_hamiltonian(self, values: np.ndarray) -> np.ndarray:
        dx = self.spec.spacing
        averaged = []
        dissipation = np.zeros_like(values)
        for k in range(3):
            bwd, fwd = _one_sided(values, k, dx[k], self.spec.periodic[k])
            averaged.append(0.5 * (bwd + fwd))
            dissipation += self.alphas[k] * 0.5 * (fwd - bwd)
        p1, p2, p3 = averaged
        ham = (
            p1 * self.drift_x
            + p2 * self.drift_y
            + self.omega_bar * np.abs(p1 * self.y - p2 * self.x - p3)
            - self.omega_bar * np.abs(p3)
        )
        return ham + dissipation

    def sweep(self, values: np.ndarray, dt_pde: float) -> np.ndarray:
        return values + dt_pde * np.minimum(0.0, self.numerical_hamiltonian(values))


def numerical_hamiltonian(grid: ValueGrid, v: float, omega_bar: float) -> np.ndarray:
    """Lax-Friedrichs numerical Hamiltonian at every node of a grid."""
    return _SweepContext.build(grid.spec, v, omega_bar).numerical_hamiltonian(grid.values)


def _check_cfl(spec: GridSpec, alphas: np.ndarray, dt_pde: float) -> None:
    number = cfl_number(spec, alphas, dt_pde)
    if dt_pde <= 0 or number > 1.0 + 1e-12:
        raise CFLViolationError(
            "Pseudo-time step violates the CFL bound",
            {"dt_pde": dt_pde, "cfl_number": number, "alphas": alphas.tolist()},
        )


def lax_friedrichs_sweep(
    grid: ValueGrid, v: float, omega_bar: float, dt_pde: float
) -> tuple[ValueGrid, float]:
    """One synchronous update of every node.

    Returns:
        The updated grid and the maximum absolute node change

    Raises:
        CFLViolationError: If dt_pde exceeds the stability bound
    """
    ctx = _SweepContext.build(grid.spec, v, omega_bar)
    _check_cfl(grid.spec, ctx.alphas, dt_pde)
    new_values = ctx.sweep(grid.values, dt_pde)
    residual = float(np.max(np.abs(new_values - grid.values)))
    return grid.with_values(new_values, sweeps=grid.sweeps + 1), residual


def solve_brs(
    init: ValueGrid,
    v: float,
    omega_bar: float,
    tol: float = 1e-3,
    t_max: float = 40.0,
    cfl: float = 0.5,
    window: float = 1.0,
) -> ValueGrid:
    """Iterate the level-set update towards the infinite-horizon value.

    Args:
        init: Signed-distance grid from signed_distance_init
        v: Vehicle speed (m/s)
        omega_bar: Turn-rate bound (rad/s)
        tol: Convergence tolerance on the change per window of pseudo-time (m)
        t_max: Pseudo-time budget (s)
        cfl: CFL number used to pick the pseudo-time step
        window: Pseudo-time span over which the residual is measured (s)

    Returns:
        Grid with converged=True when the window residual fell below tol,
        otherwise the partial result with converged=False

    Raises:
        DivergenceError: If values become non-finite or the sweep residual keeps
            growing
    """
    if not tol > 0:
        raise ValidationError("Tolerance must be positive", {"tol": tol})
    if not t_max > 0:
        raise ValidationError("Pseudo-time budget must be positive", {"t_max": t_max})

    ctx = _SweepContext.build(init.spec, v, omega_bar)
    dt_pde = stable_time_step(init.spec, v, omega_bar, cfl)
    _check_cfl(init.spec, ctx.alphas, dt_pde)

    logger.info(
        "Starting BRS solve",
        dims=init.spec.dims,
        v=v,
        omega_bar=omega_bar,
        rc=init.params.rc,
        dt_pde=dt_pde,
        tol=tol,
        t_max=t_max,
    )

    values = init.values.copy()
    window_start = values.copy()
    t = 0.0
    window_t = 0.0
    sweeps = 0
    converged = False
    window_residual = math.inf
    previous_residual: float | None = None
    streak = 0
    streak_base = 0.0

    while t < t_max - 1e-12:
        step = min(dt_pde, t_max - t)
        new_values = ctx.sweep(values, step)
        residual = float(np.max(np.abs(new_values - values)))

        if not np.all(np.isfinite(new_values)):
            raise DivergenceError(
                "Non-finite values during level-set iteration",
                {"sweeps": sweeps, "t": t, "last_residual": previous_residual},
            )

        if previous_residual is not None and residual > previous_residual:
            if streak == 0:
                streak_base = previous_residual
            streak += 1
            if streak >= DIVERGENCE_WINDOW and residual > 2.0 * max(
                streak_base, tol * dt_pde
            ):
                raise DivergenceError(
                    "Sweep residual kept growing",
                    {
                        "sweeps": sweeps,
                        "t": t,
                        "streak": streak,
                        "streak_start_residual": streak_base,
                        "residual": residual,
                    },
                )
        else:
            streak = 0

        previous_residual = residual
        values = new_values
        t += step
        window_t += step
        sweeps += 1

        if window_t >= window - 1e-12:
            window_residual = float(np.max(np.abs(values - window_start)))
            logger.info(
                "BRS solve progress",
                t=round(t, 6),
                sweeps=sweeps,
                window_residual=window_residual,
            )
            if window_residual < tol:
                converged = True
                break
            window_start = values.copy()
            window_t = 0.0

    if converged:
        logger.info("BRS solve converged", sweeps=sweeps, t=t, residual=window_residual)
    else:
        logger.warning(
            "BRS solve hit pseudo-time budget",
            sweeps=sweeps,
            t=t,
            residual=window_residual,
        )

    return init.with_values(
        values,
        params=BrsParams(v=v, omega_bar=omega_bar, rc=init.params.rc),
        converged=converged,
        residual=window_residual,
        sweeps=sweeps,
    )


def avoid_controls_from_costates(
    rel: np.ndarray, costates: np.ndarray, omega_bar: float
) -> np.ndarray:
    """Maximizing turn rates omega_bar * sign(p1 yr - p2 xr - p3); sign(0) -> +1."""
    rel = np.atleast_2d(rel)
    costates = np.atleast_2d(costates)
    switch = costates[:, 0] * rel[:, 1] - costates[:, 1] * rel[:, 0] - costates[:, 2]
    return np.where(switch >= 0.0, omega_bar, -omega_bar)


def pursue_controls_from_costates(costates: np.ndarray, omega_bar: float) -> np.ndarray:
    """Minimizing turn rates -omega_bar * sign(p3); sign(0) -> +1."""
    costates = np.atleast_2d(costates)
    return np.where(costates[:, 2] >= 0.0, -omega_bar, omega_bar)


def avoid_control_from_costate(r: RelativeState, p, omega_bar: float) -> ControlInput:
    omega = avoid_controls_from_costates(r.as_array(), np.asarray(p, float), omega_bar)
    return ControlInput(float(omega[0]))


def optimal_avoid_control(
    grid: ValueGrid, r: RelativeState, omega_bar: float
) -> ControlInput:
    """Turn rate of vehicle i that maximizes the value's rate of change."""
    return avoid_control_from_costate(r, gradient_at(grid, r), omega_bar)


def optimal_pursue_control(
    grid: ValueGrid, r: RelativeState, omega_bar: float
) -> ControlInput:
    """Turn rate of vehicle j that minimizes the value's rate of change."""
    p = gradient_at(grid, r)
    return ControlInput(float(pursue_controls_from_costates(p, omega_bar)[0]))


def game_rollout(
    grid: ValueGrid,
    rel0: np.ndarray,
    v: float,
    omega_bar: float,
    dt: float = 0.05,
    horizon: float = 10.0,
) -> np.ndarray:
    """Play optimal evader against optimal pursuer from each relative state.

    The evader starts at the origin heading along +x, so the relative state is
    also the pursuer's world state. Both vehicles are integrated with RK4.

    Args:
        grid: Solved value grid
        rel0: (k, 3) initial relative states
        v: Speed (m/s)
        omega_bar: Turn-rate bound (rad/s)
        dt: Integration step (s)
        horizon: Game duration (s)

    Returns:
        (k,) minimum inter-vehicle distance reached by each game
    """
    pursuers = np.atleast_2d(np.asarray(rel0, dtype=float)).copy()
    evaders = np.zeros_like(pursuers)
    min_distance = np.hypot(pursuers[:, 0], pursuers[:, 1])

    for _ in range(int(round(horizon / dt))):
        rel = relative_states_array(evaders, pursuers)
        costates = grid.interpolate_gradient(rel)
        omega_e = avoid_controls_from_costates(rel, costates, omega_bar)
        omega_p = pursue_controls_from_costates(costates, omega_bar)
        evaders = step_rk4_array(evaders, omega_e, v, dt)
        pursuers = step_rk4_array(pursuers, omega_p, v, dt)
        distance = np.hypot(
            pursuers[:, 0] - evaders[:, 0], pursuers[:, 1] - evaders[:, 1]
        )
        min_distance = np.minimum(min_distance, distance)

    return min_distance


@dataclass
class SoundnessReport:
    """Outcome of sampled evader-versus-pursuer games."""

    samples: int
    min_separation: float
    threshold: float
    failures: int

    @property
    def sound(self) -> bool:
        return self.failures == 0


def verify_soundness(
    grid: ValueGrid,
    n_samples: int,
    rng: np.random.Generator,
    min_value: float = 0.5,
    dt: float = 0.05,
    horizon: float = 10.0,
    max_draws: int = 1_000_000,
) -> SoundnessReport:
    """Check that states outside the BRS stay out of the danger zone.

    Relative states are drawn uniformly over the grid domain and kept when
    their value is at least min_value; each is played out with game_rollout.
    A failure is a game that gets closer than Rc minus one cell diagonal.
    """
    spec = grid.spec
    params = grid.params
    kept: list[np.ndarray] = []
    draws = 0
    while sum(len(k) for k in kept) < n_samples:
        if draws >= max_draws:
            raise ValidationError(
                "Could not draw enough safe relative states",
                {"wanted": n_samples, "draws": draws},
            )
        batch = rng.uniform(spec.mins, spec.maxs, size=(4 * n_samples, 3))
        draws += len(batch)
        values = grid.interpolate(batch)
        kept.append(batch[values >= min_value])
    samples = np.concatenate(kept)[:n_samples]

    separation = game_rollout(grid, samples, params.v, params.omega_bar, dt, horizon)
    threshold = params.rc - spec.cell_diagonal
    failures = int(np.sum(separation < threshold))

    report = SoundnessReport(
        samples=n_samples,
        min_separation=float(np.min(separation)),
        threshold=threshold,
        failures=failures,
    )
    logger.info(
        "Soundness check finished",
        samples=report.samples,
        min_separation=report.min_separation,
        threshold=report.threshold,
        failures=report.failures,
    )
    return report
