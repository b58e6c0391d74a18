"""Dubins-car kinematics and body-frame relative dynamics.

Each vehicle moves at constant speed v and steers with a bounded turn rate.
Pairwise safety is analysed in the body frame of the avoiding vehicle i:

    xr' = -v + v cos(thetar) + omega_i * yr
    yr' =  v sin(thetar) - omega_i * xr
    thetar' = omega_j - omega_i

Array helpers operate on (k, 3) state arrays and are used by the simulator;
the dataclass functions are thin wrappers so scalar and batched paths share
the same arithmetic.
"""

import math
from dataclasses import dataclass

import numpy as np

from ..utils.exceptions import ValidationError

TWO_PI = 2.0 * math.pi


def wrap_angle(a: float) -> float:
    """Wrap an angle into [-pi, pi).

    Raises:
        ValidationError: If the angle is not finite
    """
    if not math.isfinite(a):
        raise ValidationError("Angle must be finite", {"angle": a})
    if -math.pi <= a < math.pi:
        return a
    wrapped = (a + math.pi) % TWO_PI - math.pi
    # float rounding can land exactly on +pi
    if wrapped >= math.pi:
        wrapped -= TWO_PI
    return wrapped


def wrap_angles(a: np.ndarray) -> np.ndarray:
    """Vectorized wrap_angle."""
    a = np.asarray(a, dtype=float)
    wrapped = np.mod(a + np.pi, TWO_PI) - np.pi
    wrapped = np.where(wrapped >= np.pi, wrapped - TWO_PI, wrapped)
    return np.where((a >= -np.pi) & (a < np.pi), a, wrapped)


@dataclass(frozen=True)
class VehicleState:
    """Absolute Dubins state: position (m) and heading (rad, wrapped)."""

    qx: float
    qy: float
    theta: float

    def __post_init__(self):
        if not (math.isfinite(self.qx) and math.isfinite(self.qy)):
            raise ValidationError(
                "Vehicle position must be finite", {"qx": self.qx, "qy": self.qy}
            )
        object.__setattr__(self, "qx", float(self.qx))
        object.__setattr__(self, "qy", float(self.qy))
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))

    def as_array(self) -> np.ndarray:
        return np.array([self.qx, self.qy, self.theta])

    @classmethod
    def from_array(cls, row) -> "VehicleState":
        return cls(float(row[0]), float(row[1]), float(row[2]))


@dataclass(frozen=True)
class ControlInput:
    """Turn-rate command (rad/s)."""

    omega: float

    def check_bound(self, omega_bar: float) -> None:
        """Raise if the command exceeds the turn-rate bound."""
        if abs(self.omega) > omega_bar:
            raise ValidationError(
                "Turn rate exceeds bound",
                {"omega": self.omega, "omega_bar": omega_bar},
            )


@dataclass(frozen=True)
class RelativeState:
    """State of vehicle j expressed in the body frame of vehicle i."""

    xr: float
    yr: float
    thetar: float

    def __post_init__(self):
        object.__setattr__(self, "thetar", wrap_angle(float(self.thetar)))

    def as_array(self) -> np.ndarray:
        return np.array([self.xr, self.yr, self.thetar])

    @classmethod
    def from_array(cls, row) -> "RelativeState":
        return cls(float(row[0]), float(row[1]), float(row[2]))


def dubins_derivative(s: VehicleState, u: ControlInput, v: float) -> np.ndarray:
    """Time derivative (v cos theta, v sin theta, omega) of a Dubins state."""
    return np.array([v * math.cos(s.theta), v * math.sin(s.theta), u.omega])


def _derivative_array(states: np.ndarray, omegas: np.ndarray, v: float) -> np.ndarray:
    return np.stack(
        [v * np.cos(states[:, 2]), v * np.sin(states[:, 2]), omegas], axis=1
    )


def step_rk4_array(
    states: np.ndarray, omegas: np.ndarray, v: float, dt: float
) -> np.ndarray:
    """Classical RK4 step for a batch of vehicles with zero-order-hold controls.

    Args:
        states: (k, 3) array of (qx, qy, theta)
        omegas: (k,) turn rates held over the step
        v: Speed (m/s)
        dt: Step length (s)

    Returns:
        (k, 3) array of next states, headings wrapped
    """
    if dt <= 0:
        raise ValidationError("Time step must be positive", {"dt": dt})
    states = np.asarray(states, dtype=float)
    omegas = np.asarray(omegas, dtype=float)

    k1 = _derivative_array(states, omegas, v)
    k2 = _derivative_array(states + 0.5 * dt * k1, omegas, v)
    k3 = _derivative_array(states + 0.5 * dt * k2, omegas, v)
    k4 = _derivative_array(states + dt * k3, omegas, v)
    nxt = states + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    nxt[:, 2] = wrap_angles(nxt[:, 2])
    return nxt


def step_rk4(s: VehicleState, u: ControlInput, v: float, dt: float) -> VehicleState:
    """Advance one vehicle by one RK4 step."""
    nxt = step_rk4_array(s.as_array()[None, :], np.array([u.omega]), v, dt)
    return VehicleState.from_array(nxt[0])


def relative_states_array(si: np.ndarray, sj: np.ndarray) -> np.ndarray:
    """Body-frame relative states for paired rows of si and sj."""
    si = np.atleast_2d(np.asarray(si, dtype=float))
    sj = np.atleast_2d(np.asarray(sj, dtype=float))
    dx = sj[:, 0] - si[:, 0]
    dy = sj[:, 1] - si[:, 1]
    c = np.cos(si[:, 2])
    s = np.sin(si[:, 2])
    xr = c * dx + s * dy
    yr = -s * dx + c * dy
    thetar = wrap_angles(sj[:, 2] - si[:, 2])
    return np.stack([xr, yr, thetar], axis=1)


def relative_state(si: VehicleState, sj: VehicleState) -> RelativeState:
    """Express vehicle j's state in vehicle i's body frame."""
    row = relative_states_array(si.as_array(), sj.as_array())[0]
    return RelativeState.from_array(row)


def relative_derivative_array(
    rel: np.ndarray, omega_i, omega_j, v: float
) -> np.ndarray:
    """Vectorized relative dynamics over (k, 3) relative states."""
    rel = np.atleast_2d(np.asarray(rel, dtype=float))
    xr, yr, thetar = rel[:, 0], rel[:, 1], rel[:, 2]
    omega_i = np.asarray(omega_i, dtype=float)
    omega_j = np.asarray(omega_j, dtype=float)
    return np.stack(
        [
            -v + v * np.cos(thetar) + omega_i * yr,
            v * np.sin(thetar) - omega_i * xr,
            np.broadcast_to(omega_j - omega_i, xr.shape),
        ],
        axis=1,
    )


def relative_derivative(
    r: RelativeState, omega_i: float, omega_j: float, v: float
) -> np.ndarray:
    """Time derivative of the body-frame relative state."""
    return np.array(
        [
            -v + v * math.cos(r.thetar) + omega_i * r.yr,
            v * math.sin(r.thetar) - omega_i * r.xr,
            omega_j - omega_i,
        ]
    )
