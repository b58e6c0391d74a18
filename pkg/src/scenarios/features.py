"""Scenarios, candidate initializations and the order-normalized feature map.

Base scenarios place N vehicles symmetrically on a circle facing its center,
perturbed inside the candidate box, with antipodal goals assigned by a random
permutation. Candidates re-sample every non-fixed vehicle uniformly inside
the box around the base. The feature map orders vehicles counter-clockwise
from twelve o'clock around their centroid so that vehicle labels do not
matter to the learner.
"""

import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np

from ..dynamics.dubins import VehicleState, wrap_angle
from ..utils.exceptions import ValidationError

MIN_VEHICLES = 3
MAX_VEHICLES = 10
STATE_DIM = 3
GOAL_DIM = 2


@dataclass(frozen=True)
class CandidateBox:
    """Per-block half-widths of the allowed initial-state neighbourhood."""

    eps_x: float = 3.0
    eps_y: float = 3.0
    eps_theta: float = math.pi / 5

    def __post_init__(self):
        if min(self.eps_x, self.eps_y, self.eps_theta) < 0:
            raise ValidationError(
                "Candidate box half-widths must be non-negative",
                {"eps_x": self.eps_x, "eps_y": self.eps_y, "eps_theta": self.eps_theta},
            )

    def as_array(self) -> np.ndarray:
        return np.array([self.eps_x, self.eps_y, self.eps_theta])

    def contains(self, original: VehicleState, candidate: VehicleState) -> bool:
        """True when candidate lies within the box around original."""
        return (
            abs(candidate.qx - original.qx) <= self.eps_x
            and abs(candidate.qy - original.qy) <= self.eps_y
            and abs(wrap_angle(candidate.theta - original.theta)) <= self.eps_theta
        )


@dataclass(frozen=True)
class Scenario:
    """Initial states, goals and the fixed-vehicle mask of one run."""

    initial_states: tuple[VehicleState, ...]
    goals: tuple[tuple[float, float], ...]
    fixed_mask: tuple[bool, ...]

    def __post_init__(self):
        object.__setattr__(self, "initial_states", tuple(self.initial_states))
        object.__setattr__(
            self, "goals", tuple((float(g[0]), float(g[1])) for g in self.goals)
        )
        object.__setattr__(self, "fixed_mask", tuple(bool(f) for f in self.fixed_mask))

        n = len(self.initial_states)
        if n < 1 or len(self.goals) != n or len(self.fixed_mask) != n:
            raise ValidationError(
                "Scenario lists must have equal, non-zero length",
                {
                    "states": n,
                    "goals": len(self.goals),
                    "fixed": len(self.fixed_mask),
                },
            )
        if len(set(self.goals)) != n:
            raise ValidationError("Scenario goals must be pairwise distinct")

    @property
    def n_vehicles(self) -> int:
        return len(self.initial_states)

    @property
    def n_fixed(self) -> int:
        return sum(self.fixed_mask)

    def state_array(self) -> np.ndarray:
        return np.array([s.as_array() for s in self.initial_states])

    def to_record(self) -> dict[str, Any]:
        """JSON-ready representation."""
        return {
            "states": [[s.qx, s.qy, s.theta] for s in self.initial_states],
            "goals": [[g[0], g[1]] for g in self.goals],
            "fixed": list(self.fixed_mask),
        }

    @classmethod
    def from_record(cls, record: dict[str, Any]) -> "Scenario":
        try:
            return cls(
                initial_states=tuple(
                    VehicleState(float(s[0]), float(s[1]), float(s[2]))
                    for s in record["states"]
                ),
                goals=tuple((float(g[0]), float(g[1])) for g in record["goals"]),
                fixed_mask=tuple(bool(f) for f in record["fixed"]),
            )
        except (KeyError, TypeError, IndexError) as e:
            raise ValidationError(f"Malformed scenario record: {e}") from e


def circle_radius(n: int) -> float:
    """Radius of the initialization circle, 10 + 2 (N - 3) metres."""
    return 10.0 + 2.0 * (n - 3)


def make_base_scenario(
    n: int,
    rng: np.random.Generator,
    box: CandidateBox,
    n_fixed: int = 0,
    shuffle_goals: bool = True,
) -> Scenario:
    """Perturbed symmetric-circle scenario with antipodal goals.

    Args:
        n: Number of vehicles (3..10)
        rng: Random stream for perturbations, goal assignment and fixed choice
        box: Perturbation half-widths
        n_fixed: Number of vehicles whose state may not be modified afterwards
        shuffle_goals: Assign goals by a random permutation (identity if False)

    Raises:
        ValidationError: If n or n_fixed is out of range
    """
    if not MIN_VEHICLES <= n <= MAX_VEHICLES:
        raise ValidationError(
            "Vehicle count out of range",
            {"n": n, "min": MIN_VEHICLES, "max": MAX_VEHICLES},
        )
    if not 0 <= n_fixed <= n:
        raise ValidationError("Fixed-vehicle count out of range", {"n_fixed": n_fixed})

    radius = circle_radius(n)
    eps = box.as_array()
    perturbation = rng.uniform(-eps, eps, size=(n, STATE_DIM))

    states = []
    slot_goals = []
    for k in range(n):
        angle = 2.0 * math.pi * k / n
        px, py = radius * math.cos(angle), radius * math.sin(angle)
        heading = wrap_angle(angle + math.pi)
        states.append(
            VehicleState(
                px + perturbation[k, 0],
                py + perturbation[k, 1],
                wrap_angle(heading + perturbation[k, 2]),
            )
        )
        slot_goals.append((-px, -py))

    assignment = rng.permutation(n) if shuffle_goals else np.arange(n)
    goals = tuple(slot_goals[int(assignment[k])] for k in range(n))

    fixed = np.zeros(n, dtype=bool)
    if n_fixed:
        fixed[rng.choice(n, size=n_fixed, replace=False)] = True

    return Scenario(initial_states=tuple(states), goals=goals, fixed_mask=tuple(fixed))


def sample_candidate(
    base: Scenario, box: CandidateBox, rng: np.random.Generator
) -> Scenario:
    """Uniform draw from the box around every non-fixed vehicle of base."""
    eps = box.as_array()
    deltas = rng.uniform(-eps, eps, size=(base.n_vehicles, STATE_DIM))
    states = []
    for k, original in enumerate(base.initial_states):
        if base.fixed_mask[k]:
            states.append(original)
            continue
        states.append(
            VehicleState(
                original.qx + deltas[k, 0],
                original.qy + deltas[k, 1],
                wrap_angle(original.theta + deltas[k, 2]),
            )
        )
    return Scenario(initial_states=tuple(states), goals=base.goals, fixed_mask=base.fixed_mask)


def permute_scenario(sc: Scenario, perm: Sequence[int]) -> Scenario:
    """Relabel vehicles: new vehicle k is old vehicle perm[k]."""
    return Scenario(
        initial_states=tuple(sc.initial_states[p] for p in perm),
        goals=tuple(sc.goals[p] for p in perm),
        fixed_mask=tuple(sc.fixed_mask[p] for p in perm),
    )


def ccw_order(positions: Sequence[Sequence[float]]) -> list[int]:
    """Vehicle indices ordered counter-clockwise from twelve o'clock.

    Angles are measured around the centroid, starting at +y and increasing
    counter-clockwise in [0, 2pi). Ties go to the vehicle nearer the centroid,
    then to the lower index.
    """
    pts = [(float(p[0]), float(p[1])) for p in positions]
    n = len(pts)
    if n < 1:
        raise ValidationError("ccw_order needs at least one position")

    # fsum keeps the centroid independent of vehicle order
    cx = math.fsum(p[0] for p in pts) / n
    cy = math.fsum(p[1] for p in pts) / n

    keys = []
    for idx, (px, py) in enumerate(pts):
        dx, dy = px - cx, py - cy
        alpha = math.atan2(-dx, dy) % (2.0 * math.pi)
        if alpha >= 2.0 * math.pi:
            alpha = 0.0
        keys.append((alpha, math.hypot(dx, dy), idx))

    if all(k[1] == 0.0 for k in keys):
        return list(range(n))
    return [k[2] for k in sorted(keys)]


def feature_map(sc: Scenario) -> np.ndarray:
    """h = [ordered initial states..., goals in the same order...], length 5N."""
    order = ccw_order([(s.qx, s.qy) for s in sc.initial_states])
    states = [sc.initial_states[k].as_array() for k in order]
    goals = [np.asarray(sc.goals[k], dtype=float) for k in order]
    return np.concatenate(states + goals)


def angle_columns(n_vehicles: int) -> list[int]:
    """Indices of heading entries within a feature vector."""
    return [STATE_DIM * k + 2 for k in range(n_vehicles)]
