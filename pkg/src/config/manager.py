"""Configuration Manager for centralized experiment configuration.

Reads defaults for the solver, policy, simulator, candidate box, trainer and
campaigns from environment variables (or a .env file). Command-line flags
override these defaults.
"""

import math
from dataclasses import dataclass

import structlog
from decouple import config

from ..learning.trainer import TrainConfig
from ..reachability.grid import GridSpec
from ..safety.policy import PolicyConfig
from ..scenarios.features import CandidateBox
from ..simulation.simulator import SimConfig
from ..utils.exceptions import ConfigurationError

logger = structlog.get_logger(__name__)

DEFAULT_SPEED = 5.0
DEFAULT_OMEGA_BAR = 1.0
DEFAULT_RC = 5.0


@dataclass(frozen=True)
class GridConfig:
    """Resolution and stopping rule of the level-set solve."""

    extent: float = 20.0
    dims_xy: int = 81
    dims_theta: int = 61
    tol: float = 1e-3
    t_max: float = 40.0
    cfl: float = 0.5

    def __post_init__(self):
        if self.extent <= 0 or self.tol <= 0 or self.t_max <= 0:
            raise ConfigurationError(
                "Grid extent, tolerance and pseudo-time budget must be positive",
                {"extent": self.extent, "tol": self.tol, "t_max": self.t_max},
            )
        if not 0 < self.cfl <= 1:
            raise ConfigurationError("CFL number must lie in (0, 1]", {"cfl": self.cfl})

    def spec(self) -> GridSpec:
        return GridSpec.default(self.extent, self.dims_xy, self.dims_theta)


@dataclass(frozen=True)
class CampaignDefaults:
    candidates: int = 10
    runs: int = 200
    workers: int = 1


class ConfigurationManager:
    """Centralized configuration management backed by the environment."""

    def get_grid_config(self) -> GridConfig:
        """Get level-set solver configuration.

        Returns:
            Grid resolution, tolerance, pseudo-time budget and CFL number
        """
        return GridConfig(
            extent=config("BRS_GRID_EXTENT", default=20.0, cast=float),
            dims_xy=config("BRS_GRID_DIMS_XY", default=81, cast=int),
            dims_theta=config("BRS_GRID_DIMS_THETA", default=61, cast=int),
            tol=config("BRS_TOL", default=1e-3, cast=float),
            t_max=config("BRS_T_MAX", default=40.0, cast=float),
            cfl=config("BRS_CFL", default=0.5, cast=float),
        )

    def get_policy_config(
        self, v: float = DEFAULT_SPEED, omega_bar: float = DEFAULT_OMEGA_BAR
    ) -> PolicyConfig:
        """Get least-restrictive policy configuration.

        Args:
            v: Vehicle speed (m/s)
            omega_bar: Turn-rate bound (rad/s)
        """
        return PolicyConfig(
            safety_threshold=config("POLICY_SAFETY_THRESHOLD", default=0.5, cast=float),
            goal_gain=config("POLICY_GOAL_GAIN", default=2.0, cast=float),
            goal_radius=config("POLICY_GOAL_RADIUS", default=1.0, cast=float),
            omega_bar=omega_bar,
            v=v,
        )

    def get_sim_config(
        self,
        v: float = DEFAULT_SPEED,
        omega_bar: float = DEFAULT_OMEGA_BAR,
        rc: float = DEFAULT_RC,
    ) -> SimConfig:
        """Get simulator configuration for the given physical parameters."""
        return SimConfig(
            v=v,
            omega_bar=omega_bar,
            rc=rc,
            dt=config("SIM_DT", default=0.1, cast=float),
            t_max=config("SIM_T_MAX", default=60.0, cast=float),
            policy=self.get_policy_config(v, omega_bar),
            arrived_are_obstacles=config(
                "SIM_ARRIVED_ARE_OBSTACLES", default=False, cast=bool
            ),
        )

    def get_box_config(self) -> CandidateBox:
        """Get the candidate neighbourhood half-widths."""
        return CandidateBox(
            eps_x=config("BOX_EPS_X", default=3.0, cast=float),
            eps_y=config("BOX_EPS_Y", default=3.0, cast=float),
            eps_theta=config("BOX_EPS_THETA", default=math.pi / 5, cast=float),
        )

    def get_train_config(self, seed: int = 0) -> TrainConfig:
        """Get optimizer settings.

        Args:
            seed: Training seed
        """
        return TrainConfig(
            lr=config("TRAIN_LR", default=0.01, cast=float),
            epochs=config("TRAIN_EPOCHS", default=200, cast=int),
            batch_size=config("TRAIN_BATCH_SIZE", default=64, cast=int),
            validation_fraction=config(
                "TRAIN_VALIDATION_FRACTION", default=0.1, cast=float
            ),
            seed=seed,
        )

    def get_campaign_defaults(self) -> CampaignDefaults:
        """Get default campaign sizes."""
        defaults = CampaignDefaults(
            candidates=config("CAMPAIGN_CANDIDATES", default=10, cast=int),
            runs=config("CAMPAIGN_RUNS", default=200, cast=int),
            workers=config("CAMPAIGN_WORKERS", default=1, cast=int),
        )
        if min(defaults.candidates, defaults.runs, defaults.workers) < 1:
            raise ConfigurationError(
                "Campaign defaults must be positive",
                {
                    "candidates": defaults.candidates,
                    "runs": defaults.runs,
                    "workers": defaults.workers,
                },
            )
        return defaults

    def validate_environment(self) -> bool:
        """Validate that every configuration section can be built.

        Returns:
            True if the environment yields valid configurations
        """
        try:
            self.get_grid_config()
            self.get_sim_config()
            self.get_box_config()
            self.get_train_config()
            self.get_campaign_defaults()

            logger.info("Environment validation successful")
            return True

        except Exception as e:
            logger.error("Environment validation failed", error=str(e))
            return False
