"""Value-function grids over the relative state space.

A grid stores V(xr, yr, thetar) at the nodes of a regular 3-D lattice. The
x and y axes include both end points; the heading axis is periodic and holds
dims nodes at -pi + k * 2pi / dims. Queries interpolate trilinearly and treat
relative positions outside the (x, y) extent as certainly safe.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ..dynamics.dubins import RelativeState, wrap_angles
from ..utils.exceptions import ValidationError


@dataclass(frozen=True)
class GridSpec:
    """Discretization domain for the relative state space."""

    mins: tuple[float, float, float]
    maxs: tuple[float, float, float]
    dims: tuple[int, int, int]
    periodic: tuple[bool, bool, bool] = (False, False, True)

    def __post_init__(self):
        object.__setattr__(self, "mins", tuple(float(m) for m in self.mins))
        object.__setattr__(self, "maxs", tuple(float(m) for m in self.maxs))
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "periodic", tuple(bool(p) for p in self.periodic))

        if not (len(self.mins) == len(self.maxs) == len(self.dims) == 3):
            raise ValidationError("Grid must be three-dimensional")
        for k in range(3):
            if not self.mins[k] < self.maxs[k]:
                raise ValidationError(
                    "Grid mins must be below maxs",
                    {"axis": k, "min": self.mins[k], "max": self.maxs[k]},
                )
            if self.dims[k] < 3:
                raise ValidationError(
                    "Grid needs at least 3 nodes per axis",
                    {"axis": k, "dims": self.dims[k]},
                )
        if self.periodic[0] or self.periodic[1] or not self.periodic[2]:
            raise ValidationError("Only the heading axis may be periodic")
        if not (
            math.isclose(self.mins[2], -math.pi, abs_tol=1e-12)
            and math.isclose(self.maxs[2], math.pi, abs_tol=1e-12)
        ):
            raise ValidationError(
                "Periodic heading axis must span [-pi, pi)",
                {"min": self.mins[2], "max": self.maxs[2]},
            )

    @classmethod
    def default(
        cls, extent: float = 20.0, dims_xy: int = 81, dims_theta: int = 61
    ) -> "GridSpec":
        """Square (x, y) domain [-extent, extent] with a full heading circle."""
        return cls(
            mins=(-extent, -extent, -math.pi),
            maxs=(extent, extent, math.pi),
            dims=(dims_xy, dims_xy, dims_theta),
        )

    @property
    def spacing(self) -> tuple[float, float, float]:
        """Cell sizes dx_k per axis."""
        out = []
        for k in range(3):
            span = self.maxs[k] - self.mins[k]
            out.append(span / self.dims[k] if self.periodic[k] else span / (self.dims[k] - 1))
        return tuple(out)

    @property
    def cell_diagonal(self) -> float:
        return math.sqrt(sum(d * d for d in self.spacing))

    def axis(self, k: int) -> np.ndarray:
        """Node coordinates along axis k."""
        return self.mins[k] + self.spacing[k] * np.arange(self.dims[k])

    def mesh(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Broadcastable node coordinate arrays (x, y, theta)."""
        return (
            self.axis(0)[:, None, None],
            self.axis(1)[None, :, None],
            self.axis(2)[None, None, :],
        )


@dataclass(frozen=True)
class BrsParams:
    """Game parameters a value grid was computed for."""

    v: float = math.nan
    omega_bar: float = math.nan
    rc: float = math.nan

    def matches(self, v: float, omega_bar: float, rc: float) -> bool:
        return (
            math.isclose(self.v, v, rel_tol=1e-12)
            and math.isclose(self.omega_bar, omega_bar, rel_tol=1e-12)
            and math.isclose(self.rc, rc, rel_tol=1e-12)
        )


@dataclass
class ValueGrid:
    """Sampled value function; its non-positive sublevel set is the BRS."""

    spec: GridSpec
    values: np.ndarray
    params: BrsParams = field(default_factory=BrsParams)
    converged: bool = False
    residual: float = math.inf
    sweeps: int = 0
    _gradient: np.ndarray | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.spec.dims:
            raise ValidationError(
                "Value array shape does not match grid dims",
                {"shape": self.values.shape, "dims": self.spec.dims},
            )
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("Value grid contains non-finite samples")

    def with_values(self, values: np.ndarray, **changes) -> "ValueGrid":
        """Copy with new values (and optionally updated metadata)."""
        return ValueGrid(
            spec=self.spec,
            values=values,
            params=changes.get("params", self.params),
            converged=changes.get("converged", self.converged),
            residual=changes.get("residual", self.residual),
            sweeps=changes.get("sweeps", self.sweeps),
        )

    def node_gradient(self) -> np.ndarray:
        """Central-difference gradient at every node, shape dims + (3,)."""
        if self._gradient is None:
            dx, dy, dth = self.spec.spacing
            gx = np.gradient(self.values, dx, axis=0)
            gy = np.gradient(self.values, dy, axis=1)
            gth = (np.roll(self.values, -1, axis=2) - np.roll(self.values, 1, axis=2)) / (
                2.0 * dth
            )
            self._gradient = np.stack([gx, gy, gth], axis=-1)
        return self._gradient

    def _locate(self, points: np.ndarray):
        spec = self.spec
        points = np.atleast_2d(np.asarray(points, dtype=float))
        dx, dy, dth = spec.spacing
        nx, ny, nth = spec.dims

        inside = (
            (points[:, 0] >= spec.mins[0])
            & (points[:, 0] <= spec.maxs[0])
            & (points[:, 1] >= spec.mins[1])
            & (points[:, 1] <= spec.maxs[1])
        )

        ux = np.clip((points[:, 0] - spec.mins[0]) / dx, 0.0, nx - 1)
        uy = np.clip((points[:, 1] - spec.mins[1]) / dy, 0.0, ny - 1)
        ix = np.minimum(np.floor(ux).astype(int), nx - 2)
        iy = np.minimum(np.floor(uy).astype(int), ny - 2)
        fx = ux - ix
        fy = uy - iy

        uth = (wrap_angles(points[:, 2]) - spec.mins[2]) / dth
        ith = np.floor(uth).astype(int)
        fth = uth - ith
        ith = np.mod(ith, nth)
        ith1 = np.mod(ith + 1, nth)
        return inside, (ix, iy, ith, ith1), (fx, fy, fth)

    def _trilinear(self, data: np.ndarray, index, frac) -> np.ndarray:
        ix, iy, ith, ith1 = index
        fx, fy, fth = frac
        if data.ndim == 4:
            fx, fy, fth = fx[:, None], fy[:, None], fth[:, None]

        c00 = data[ix, iy, ith] * (1 - fx) + data[ix + 1, iy, ith] * fx
        c10 = data[ix, iy + 1, ith] * (1 - fx) + data[ix + 1, iy + 1, ith] * fx
        c01 = data[ix, iy, ith1] * (1 - fx) + data[ix + 1, iy, ith1] * fx
        c11 = data[ix, iy + 1, ith1] * (1 - fx) + data[ix + 1, iy + 1, ith1] * fx
        c0 = c00 * (1 - fy) + c10 * fy
        c1 = c01 * (1 - fy) + c11 * fy
        return c0 * (1 - fth) + c1 * fth

    def interpolate(self, points: np.ndarray) -> np.ndarray:
        """Values at (k, 3) relative states; +inf outside the (x, y) extent."""
        inside, index, frac = self._locate(points)
        out = self._trilinear(self.values, index, frac)
        return np.where(inside, out, np.inf)

    def interpolate_gradient(self, points: np.ndarray) -> np.ndarray:
        """Gradients at (k, 3) relative states; zero outside the extent."""
        inside, index, frac = self._locate(points)
        out = self._trilinear(self.node_gradient(), index, frac)
        return np.where(inside[:, None], out, 0.0)


def signed_distance_init(spec: GridSpec, rc: float) -> ValueGrid:
    """Initial value l(x) = sqrt(xr^2 + yr^2) - Rc at every node.

    Raises:
        ValidationError: If Rc is not positive or the disk does not fit
    """
    if not rc > 0:
        raise ValidationError("Danger-zone radius must be positive", {"rc": rc})
    half_extent = min(
        min(abs(spec.mins[k]), abs(spec.maxs[k]), (spec.maxs[k] - spec.mins[k]) / 2)
        for k in (0, 1)
    )
    if rc > half_extent:
        raise ValidationError(
            "Danger zone does not fit inside the grid",
            {"rc": rc, "half_extent": half_extent},
        )
    x, y, _ = spec.mesh()
    distance = np.sqrt(x * x + y * y) - rc
    values = np.broadcast_to(distance, spec.dims).copy()
    return ValueGrid(spec=spec, values=values, params=BrsParams(rc=rc))


def value_at(grid: ValueGrid, r: RelativeState) -> float:
    """Interpolated value at one relative state (+inf when out of extent)."""
    return float(grid.interpolate(r.as_array()[None, :])[0])


def gradient_at(grid: ValueGrid, r: RelativeState) -> np.ndarray:
    """Interpolated spatial gradient at one relative state (0 when out of extent)."""
    return grid.interpolate_gradient(r.as_array()[None, :])[0]
