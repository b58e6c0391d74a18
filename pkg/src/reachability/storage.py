"""Binary BRSG grid files.

Layout (little-endian):
    magic "BRSG", version u32
    3 x {dim u64, min f64, max f64, periodic u8}
    v f64, omega_bar f64, Rc f64
    values f64, x fastest, then y, then theta
"""

import struct
from pathlib import Path

import numpy as np
import structlog

from ..state.manager import atomic_write_bytes
from ..utils.exceptions import ArtifactError, ArtifactFormatError, ValidationError
from .grid import BrsParams, GridSpec, ValueGrid

logger = structlog.get_logger(__name__)

MAGIC = b"BRSG"
VERSION = 1
_HEADER = struct.Struct("<4sI")
_AXIS = struct.Struct("<QddB")
_PARAMS = struct.Struct("<ddd")


def encode_grid(grid: ValueGrid) -> bytes:
    """Serialize a grid to BRSG bytes."""
    spec = grid.spec
    parts = [_HEADER.pack(MAGIC, VERSION)]
    for k in range(3):
        parts.append(
            _AXIS.pack(spec.dims[k], spec.mins[k], spec.maxs[k], int(spec.periodic[k]))
        )
    parts.append(_PARAMS.pack(grid.params.v, grid.params.omega_bar, grid.params.rc))
    parts.append(np.asarray(grid.values, dtype="<f8").tobytes(order="F"))
    return b"".join(parts)


def decode_grid(data: bytes, converged: bool = True) -> ValueGrid:
    """Parse BRSG bytes.

    Args:
        data: File content
        converged: Convergence flag to attach (the format does not carry it)

    Raises:
        ArtifactFormatError: On wrong magic, version, truncated content,
            non-finite values or an invalid grid header
    """
    offset = 0
    try:
        magic, version = _HEADER.unpack_from(data, offset)
    except struct.error as e:
        raise ArtifactFormatError("Grid file too short for header") from e
    if magic != MAGIC:
        raise ArtifactFormatError("Not a BRSG grid file", {"magic": magic})
    if version != VERSION:
        raise ArtifactFormatError(
            "Unsupported BRSG version", {"version": version, "supported": VERSION}
        )
    offset += _HEADER.size

    dims, mins, maxs, periodic = [], [], [], []
    try:
        for _ in range(3):
            dim, lo, hi, per = _AXIS.unpack_from(data, offset)
            offset += _AXIS.size
            dims.append(dim)
            mins.append(lo)
            maxs.append(hi)
            periodic.append(bool(per))
        v, omega_bar, rc = _PARAMS.unpack_from(data, offset)
        offset += _PARAMS.size
    except struct.error as e:
        raise ArtifactFormatError("Grid file header truncated") from e

    count = int(np.prod(dims))
    expected = offset + 8 * count
    if len(data) != expected:
        raise ArtifactFormatError(
            "Grid value block has wrong length",
            {"expected_bytes": expected, "actual_bytes": len(data)},
        )
    values = np.frombuffer(data, dtype="<f8", count=count, offset=offset)
    values = values.reshape(tuple(dims), order="F").astype(float)
    bad = ~np.isfinite(values)
    if bad.any():
        raise ArtifactFormatError(
            "Grid values must be finite", {"non_finite": int(np.count_nonzero(bad))}
        )

    try:
        spec = GridSpec(
            mins=tuple(mins), maxs=tuple(maxs), dims=tuple(dims), periodic=tuple(periodic)
        )
        return ValueGrid(
            spec=spec,
            values=values,
            params=BrsParams(v=v, omega_bar=omega_bar, rc=rc),
            converged=converged,
        )
    except ValidationError as e:
        raise ArtifactFormatError(f"Invalid grid header: {e}", e.context) from e


def save_grid(grid: ValueGrid, path: str | Path) -> Path:
    """Write a grid atomically."""
    path = Path(path)
    atomic_write_bytes(path, encode_grid(grid))
    logger.info("Grid written", path=str(path), dims=grid.spec.dims)
    return path


def load_grid(path: str | Path, converged: bool = True) -> ValueGrid:
    """Read a grid file.

    Raises:
        ArtifactError: If the file cannot be read
        ArtifactFormatError: If the contents are not a valid grid
    """
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise ArtifactError(f"Failed to read grid {path}: {e}", {"path": str(path)}) from e
    return decode_grid(data, converged=converged)
