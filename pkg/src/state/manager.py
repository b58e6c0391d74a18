"""Artifact persistence, run manifests and command history.

Every artifact is written atomically (temp file in the target directory, then
rename) and described by a sidecar ``<artifact>.manifest.json`` holding its
sha256. Command outcomes are appended to a JSON Lines history file.
"""

import csv
import hashlib
import io
import json
import os
import tempfile
from collections.abc import Iterable, Sequence
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import numpy as np
import structlog

from ..dynamics.dubins import VehicleState
from ..learning.mlp import MlpParams, Normalization
from ..learning.trainer import Dataset, LabeledSample
from ..safety.policy import Mode
from ..scenarios.features import Scenario
from ..simulation.simulator import TrajectoryPoint
from ..utils.exceptions import ArtifactError, ArtifactFormatError, ManifestError

logger = structlog.get_logger(__name__)

MODEL_VERSION = 1
MANIFEST_SUFFIX = ".manifest.json"
RESULTS_HEADER = ("run", "strategy", "success", "violations", "time_to_completion")
TRAJECTORY_HEADER = ("t", "vehicle", "qx", "qy", "theta", "mode", "active")


def atomic_write_bytes(path: str | Path, data: bytes) -> Path:
    """Write data to path via a temporary file and rename.

    Raises:
        ArtifactError: If the file cannot be written
    """
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as f:
                f.write(data)
                f.flush()
                os.fsync(f.fileno())
            os.replace(tmp, path)
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise
    except OSError as e:
        raise ArtifactError(f"Failed to write {path}: {e}", {"path": str(path)}) from e
    return path


def atomic_write_text(path: str | Path, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _read_text(path: str | Path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ArtifactError(f"Failed to read {path}: {e}", {"path": str(path)}) from e


def _load_json(path: str | Path) -> Any:
    try:
        return json.loads(_read_text(path))
    except json.JSONDecodeError as e:
        raise ArtifactFormatError(f"Invalid JSON in {path}: {e}", {"path": str(path)}) from e


# Manifests


@dataclass
class RunManifest:
    """Provenance of one command's artifacts."""

    command: str
    config: dict[str, Any]
    seed: int | None
    artifacts: dict[str, str]
    tool_version: str
    wall_clock_seconds: float
    extra: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunManifest":
        try:
            return cls(
                command=data["command"],
                config=data["config"],
                seed=data["seed"],
                artifacts=dict(data["artifacts"]),
                tool_version=data["tool_version"],
                wall_clock_seconds=float(data["wall_clock_seconds"]),
                extra=dict(data.get("extra", {})),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ArtifactFormatError(f"Malformed manifest: {e}") from e


def manifest_path(artifact_path: str | Path) -> Path:
    artifact_path = Path(artifact_path)
    return artifact_path.with_name(artifact_path.name + MANIFEST_SUFFIX)


def write_manifest(artifact_path: str | Path, manifest: RunManifest) -> Path:
    """Write the sidecar manifest of an artifact."""
    target = manifest_path(artifact_path)
    text = json.dumps(manifest.to_dict(), indent=2, default=_json_default)
    atomic_write_text(target, text + "\n")
    return target


def read_manifest(artifact_path: str | Path) -> RunManifest | None:
    """Sidecar manifest of an artifact, or None if there is none."""
    target = manifest_path(artifact_path)
    if not target.exists():
        return None
    return RunManifest.from_dict(_load_json(target))


def verify_manifest(artifact_path: str | Path) -> RunManifest | None:
    """Check an artifact against the hash recorded in its manifest.

    Missing manifests are tolerated and logged.

    Raises:
        ManifestError: If the recorded hash differs from the file content
    """
    artifact_path = Path(artifact_path)
    manifest = read_manifest(artifact_path)
    if manifest is None:
        logger.warning("Artifact has no manifest", path=str(artifact_path))
        return None

    expected = manifest.artifacts.get(artifact_path.name)
    if expected is None:
        raise ManifestError(
            "Manifest does not describe its artifact",
            {"path": str(artifact_path), "listed": sorted(manifest.artifacts)},
        )
    actual = sha256_file(artifact_path)
    if actual != expected:
        raise ManifestError(
            "Artifact hash does not match its manifest",
            {"path": str(artifact_path), "expected": expected, "actual": actual},
        )
    return manifest


def _json_default(obj: Any) -> Any:
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")


# Datasets


def write_dataset(path: str | Path, dataset: Dataset) -> Path:
    """One JSON object per line: run, h, y, scenario."""
    lines = []
    for idx, sample in enumerate(dataset.samples):
        record = {
            "run": sample.run if sample.run is not None else idx,
            "h": [float(x) for x in sample.h],
            "y": sample.y,
            "scenario": sample.scenario.to_record() if sample.scenario is not None else None,
        }
        lines.append(json.dumps(record))
    return atomic_write_text(path, "".join(line + "\n" for line in lines))


def read_dataset(path: str | Path) -> Dataset:
    """Parse a JSON Lines dataset.

    Raises:
        ArtifactFormatError: On malformed lines or records
    """
    samples = []
    n_vehicles = None
    for lineno, line in enumerate(_read_text(path).splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            scenario = (
                Scenario.from_record(record["scenario"]) if record.get("scenario") else None
            )
            sample = LabeledSample(
                h=np.array(record["h"], dtype=float),
                y=int(record["y"]),
                run=int(record["run"]),
                scenario=scenario,
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise ArtifactFormatError(
                f"Malformed dataset record: {e}", {"path": str(path), "line": lineno}
            ) from e
        if scenario is not None:
            n_vehicles = scenario.n_vehicles
        samples.append(sample)
    return Dataset(samples=samples, n_vehicles=n_vehicles)


# Results


def write_results_csv(path: str | Path, records: Iterable[Any]) -> Path:
    """Per-run results; success is written as 1/0."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RESULTS_HEADER)
    for r in records:
        writer.writerow(
            [
                r.run,
                r.strategy,
                int(r.success),
                r.violation_count,
                repr(float(r.time_to_completion)),
            ]
        )
    return atomic_write_text(path, buf.getvalue())


def read_results_csv(path: str | Path) -> list[dict[str, Any]]:
    reader = csv.DictReader(io.StringIO(_read_text(path)))
    if tuple(reader.fieldnames or ()) != RESULTS_HEADER:
        raise ArtifactFormatError("Unexpected results header", {"header": reader.fieldnames})
    return [
        {
            "run": int(row["run"]),
            "strategy": row["strategy"],
            "success": row["success"] == "1",
            "violations": int(row["violations"]),
            "time_to_completion": float(row["time_to_completion"]),
        }
        for row in reader
    ]


# Models


@dataclass
class ModelFile:
    params: MlpParams
    n_vehicles: int | None
    train_config: dict[str, Any]
    final_loss: float | None


def model_to_dict(
    params: MlpParams,
    n_vehicles: int | None,
    train_config: dict[str, Any] | None = None,
    final_loss: float | None = None,
) -> dict[str, Any]:
    return {
        "version": MODEL_VERSION,
        "n_vehicles": n_vehicles,
        "n_in": params.n_in,
        "n_hidden": params.n_hidden,
        "W1": params.W1.tolist(),
        "b1": params.b1.tolist(),
        "W2": params.W2.tolist(),
        "b2": float(params.b2),
        "norm": {
            "scales": params.norm.scales.tolist(),
            "offsets": params.norm.offsets.tolist(),
        },
        "train_config": train_config or {},
        "final_loss": None if final_loss is None else float(final_loss),
    }


def model_from_dict(data: dict[str, Any]) -> ModelFile:
    if data.get("version") != MODEL_VERSION:
        raise ArtifactFormatError(
            "Unsupported model version",
            {"version": data.get("version"), "supported": MODEL_VERSION},
        )
    try:
        params = MlpParams(
            W1=np.array(data["W1"], dtype=float),
            b1=np.array(data["b1"], dtype=float),
            W2=np.array(data["W2"], dtype=float),
            b2=float(data["b2"]),
            norm=Normalization(
                scales=np.array(data["norm"]["scales"], dtype=float),
                offsets=np.array(data["norm"]["offsets"], dtype=float),
            ),
        )
        if params.n_in != data["n_in"] or params.n_hidden != data["n_hidden"]:
            raise ArtifactFormatError(
                "Model widths disagree with weight shapes",
                {"n_in": data["n_in"], "n_hidden": data["n_hidden"]},
            )
    except (KeyError, TypeError, ValueError) as e:
        raise ArtifactFormatError(f"Malformed model file: {e}") from e
    return ModelFile(
        params=params,
        n_vehicles=data.get("n_vehicles"),
        train_config=data.get("train_config", {}),
        final_loss=data.get("final_loss"),
    )


def write_model(
    path: str | Path,
    params: MlpParams,
    n_vehicles: int | None,
    train_config: dict[str, Any] | None = None,
    final_loss: float | None = None,
) -> Path:
    text = json.dumps(model_to_dict(params, n_vehicles, train_config, final_loss), indent=2)
    return atomic_write_text(path, text + "\n")


def read_model(path: str | Path) -> ModelFile:
    return model_from_dict(_load_json(path))


# Scenarios


def write_scenario(path: str | Path, scenario: Scenario) -> Path:
    return atomic_write_text(path, json.dumps(scenario.to_record(), indent=2) + "\n")


def read_scenario(path: str | Path) -> Scenario:
    data = _load_json(path)
    try:
        return Scenario.from_record(data)
    except ValueError as e:
        raise ArtifactFormatError(f"Malformed scenario file: {e}", {"path": str(path)}) from e


# Trajectories


def _format_time(t: float) -> str:
    return repr(round(float(t), 9))


def write_trajectory_csv(
    path: str | Path, trajectories: Sequence[Sequence[TrajectoryPoint]]
) -> Path:
    """Rows ordered by instant, then vehicle index."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRAJECTORY_HEADER)
    n_instants = max((len(tr) for tr in trajectories), default=0)
    for k in range(n_instants):
        for vehicle, tr in enumerate(trajectories):
            if k >= len(tr):
                continue
            pt = tr[k]
            writer.writerow(
                [
                    _format_time(pt.t),
                    vehicle,
                    repr(pt.state.qx),
                    repr(pt.state.qy),
                    repr(pt.state.theta),
                    pt.mode.value,
                    int(pt.active),
                ]
            )
    return atomic_write_text(path, buf.getvalue())


def read_trajectory_csv(path: str | Path) -> list[list[TrajectoryPoint]]:
    """Trajectories grouped by vehicle index.

    Raises:
        ArtifactFormatError: On a wrong header or malformed row
    """
    reader = csv.DictReader(io.StringIO(_read_text(path)))
    if tuple(reader.fieldnames or ()) != TRAJECTORY_HEADER:
        raise ArtifactFormatError("Unexpected trajectory header", {"header": reader.fieldnames})

    by_vehicle: dict[int, list[TrajectoryPoint]] = {}
    for row in reader:
        try:
            vehicle = int(row["vehicle"])
            point = TrajectoryPoint(
                t=float(row["t"]),
                state=VehicleState(float(row["qx"]), float(row["qy"]), float(row["theta"])),
                mode=Mode(row["mode"]),
                active=row["active"] == "1",
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ArtifactFormatError(
                f"Malformed trajectory row: {e}", {"line": reader.line_num}
            ) from e
        by_vehicle.setdefault(vehicle, []).append(point)

    if by_vehicle and sorted(by_vehicle) != list(range(len(by_vehicle))):
        raise ArtifactFormatError(
            "Trajectory vehicle indices are not contiguous", {"vehicles": sorted(by_vehicle)}
        )
    return [by_vehicle[k] for k in range(len(by_vehicle))]


class ArtifactManager:
    """Manifest bookkeeping and JSON Lines command history."""

    def __init__(self, history_file: str | Path = "logs/run_history.jsonl"):
        """Initialize artifact manager.

        Args:
            history_file: Path to the command history log
        """
        self.history_file = Path(history_file)

    def get_current_timestamp(self) -> str:
        return datetime.now(timezone.utc).isoformat()

    def append_history(self, record: dict[str, Any]) -> None:
        """Append one command outcome to the history file.

        Raises:
            ArtifactError: If the history file cannot be written
        """
        record = dict(record)
        record.setdefault("timestamp", self.get_current_timestamp())
        try:
            self.history_file.parent.mkdir(parents=True, exist_ok=True)
            with open(self.history_file, "a", encoding="utf-8") as f:
                f.write(json.dumps(record, default=_json_default) + "\n")
        except OSError as e:
            raise ArtifactError(f"Failed to append run history: {e}") from e
        logger.info(
            "Run recorded",
            command=record.get("command"),
            success=record.get("success", False),
        )

    def get_history(self, limit: int | None = None) -> list[dict[str, Any]]:
        """History records, most recent first."""
        if not self.history_file.exists():
            return []
        history = []
        for line in _read_text(self.history_file).splitlines():
            line = line.strip()
            if not line:
                continue
            try:
                history.append(json.loads(line))
            except json.JSONDecodeError:
                logger.warning("Skipping invalid JSON line in history")
        history.sort(key=lambda x: x.get("timestamp", ""), reverse=True)
        return history[:limit] if limit else history

    def publish(
        self,
        command: str,
        outputs: Sequence[str | Path],
        config: dict[str, Any],
        seed: int | None,
        tool_version: str,
        wall_clock_seconds: float,
        inputs: Sequence[str | Path] = (),
        extra: dict[str, Any] | None = None,
        success: bool = True,
    ) -> dict[str, str]:
        """Hash outputs (and inputs), write one manifest per output and log the run.

        Returns:
            Artifact file name to sha256 for every hashed file
        """
        hashes = {Path(p).name: sha256_file(p) for p in [*inputs, *outputs]}
        manifest = RunManifest(
            command=command,
            config=config,
            seed=seed,
            artifacts=hashes,
            tool_version=tool_version,
            wall_clock_seconds=wall_clock_seconds,
            extra=extra or {},
        )
        for out in outputs:
            write_manifest(out, manifest)
            logger.info("Artifact written", path=str(out), sha256=hashes[Path(out).name])
        self.append_history(
            {
                "command": command,
                "success": success,
                "seed": seed,
                "duration_seconds": wall_clock_seconds,
                "artifacts": hashes,
            }
        )
        return hashes
