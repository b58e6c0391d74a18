"""Data-generation and evaluation campaigns.

A campaign is a sequence of independent runs. Every random draw of run r
comes from derive_rng(base_seed, r, purpose), so runs can be farmed out to a
process pool and still aggregate to bit-identical datasets and metrics.
"""

import hashlib
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Any, TypeVar

import numpy as np
import structlog

from ..learning.mlp import MlpParams, forward_batch
from ..learning.trainer import Dataset, LabeledSample
from ..reachability.grid import ValueGrid
from ..scenarios.features import (
    MAX_VEHICLES,
    MIN_VEHICLES,
    CandidateBox,
    Scenario,
    feature_map,
    make_base_scenario,
    sample_candidate,
)
from ..simulation.simulator import SimConfig, check_grid_params, run_simulation
from ..utils.exceptions import ConfigurationError, DimensionMismatchError, ValidationError
from ..utils.seeding import derive_rng
from ..utils.timing import Stopwatch

logger = structlog.get_logger(__name__)

LEARNED = "learned"
RANDOM = "random"

T = TypeVar("T")


@dataclass(frozen=True)
class CampaignConfig:
    """Sizes, physics and seed of one campaign."""

    n_vehicles: int
    n_samples: int = 1
    n_candidates: int = 10
    n_runs: int = 200
    n_fixed: int = 0
    sim: SimConfig = field(default_factory=SimConfig)
    box: CandidateBox = field(default_factory=CandidateBox)
    base_seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if not MIN_VEHICLES <= self.n_vehicles <= MAX_VEHICLES:
            raise ConfigurationError(
                "Vehicle count out of range", {"n_vehicles": self.n_vehicles}
            )
        if not 0 <= self.n_fixed <= self.n_vehicles - 1:
            raise ConfigurationError(
                "At least one vehicle must remain modifiable",
                {"n_fixed": self.n_fixed, "n_vehicles": self.n_vehicles},
            )
        if min(self.n_samples, self.n_candidates, self.n_runs, self.workers) < 1:
            raise ConfigurationError(
                "Campaign sizes and worker count must be positive",
                {
                    "n_samples": self.n_samples,
                    "n_candidates": self.n_candidates,
                    "n_runs": self.n_runs,
                    "workers": self.workers,
                },
            )
        if self.base_seed < 0:
            raise ConfigurationError("Seed must be non-negative", {"seed": self.base_seed})

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class RunRecord:
    """Outcome of one evaluation run under one selection strategy."""

    run: int
    strategy: str
    success: bool
    violation_count: int
    time_to_completion: float
    candidate_index: int
    probability: float | None = None
    candidates_hash: str = ""


@dataclass
class EvalSummary:
    """Per-strategy aggregate: success percentage and collisions per vehicle-run."""

    strategy: str
    p_s: float
    n_col: float
    n_runs: int
    records: list[RunRecord] = field(default_factory=list)


@dataclass
class FixedCountRow:
    n_fixed: int
    learned: EvalSummary
    random: EvalSummary


# Per-process campaign state, set by the pool initializer
_WORKER: dict[str, Any] = {}


def _init_worker(grid: ValueGrid, cfg: CampaignConfig, model: MlpParams | None) -> None:
    _WORKER["grid"] = grid
    _WORKER["cfg"] = cfg
    _WORKER["model"] = model


def _map_runs(
    fn: Callable[[int], T],
    n: int,
    cfg: CampaignConfig,
    grid: ValueGrid,
    model: MlpParams | None = None,
) -> list[T]:
    """Apply fn to 0..n-1 in order, in a process pool when cfg.workers > 1."""
    if cfg.workers == 1 or n == 1:
        _init_worker(grid, cfg, model)
        try:
            return [fn(r) for r in range(n)]
        finally:
            _WORKER.clear()

    chunksize = max(1, n // (cfg.workers * 4))
    with ProcessPoolExecutor(
        max_workers=cfg.workers,
        initializer=_init_worker,
        initargs=(grid, cfg, model),
    ) as executor:
        return list(executor.map(fn, range(n), chunksize=chunksize))


def _dataset_sample(run: int) -> LabeledSample:
    grid: ValueGrid = _WORKER["grid"]
    cfg: CampaignConfig = _WORKER["cfg"]
    base = make_base_scenario(
        cfg.n_vehicles,
        derive_rng(cfg.base_seed, run, "dataset-base"),
        cfg.box,
        n_fixed=cfg.n_fixed,
    )
    candidate = sample_candidate(
        base, cfg.box, derive_rng(cfg.base_seed, run, "dataset-candidate")
    )
    result = run_simulation(candidate, grid, cfg.sim)
    return LabeledSample(
        h=feature_map(candidate), y=int(result.success), run=run, scenario=candidate
    )


def generate_dataset(cfg: CampaignConfig, grid: ValueGrid) -> Dataset:
    """Simulate cfg.n_samples random candidates and label each by success.

    Raises:
        GridMismatchError: If the grid was solved for other parameters
    """
    check_grid_params(grid, cfg.sim)
    logger.info(
        "Dataset campaign started",
        n_vehicles=cfg.n_vehicles,
        n_samples=cfg.n_samples,
        workers=cfg.workers,
        seed=cfg.base_seed,
    )
    with Stopwatch("generate_dataset") as watch:
        samples = _map_runs(_dataset_sample, cfg.n_samples, cfg, grid)
    positives = sum(s.y for s in samples)
    logger.info(
        "Dataset campaign finished",
        n_samples=len(samples),
        positives=positives,
        negatives=len(samples) - positives,
        seconds=round(watch.elapsed, 3),
    )
    return Dataset(samples=samples, n_vehicles=cfg.n_vehicles)


def _check_candidates(candidates: Sequence[Scenario]) -> None:
    if not candidates:
        raise ValidationError("At least one candidate is required")
    first = candidates[0]
    for c in candidates[1:]:
        if c.goals != first.goals or c.fixed_mask != first.fixed_mask:
            raise ValidationError("Candidates must share goals and fixed vehicles")


def score_candidates(candidates: Sequence[Scenario], model: MlpParams) -> np.ndarray:
    """Predicted success probability of every candidate."""
    features = np.array([feature_map(c) for c in candidates])
    if features.shape[1] != model.n_in:
        raise DimensionMismatchError(
            "Model width does not match the candidates",
            {"n_in": model.n_in, "features": features.shape[1]},
        )
    return forward_batch(model, features)


def select_initialization(
    candidates: Sequence[Scenario], model: MlpParams
) -> tuple[Scenario, int, float]:
    """Candidate with the highest predicted success probability.

    Ties go to the lowest index.
    """
    _check_candidates(candidates)
    probs = score_candidates(candidates, model)
    best = int(np.argmax(probs))
    return candidates[best], best, float(probs[best])


def random_index(n_candidates: int, rng: np.random.Generator) -> int:
    return int(rng.integers(n_candidates))


def select_random(candidates: Sequence[Scenario], rng: np.random.Generator) -> Scenario:
    """Uniformly chosen candidate."""
    _check_candidates(candidates)
    return candidates[random_index(len(candidates), rng)]


def candidates_digest(candidates: Iterable[Scenario]) -> str:
    """sha256 over the initial-state arrays of a candidate list."""
    digest = hashlib.sha256()
    for c in candidates:
        digest.update(np.ascontiguousarray(c.state_array(), dtype="<f8").tobytes())
    return digest.hexdigest()


def _eval_run(run: int) -> tuple[RunRecord, RunRecord]:
    grid: ValueGrid = _WORKER["grid"]
    cfg: CampaignConfig = _WORKER["cfg"]
    model: MlpParams = _WORKER["model"]

    base = make_base_scenario(
        cfg.n_vehicles,
        derive_rng(cfg.base_seed, run, "eval-base"),
        cfg.box,
        n_fixed=cfg.n_fixed,
    )
    cand_rng = derive_rng(cfg.base_seed, run, "eval-candidates")
    candidates = [sample_candidate(base, cfg.box, cand_rng) for _ in range(cfg.n_candidates)]
    digest = candidates_digest(candidates)

    _, learned_idx, prob = select_initialization(candidates, model)
    random_idx = random_index(
        len(candidates), derive_rng(cfg.base_seed, run, "eval-random-pick")
    )

    outcomes = {}
    for idx in {learned_idx, random_idx}:
        outcomes[idx] = run_simulation(candidates[idx], grid, cfg.sim)

    def record(strategy: str, idx: int, probability: float | None) -> RunRecord:
        res = outcomes[idx]
        return RunRecord(
            run=run,
            strategy=strategy,
            success=res.success,
            violation_count=res.violation_count,
            time_to_completion=res.time_to_completion,
            candidate_index=idx,
            probability=probability,
            candidates_hash=digest,
        )

    return record(LEARNED, learned_idx, prob), record(RANDOM, random_idx, None)


def compute_metrics(
    results: Sequence[Any], n_vehicles: int, n_runs: int, strategy: str = ""
) -> EvalSummary:
    """p_s = 100 * successes / N_runs and N_col = violations / (N * N_runs).

    Args:
        results: SimResults or RunRecords, one per run
        n_vehicles: Vehicles per run
        n_runs: Number of runs
        strategy: Label carried into the summary

    Raises:
        ValidationError: If len(results) != n_runs
    """
    if len(results) != n_runs or n_runs < 1 or n_vehicles < 1:
        raise ValidationError(
            "Result count must equal the number of runs",
            {"results": len(results), "n_runs": n_runs, "n_vehicles": n_vehicles},
        )
    successes = sum(1 for r in results if r.success)
    violations = sum(r.violation_count for r in results)
    records = [r for r in results if isinstance(r, RunRecord)]
    return EvalSummary(
        strategy=strategy,
        p_s=100.0 * successes / n_runs,
        n_col=violations / (n_vehicles * n_runs),
        n_runs=n_runs,
        records=records,
    )


def evaluate_paired(
    cfg: CampaignConfig, grid: ValueGrid, model: MlpParams
) -> tuple[EvalSummary, EvalSummary]:
    """Learned and random selection over the same bases and candidate lists.

    Returns:
        (learned summary, random summary)

    Raises:
        DimensionMismatchError: If the model was trained for another N
        GridMismatchError: If the grid was solved for other parameters
    """
    if model.n_in != 5 * cfg.n_vehicles:
        raise DimensionMismatchError(
            "Model width does not match the vehicle count",
            {"n_in": model.n_in, "n_vehicles": cfg.n_vehicles},
        )
    check_grid_params(grid, cfg.sim)
    logger.info(
        "Evaluation campaign started",
        n_vehicles=cfg.n_vehicles,
        n_fixed=cfg.n_fixed,
        n_runs=cfg.n_runs,
        n_candidates=cfg.n_candidates,
        workers=cfg.workers,
        seed=cfg.base_seed,
    )
    with Stopwatch("evaluate_paired") as watch:
        pairs = _map_runs(_eval_run, cfg.n_runs, cfg, grid, model)

    learned = compute_metrics([p[0] for p in pairs], cfg.n_vehicles, cfg.n_runs, LEARNED)
    random = compute_metrics([p[1] for p in pairs], cfg.n_vehicles, cfg.n_runs, RANDOM)
    logger.info(
        "Evaluation campaign finished",
        n_fixed=cfg.n_fixed,
        learned_p_s=learned.p_s,
        learned_n_col=learned.n_col,
        random_p_s=random.p_s,
        random_n_col=random.n_col,
        seconds=round(watch.elapsed, 3),
    )
    return learned, random


def sweep_fixed_counts(
    cfg: CampaignConfig,
    grid: ValueGrid,
    model: MlpParams,
    n_fixed_values: Iterable[int] | None = None,
) -> list[FixedCountRow]:
    """evaluate_paired for each fixed-vehicle count (0..N-1 by default)."""
    values = list(range(cfg.n_vehicles)) if n_fixed_values is None else list(n_fixed_values)
    rows = []
    for n_fixed in values:
        learned, random = evaluate_paired(replace(cfg, n_fixed=n_fixed), grid, model)
        rows.append(FixedCountRow(n_fixed=n_fixed, learned=learned, random=random))
    return rows


def format_summary_table(rows: Sequence[FixedCountRow]) -> str:
    """Plain-text table with one line per (N_fixed, strategy)."""
    lines = [f"{'N_fixed':>7}  {'strategy':<8}  {'p_s (%)':>8}  {'N_col':>7}"]
    for row in rows:
        for summary in (row.learned, row.random):
            lines.append(
                f"{row.n_fixed:>7}  {summary.strategy:<8}  "
                f"{summary.p_s:>8.2f}  {summary.n_col:>7.3f}"
            )
    return "\n".join(lines)
