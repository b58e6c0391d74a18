"""Unit tests for dataset generation, selection strategies and paired evaluation."""

import math
from dataclasses import replace

import numpy as np
import pytest

from src.experiment.campaign import (
    LEARNED,
    RANDOM,
    CampaignConfig,
    EvalSummary,
    FixedCountRow,
    RunRecord,
    candidates_digest,
    compute_metrics,
    evaluate_paired,
    format_summary_table,
    generate_dataset,
    select_initialization,
    select_random,
    sweep_fixed_counts,
)
from src.learning.mlp import MlpParams, Normalization, init_params
from src.scenarios.features import (
    CandidateBox,
    feature_map,
    make_base_scenario,
    sample_candidate,
)
from src.utils.exceptions import (
    ConfigurationError,
    DimensionMismatchError,
    GridMismatchError,
    ValidationError,
)
from tests.conftest import make_sim_config


def record(run, success, violations, strategy=LEARNED):
    return RunRecord(
        run=run,
        strategy=strategy,
        success=success,
        violation_count=violations,
        time_to_completion=5.0,
        candidate_index=0,
    )


def candidate_list(n_candidates=10, n_vehicles=4, seed=0, n_fixed=0):
    box = CandidateBox()
    rng = np.random.default_rng(seed)
    base = make_base_scenario(n_vehicles, rng, box, n_fixed=n_fixed)
    return [sample_candidate(base, box, rng) for _ in range(n_candidates)]


class TestCampaignConfig:
    """Test cases for campaign configuration validation."""

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"n_vehicles": 2},
            {"n_vehicles": 4, "n_fixed": 4},
            {"n_vehicles": 4, "n_runs": 0},
            {"n_vehicles": 4, "n_candidates": 0},
            {"n_vehicles": 4, "workers": 0},
            {"n_vehicles": 4, "base_seed": -1},
        ],
    )
    def test_invalid_values(self, kwargs):
        """Test out-of-range sizes raise ConfigurationError."""
        with pytest.raises(ConfigurationError):
            CampaignConfig(**kwargs)

    def test_defaults(self):
        """Test ten candidates, 200 runs and no fixed vehicles by default."""
        cfg = CampaignConfig(n_vehicles=5)

        assert (cfg.n_candidates, cfg.n_runs, cfg.n_fixed) == (10, 200, 0)


class TestComputeMetrics:
    """Test cases for the success percentage and collision rate."""

    def test_mixed_outcomes(self):
        """Test 3 of 4 successes and 8 violations over 4 vehicles."""
        results = [record(0, True, 0), record(1, True, 0), record(2, True, 0), record(3, False, 8)]

        summary = compute_metrics(results, n_vehicles=4, n_runs=4, strategy=LEARNED)

        assert summary.p_s == 75.0
        assert summary.n_col == 0.5
        assert summary.strategy == LEARNED
        assert summary.records == results

    def test_all_successful(self):
        """Test a clean campaign scores 100% and zero collisions."""
        results = [record(k, True, 0) for k in range(10)]

        summary = compute_metrics(results, n_vehicles=5, n_runs=10)

        assert (summary.p_s, summary.n_col) == (100.0, 0.0)

    def test_count_mismatch_rejected(self):
        """Test the result count must equal N_runs."""
        with pytest.raises(ValidationError):
            compute_metrics([record(0, True, 0)], n_vehicles=4, n_runs=2)


class TestSelectInitialization:
    """Test cases for the learned selection strategy."""

    def test_single_candidate(self):
        """Test one candidate is always selected."""
        candidates = candidate_list(n_candidates=1)
        model = init_params(20, 10, np.random.default_rng(0))

        chosen, idx, prob = select_initialization(candidates, model)

        assert chosen is candidates[0]
        assert idx == 0
        assert 0.0 < prob < 1.0

    def test_constant_model_picks_first(self):
        """Test equal probabilities resolve to the lowest index."""
        candidates = candidate_list()
        model = MlpParams(
            W1=np.zeros((3, 20)),
            b1=np.zeros(3),
            W2=np.zeros((1, 3)),
            b2=0.0,
            norm=Normalization.identity(20),
        )

        _, idx, prob = select_initialization(candidates, model)

        assert idx == 0
        assert prob == 0.5

    def test_monotone_model_picks_largest_feature(self):
        """Test a model increasing in the first feature picks the candidate maximizing it."""
        candidates = candidate_list(seed=3)
        w1 = np.zeros((1, 20))
        w1[0, 0] = 1.0
        # bias keeps the hidden unit in its linear range
        model = MlpParams(
            W1=w1,
            b1=np.array([100.0]),
            W2=np.array([[0.05]]),
            b2=-5.0,
            norm=Normalization.identity(20),
        )

        _, idx, _ = select_initialization(candidates, model)

        assert idx == int(np.argmax([feature_map(c)[0] for c in candidates]))

    def test_empty_list_rejected(self):
        with pytest.raises(ValidationError):
            select_initialization([], init_params(20, 10, np.random.default_rng(0)))

    def test_mixed_goals_rejected(self):
        """Test candidates of different base scenarios are refused."""
        candidates = candidate_list(n_candidates=3)
        candidates.append(replace(candidates[0], goals=candidates[0].goals[::-1]))

        with pytest.raises(ValidationError):
            select_initialization(candidates, init_params(20, 10, np.random.default_rng(0)))

    def test_width_mismatch_rejected(self):
        """Test a five-vehicle model refuses four-vehicle candidates."""
        with pytest.raises(DimensionMismatchError):
            select_initialization(
                candidate_list(), init_params(25, 15, np.random.default_rng(0))
            )


class TestSelectRandom:
    """Test cases for the uniform baseline."""

    def test_uniform_over_candidates(self):
        """Test 10^5 draws hit every index about equally often."""
        candidates = candidate_list()
        position = {id(c): k for k, c in enumerate(candidates)}
        rng = np.random.default_rng(12)
        n_draws = 100_000

        counts = np.zeros(len(candidates))
        for _ in range(n_draws):
            counts[position[id(select_random(candidates, rng))]] += 1

        p = 1 / len(candidates)
        sigma = math.sqrt(n_draws * p * (1 - p))
        assert np.all(np.abs(counts - n_draws * p) <= 4 * sigma)

    def test_seeded_draws_reproduce(self):
        """Test identical seeds choose identical candidates."""
        candidates = candidate_list()
        a = [select_random(candidates, np.random.default_rng(5)) for _ in range(3)]
        b = [select_random(candidates, np.random.default_rng(5)) for _ in range(3)]

        assert a == b


class TestCandidatesDigest:
    """Test cases for candidate-list hashing."""

    def test_equal_lists_equal_digest(self):
        assert candidates_digest(candidate_list(seed=2)) == candidates_digest(
            candidate_list(seed=2)
        )

    def test_order_matters(self):
        """Test reordering candidates changes the digest."""
        candidates = candidate_list(seed=2)

        assert candidates_digest(candidates) != candidates_digest(candidates[::-1])


class TestGenerateDataset:
    """Test cases for labeled dataset campaigns."""

    @pytest.fixture
    def cfg(self):
        return CampaignConfig(n_vehicles=4, n_samples=6, sim=make_sim_config(), base_seed=3)

    def test_samples_match_their_scenarios(self, small_grid, cfg):
        """Test one sample per run with features taken from its scenario."""
        data = generate_dataset(cfg, small_grid)

        assert len(data) == 6
        assert data.n_vehicles == 4
        assert [s.run for s in data.samples] == list(range(6))
        for s in data.samples:
            np.testing.assert_array_equal(s.h, feature_map(s.scenario))
            assert s.y in (0, 1)

    def test_deterministic(self, small_grid, cfg):
        """Test the same seed regenerates the same dataset."""
        a = generate_dataset(cfg, small_grid)
        b = generate_dataset(cfg, small_grid)

        np.testing.assert_array_equal(a.features(), b.features())
        np.testing.assert_array_equal(a.labels(), b.labels())

    def test_worker_count_does_not_change_data(self, small_grid, cfg):
        """Test a process pool yields the same samples as a single process."""
        single = generate_dataset(cfg, small_grid)
        pooled = generate_dataset(
            CampaignConfig(n_vehicles=4, n_samples=6, sim=cfg.sim, base_seed=3, workers=2),
            small_grid,
        )

        np.testing.assert_array_equal(single.features(), pooled.features())
        np.testing.assert_array_equal(single.labels(), pooled.labels())

    def test_grid_mismatch_rejected(self, small_grid):
        """Test a grid solved for another Rc is refused before any run."""
        cfg = CampaignConfig(n_vehicles=4, n_samples=2, sim=make_sim_config(rc=4.0))

        with pytest.raises(GridMismatchError):
            generate_dataset(cfg, small_grid)


class TestEvaluatePaired:
    """Test cases for paired learned-versus-random evaluation."""

    @pytest.fixture
    def cfg(self):
        return CampaignConfig(
            n_vehicles=4, n_candidates=3, n_runs=3, sim=make_sim_config(), base_seed=9
        )

    @pytest.fixture
    def model(self):
        return init_params(20, 10, np.random.default_rng(1))

    def test_strategies_share_candidate_lists(self, small_grid, cfg, model):
        """Test both strategies see the same candidates in every run."""
        learned, random = evaluate_paired(cfg, small_grid, model)

        assert (learned.strategy, random.strategy) == (LEARNED, RANDOM)
        assert learned.n_runs == random.n_runs == 3
        for a, b in zip(learned.records, random.records):
            assert a.run == b.run
            assert a.candidates_hash == b.candidates_hash
            assert 0 <= a.candidate_index < 3
            assert 0 <= b.candidate_index < 3
            assert a.probability is not None
            assert b.probability is None
            if a.candidate_index == b.candidate_index:
                assert (a.success, a.violation_count) == (b.success, b.violation_count)

    def test_deterministic(self, small_grid, cfg, model):
        """Test repeated evaluation reproduces every record."""
        assert evaluate_paired(cfg, small_grid, model) == evaluate_paired(cfg, small_grid, model)

    def test_worker_count_does_not_change_results(self, small_grid, cfg, model):
        """Test pooled evaluation matches the single-process run."""
        pooled = CampaignConfig(
            n_vehicles=4, n_candidates=3, n_runs=3, sim=cfg.sim, base_seed=9, workers=2
        )

        assert evaluate_paired(pooled, small_grid, model) == evaluate_paired(
            cfg, small_grid, model
        )

    def test_model_width_checked(self, small_grid, cfg):
        """Test a model for another vehicle count is refused."""
        with pytest.raises(DimensionMismatchError):
            evaluate_paired(cfg, small_grid, init_params(25, 15, np.random.default_rng(0)))

    def test_sweep_over_fixed_counts(self, small_grid, cfg, model):
        """Test one row per requested fixed-vehicle count."""
        rows = sweep_fixed_counts(cfg, small_grid, model, n_fixed_values=[0, 3])

        assert [row.n_fixed for row in rows] == [0, 3]
        assert rows[0].learned == evaluate_paired(cfg, small_grid, model)[0]


class TestFormatSummaryTable:
    """Test cases for the plain-text summary."""

    def test_two_lines_per_row(self):
        """Test header plus learned and random lines for each fixed count."""
        rows = [
            FixedCountRow(
                n_fixed=n,
                learned=EvalSummary(LEARNED, 92.5, 0.0125, 200),
                random=EvalSummary(RANDOM, 80.0, 0.05, 200),
            )
            for n in (0, 1)
        ]

        lines = format_summary_table(rows).splitlines()

        assert len(lines) == 5
        assert lines[0].split() == ["N_fixed", "strategy", "p_s", "(%)", "N_col"]
        assert lines[1].split() == ["0", "learned", "92.50", "0.013"]
        assert lines[4].split() == ["1", "random", "80.00", "0.050"]
