"""Command-line entry point for the learned safe-initialization pipeline.

Subcommands: brs, gen-data, train, eval, simulate, plot.
Exit codes: 0 success, 1 usage/configuration/artifact error, 2 numerical failure.
"""

import argparse
import sys
from collections.abc import Sequence
from dataclasses import asdict, replace
from pathlib import Path
from typing import Any

import structlog

from . import __version__
from .config.manager import (
    DEFAULT_OMEGA_BAR,
    DEFAULT_RC,
    DEFAULT_SPEED,
    ConfigurationManager,
)
from .experiment.campaign import (
    CampaignConfig,
    format_summary_table,
    generate_dataset,
    sweep_fixed_counts,
)
from .learning.trainer import default_hidden_width, train
from .plotting.svg import render_trajectories, violations_from_trajectories
from .reachability.grid import ValueGrid, signed_distance_init
from .reachability.solver import solve_brs, verify_soundness
from .reachability.storage import load_grid, save_grid
from .scenarios.features import make_base_scenario
from .simulation.simulator import check_grid_params, run_simulation
from .state.manager import (
    ArtifactManager,
    atomic_write_text,
    read_dataset,
    read_model,
    read_scenario,
    read_trajectory_csv,
    verify_manifest,
    write_dataset,
    write_model,
    write_results_csv,
    write_trajectory_csv,
)
from .utils.exceptions import (
    ConvergenceError,
    DimensionMismatchError,
    NumericalError,
    SafeInitError,
)
from .utils.logging_config import bind_run_context, configure_logging
from .utils.seeding import derive_rng
from .utils.timing import Stopwatch

logger = structlog.get_logger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2


class CliUsageError(Exception):
    """Invalid command-line usage (exit code 1)."""

    pass


class CliArgumentParser(argparse.ArgumentParser):
    """ArgumentParser that reports usage errors as exceptions."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise CliUsageError(message)


def _print_summary(title: str, rows: Sequence[tuple[str, Any]]) -> None:
    print("\n" + "=" * 60)
    print(title)
    print("=" * 60)
    for label, value in rows:
        print(f"{label}: {value}")
    print("=" * 60 + "\n")


def _require_seed(args: argparse.Namespace) -> int:
    if args.seed is None:
        raise CliUsageError(f"{args.command} requires --seed")
    if args.seed < 0:
        raise CliUsageError("--seed must be non-negative")
    return args.seed


def _require_out(args: argparse.Namespace) -> Path:
    if args.out is None:
        raise CliUsageError(f"{args.command} requires --out")
    return Path(args.out)


def _resolved_flags(args: argparse.Namespace) -> dict[str, Any]:
    return {k: v for k, v in vars(args).items() if k != "handler"}


def _load_checked_grid(path: str, v: float, omega_bar: float, rc: float, cfg_mgr) -> ValueGrid:
    manifest = verify_manifest(path)
    converged = True
    if manifest is not None:
        converged = bool(manifest.extra.get("converged", True))
    grid = load_grid(path, converged=converged)
    if not grid.converged:
        logger.warning("Using a grid that did not converge", path=path)
    check_grid_params(grid, cfg_mgr.get_sim_config(v, omega_bar, rc))
    return grid


# Subcommands


def cmd_brs(args: argparse.Namespace, artifacts: ArtifactManager) -> int:
    out = _require_out(args)
    cfg_mgr = ConfigurationManager()
    grid_cfg = cfg_mgr.get_grid_config()
    overrides = {
        k: getattr(args, k)
        for k in ("extent", "dims_xy", "dims_theta", "tol", "t_max", "cfl")
        if getattr(args, k) is not None
    }
    grid_cfg = replace(grid_cfg, **overrides)
    if args.verify_samples:
        _require_seed(args)

    with Stopwatch("brs") as watch:
        init = signed_distance_init(grid_cfg.spec(), args.rc)
        grid = solve_brs(
            init,
            args.speed,
            args.omega_bar,
            tol=grid_cfg.tol,
            t_max=grid_cfg.t_max,
            cfl=grid_cfg.cfl,
        )
        save_grid(grid, out)

    extra = {"converged": grid.converged, "residual": grid.residual, "sweeps": grid.sweeps}
    artifacts.publish(
        "brs",
        [out],
        config={"flags": _resolved_flags(args), "grid": asdict(grid_cfg)},
        seed=args.seed,
        tool_version=__version__,
        wall_clock_seconds=watch.elapsed,
        extra=extra,
        success=grid.converged,
    )
    rows = [
        ("Grid", out),
        ("Converged", grid.converged),
        ("Residual", f"{grid.residual:.6g}"),
        ("Sweeps", grid.sweeps),
    ]

    if not grid.converged:
        _print_summary("BRS SUMMARY", rows)
        raise ConvergenceError(
            "Level-set iteration did not converge; partial grid saved",
            {"path": str(out), "residual": grid.residual, "sweeps": grid.sweeps},
        )

    if args.verify_samples:
        report = verify_soundness(
            grid, args.verify_samples, derive_rng(args.seed, 0, "soundness")
        )
        rows += [
            ("Soundness samples", report.samples),
            ("Min separation", f"{report.min_separation:.4f}"),
            ("Threshold", f"{report.threshold:.4f}"),
            ("Soundness failures", report.failures),
        ]
        _print_summary("BRS SUMMARY", rows)
        if not report.sound:
            raise NumericalError(
                "Sampled games entered the danger zone",
                {"failures": report.failures, "min_separation": report.min_separation},
            )
        return EXIT_OK

    _print_summary("BRS SUMMARY", rows)
    return EXIT_OK


def _campaign_config(
    args: argparse.Namespace, cfg_mgr: ConfigurationManager, **sizes
) -> CampaignConfig:
    defaults = cfg_mgr.get_campaign_defaults()
    return CampaignConfig(
        n_vehicles=args.n,
        sim=cfg_mgr.get_sim_config(args.speed, args.omega_bar, args.rc),
        box=cfg_mgr.get_box_config(),
        base_seed=args.seed,
        workers=args.workers if args.workers is not None else defaults.workers,
        **sizes,
    )


def cmd_gen_data(args: argparse.Namespace, artifacts: ArtifactManager) -> int:
    out = _require_out(args)
    _require_seed(args)
    if args.m < 1:
        raise CliUsageError("--m must be positive")
    if not 0 <= args.n_fixed < args.n:
        raise CliUsageError("--n-fixed must lie in [0, n - 1]")
    cfg_mgr = ConfigurationManager()

    with Stopwatch("gen-data") as watch:
        grid = _load_checked_grid(args.brs, args.speed, args.omega_bar, args.rc, cfg_mgr)
        cfg = _campaign_config(args, cfg_mgr, n_samples=args.m, n_fixed=args.n_fixed)
        dataset = generate_dataset(cfg, grid)
        write_dataset(out, dataset)

    artifacts.publish(
        "gen-data",
        [out],
        config={"flags": _resolved_flags(args), "campaign": cfg.to_dict()},
        seed=args.seed,
        tool_version=__version__,
        wall_clock_seconds=watch.elapsed,
        inputs=[args.brs],
    )
    positives = sum(s.y for s in dataset.samples)
    _print_summary(
        "DATASET SUMMARY",
        [
            ("Dataset", out),
            ("Samples", len(dataset)),
            ("Successful", positives),
            ("Failed", len(dataset) - positives),
        ],
    )
    return EXIT_OK


def cmd_train(args: argparse.Namespace, artifacts: ArtifactManager) -> int:
    out = _require_out(args)
    seed = _require_seed(args)
    cfg_mgr = ConfigurationManager()

    verify_manifest(args.data)
    dataset = read_dataset(args.data)
    if len(dataset) == 0:
        raise CliUsageError(f"Dataset {args.data} is empty")
    width = len(dataset.samples[0].h)
    n_vehicles = dataset.n_vehicles if dataset.n_vehicles is not None else width // 5
    hidden = args.hidden if args.hidden is not None else default_hidden_width(n_vehicles)

    train_cfg = cfg_mgr.get_train_config(seed)
    overrides = {
        k: getattr(args, k) for k in ("lr", "epochs", "batch_size") if getattr(args, k) is not None
    }
    train_cfg = replace(train_cfg, **overrides)

    with Stopwatch("train") as watch:
        result = train(dataset, hidden, train_cfg)
        write_model(out, result.params, n_vehicles, train_cfg.to_dict(), result.final_loss)

    artifacts.publish(
        "train",
        [out],
        config={"flags": _resolved_flags(args), "train": train_cfg.to_dict(), "hidden": hidden},
        seed=seed,
        tool_version=__version__,
        wall_clock_seconds=watch.elapsed,
        inputs=[args.data],
        extra={
            "train_accuracy": result.train_accuracy,
            "validation_accuracy": result.validation_accuracy,
        },
    )
    val = result.validation_accuracy
    _print_summary(
        "TRAINING SUMMARY",
        [
            ("Model", out),
            ("Hidden width", hidden),
            ("Final loss", f"{result.final_loss:.6f}"),
            ("Training accuracy", f"{result.train_accuracy:.1%}"),
            ("Validation accuracy", "n/a" if val is None else f"{val:.1%}"),
        ],
    )
    return EXIT_OK


def _results_path(out: Path, n_fixed: int, several: bool) -> Path:
    if not several:
        return out
    return out.with_name(f"{out.stem}_nfixed{n_fixed}{out.suffix}")


def cmd_eval(args: argparse.Namespace, artifacts: ArtifactManager) -> int:
    out = _require_out(args)
    _require_seed(args)
    for n_fixed in args.n_fixed:
        if not 0 <= n_fixed < args.n:
            raise CliUsageError(
                f"--n-fixed {n_fixed} leaves no modifiable vehicle (n = {args.n})"
            )
    cfg_mgr = ConfigurationManager()
    defaults = cfg_mgr.get_campaign_defaults()

    with Stopwatch("eval") as watch:
        grid = _load_checked_grid(args.brs, args.speed, args.omega_bar, args.rc, cfg_mgr)
        verify_manifest(args.model)
        model_file = read_model(args.model)
        if model_file.n_vehicles is not None and model_file.n_vehicles != args.n:
            raise DimensionMismatchError(
                "Model was trained for another vehicle count",
                {"model_n": model_file.n_vehicles, "n": args.n},
            )
        cfg = _campaign_config(
            args,
            cfg_mgr,
            n_runs=args.runs if args.runs is not None else defaults.runs,
            n_candidates=args.candidates if args.candidates is not None else defaults.candidates,
        )
        rows = sweep_fixed_counts(cfg, grid, model_file.params, args.n_fixed)

        several = len(rows) > 1
        outputs = []
        for row in rows:
            path = _results_path(out, row.n_fixed, several)
            write_results_csv(path, [*row.learned.records, *row.random.records])
            outputs.append(path)

    artifacts.publish(
        "eval",
        outputs,
        config={"flags": _resolved_flags(args), "campaign": cfg.to_dict()},
        seed=args.seed,
        tool_version=__version__,
        wall_clock_seconds=watch.elapsed,
        inputs=[args.brs, args.model],
        extra={
            "summary": [
                {
                    "n_fixed": row.n_fixed,
                    "learned": {"p_s": row.learned.p_s, "n_col": row.learned.n_col},
                    "random": {"p_s": row.random.p_s, "n_col": row.random.n_col},
                }
                for row in rows
            ]
        },
    )

    print("\n" + "=" * 60)
    print(f"EVALUATION SUMMARY (N = {args.n}, runs = {cfg.n_runs}, L = {cfg.n_candidates})")
    print("=" * 60)
    print(format_summary_table(rows))
    for path in outputs:
        print(f"Results: {path}")
    print("=" * 60 + "\n")
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace, artifacts: ArtifactManager) -> int:
    out = _require_out(args)
    cfg_mgr = ConfigurationManager()
    sim_cfg = cfg_mgr.get_sim_config(args.speed, args.omega_bar, args.rc)

    with Stopwatch("simulate") as watch:
        if args.scenario:
            verify_manifest(args.scenario)
            scenario = read_scenario(args.scenario)
        else:
            seed = _require_seed(args)
            if args.n is None:
                raise CliUsageError("simulate needs --scenario or --n")
            scenario = make_base_scenario(
                args.n,
                derive_rng(seed, args.run, "eval-base"),
                cfg_mgr.get_box_config(),
                n_fixed=args.n_fixed,
            )
        grid = _load_checked_grid(args.brs, args.speed, args.omega_bar, args.rc, cfg_mgr)
        result = run_simulation(scenario, grid, sim_cfg)
        write_trajectory_csv(out, result.trajectories)
        outputs = [out]
        if args.svg:
            svg = render_trajectories(
                result.trajectories, sim_cfg.rc, result.violation_log, goals=scenario.goals
            )
            atomic_write_text(args.svg, svg)
            outputs.append(Path(args.svg))

    artifacts.publish(
        "simulate",
        outputs,
        config={"flags": _resolved_flags(args), "scenario": scenario.to_record()},
        seed=args.seed,
        tool_version=__version__,
        wall_clock_seconds=watch.elapsed,
        inputs=[args.brs],
        extra={"success": result.success, "violations": result.violation_count},
    )
    _print_summary(
        "SIMULATION SUMMARY",
        [
            ("Trajectory", out),
            ("Success", result.success),
            ("Reached all goals", result.reached_all),
            ("Timed out", result.timed_out),
            ("Violations", result.violation_count),
            ("Time to completion", f"{result.time_to_completion:.2f} s"),
        ],
    )
    return EXIT_OK


def cmd_plot(args: argparse.Namespace, artifacts: ArtifactManager) -> int:
    out = _require_out(args)
    with Stopwatch("plot") as watch:
        trajectories = read_trajectory_csv(args.trajectory)
        goals = read_scenario(args.scenario).goals if args.scenario else None
        log = violations_from_trajectories(trajectories, args.rc)
        atomic_write_text(out, render_trajectories(trajectories, args.rc, log, goals=goals))

    artifacts.publish(
        "plot",
        [out],
        config={"flags": _resolved_flags(args)},
        seed=args.seed,
        tool_version=__version__,
        wall_clock_seconds=watch.elapsed,
        inputs=[args.trajectory],
    )
    _print_summary("PLOT SUMMARY", [("Figure", out), ("Violation markers", len(log))])
    return EXIT_OK


def _add_physics(p: argparse.ArgumentParser) -> None:
    p.add_argument("--speed", type=float, default=DEFAULT_SPEED, help="vehicle speed v (m/s)")
    p.add_argument(
        "--omega-bar", type=float, default=DEFAULT_OMEGA_BAR, help="turn-rate bound (rad/s)"
    )
    p.add_argument("--rc", type=float, default=DEFAULT_RC, help="danger-zone radius (m)")


def build_parser() -> CliArgumentParser:
    common = CliArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="base seed for all random streams")
    common.add_argument("--workers", type=int, default=None, help="parallel worker processes")
    common.add_argument("--out", default=None, help="output artifact path")
    common.add_argument(
        "--log-level",
        default=None,
        choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
        help="log verbosity (default from LOG_LEVEL)",
    )
    common.add_argument(
        "--history-file", default="logs/run_history.jsonl", help="command history log"
    )

    parser = CliArgumentParser(
        prog="learned-safe-init",
        description="Learning-based initialization for multi-vehicle collision avoidance",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("brs", parents=[common], help="solve the pairwise avoid set")
    _add_physics(p)
    p.add_argument("--extent", type=float, default=None)
    p.add_argument("--dims-xy", type=int, default=None)
    p.add_argument("--dims-theta", type=int, default=None)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--t-max", type=float, default=None)
    p.add_argument("--cfl", type=float, default=None)
    p.add_argument(
        "--verify-samples",
        type=int,
        default=0,
        help="play this many optimal games from safe states after solving",
    )
    p.set_defaults(handler=cmd_brs)

    p = sub.add_parser("gen-data", parents=[common], help="generate a labeled dataset")
    _add_physics(p)
    p.add_argument("--n", type=int, required=True, help="number of vehicles")
    p.add_argument("--m", type=int, required=True, help="number of samples")
    p.add_argument("--n-fixed", type=int, default=0)
    p.add_argument("--brs", required=True, help="grid file")
    p.set_defaults(handler=cmd_gen_data)

    p = sub.add_parser("train", parents=[common], help="train the success classifier")
    p.add_argument("--data", required=True, help="dataset file")
    p.add_argument("--hidden", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="compare learned and random selection")
    _add_physics(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--n-fixed", type=int, nargs="+", default=[0])
    p.add_argument("--runs", type=int, default=None)
    p.add_argument("--candidates", type=int, default=None)
    p.add_argument("--brs", required=True)
    p.add_argument("--model", required=True)
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("simulate", parents=[common], help="simulate one scenario")
    _add_physics(p)
    p.add_argument("--scenario", default=None, help="scenario JSON (else generated)")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--n-fixed", type=int, default=0)
    p.add_argument("--run", type=int, default=0, help="run index of the generated scenario")
    p.add_argument("--brs", required=True)
    p.add_argument("--svg", default=None, help="also render an SVG here")
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("plot", parents=[common], help="render a trajectory CSV as SVG")
    p.add_argument("--trajectory", required=True)
    p.add_argument("--rc", type=float, default=DEFAULT_RC)
    p.add_argument("--scenario", default=None, help="scenario JSON for goal markers")
    p.set_defaults(handler=cmd_plot)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    """Parse arguments, run one subcommand and map failures to exit codes.

    Args:
        argv: Arguments (defaults to sys.argv[1:])

    Returns:
        Exit code
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except CliUsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE

    if args.log_level:
        configure_logging(log_level=args.log_level)
    bind_run_context(args.command, args.seed)
    artifacts = ArtifactManager(args.history_file)

    try:
        return args.handler(args, artifacts)

    except CliUsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE

    except NumericalError as e:
        logger.error("Numerical failure", command=args.command, error=str(e), context=e.context)
        print(f"\n❌ {args.command} failed: {e}\n", file=sys.stderr)
        return EXIT_NUMERICAL

    except SafeInitError as e:
        logger.error("Command failed", command=args.command, error=str(e), context=e.context)
        print(f"\n❌ {args.command} failed: {e}\n", file=sys.stderr)
        return EXIT_USAGE

    except KeyboardInterrupt:
        logger.warning("Interrupted by user", command=args.command)
        return 130


if __name__ == "__main__":
    sys.exit(main())
