"""
Main CLI entry point for mbrl-game.

Subcommands train the four game solvers, run the randomized bound
certification sweeps, and profile how a trained model's error grows with
rollout length.
"""

import json
import math
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Optional

import click
from dotenv import load_dotenv
from rich.console import Console
from rich.table import Table

from .artifacts import RunManifest, load_checkpoint, output_root, run_directory, save_checkpoint, utc_now, write_json
from .config import GameConfig, SweepConfig, config_hash, load_config_file, resolve_config, validate_section
from .envs import GridWorld
from .errors import CheckpointError, ConfigError, DivergenceError
from .game import GameRunner, compare_summaries
from .logging_utils import setup_logging
from .verify import amplification_profile, certify_gridworld_pair, dump_violation, run_suite, write_sweep_csv

# Load environment variables
load_dotenv()

console = Console()

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_DIVERGENCE = 3


def _fail(e: Exception, code: int, debug: bool) -> None:
    console.print(f"[red]❌ Error: {e}[/red]")
    if debug:
        console.print(traceback.format_exc())
    sys.exit(code)


def parse_seeds(text: str) -> list[int]:
    """'0..4' (inclusive range) or '0,1,2'."""
    try:
        if ".." in text:
            start, stop = (int(part) for part in text.split("..", 1))
            if stop < start:
                raise ValueError
            return list(range(start, stop + 1))
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise click.BadParameter(f"expected 'a..b' or a comma-separated list, got {text!r}", param_hint="--seeds")


@click.group()
@click.option('--debug', '-d', is_flag=True, help='Enable debug logging')
@click.pass_context
def cli(ctx, debug):
    """
    mbrl-game - model-based RL as a game between a policy and a model.

    Examples:
        # Train PAL on the gridworld
        mbrl-game train --config configs/pal_grid.yaml --seed 7

        # Same file, model-as-leader defaults
        mbrl-game train --config configs/pal_grid.yaml --solver mal

        # Five seeds on four worker processes
        mbrl-game train --config configs/pal_reacher.yaml --seeds 0..4 --jobs 4

        # Certify every bound on 100 random tabular instances
        mbrl-game verify all --trials 100 --seed 1

        # Error amplification profile of a trained model
        mbrl-game diagnose runs/pal-point-reacher-<hash>/seed_0 -T 50

        # Median samples-to-success per solver over every run under ./runs
        mbrl-game compare runs
    """
    ctx.ensure_object(dict)
    ctx.obj['debug'] = debug
    setup_logging(debug)


def train_seed(cfg: GameConfig, root: Path, certify: bool = True) -> dict[str, Any]:
    """
    Train one solver for one seed and write its artifacts.

    Args:
        cfg: Resolved configuration, seed included
        root: Output root; the run goes into its own hashed subdirectory
        certify: Check the global bound on the final gridworld pair

    Returns:
        The run summary, with the output directory added
    """
    digest = config_hash(cfg)
    out = run_directory(root, cfg, digest)
    manifest = RunManifest(config=cfg.model_dump(mode="json"), seed=cfg.seed, config_hash=digest, output_dir=str(out))
    manifest.write()

    runner = GameRunner(cfg)
    try:
        log = runner.run()
    except DivergenceError:
        if len(runner.log):
            runner.log.write_csv(out / "log.csv")
        manifest.status, manifest.finished_at = "diverged", utc_now()
        manifest.write()
        raise

    log.write_csv(out / "log.csv")
    log.write_summary(out / "summary.json", cfg.success_threshold)
    save_checkpoint(out, cfg, runner.policy, runner.value, runner.model, perturbed=runner.perturbed)
    summary = log.summary(cfg.success_threshold)

    if certify and isinstance(runner.env, GridWorld):
        reports = [
            certify_gridworld_pair(
                runner.env, runner.policy, runner.model, goal, cfg.npg.gamma, cfg.model.export_smoothing
            ).to_dict()
            for goal in runner.env.task_goals()
        ]
        write_json(out / "certification.json", {"config_hash": digest, "reports": reports})
        summary["certified"] = all(report["holds"] for report in reports)

    manifest.status, manifest.finished_at = "finished", utc_now()
    manifest.write()
    summary["output_dir"] = str(out)
    return summary


def _summary_table(summaries: list[dict[str, Any]]) -> Table:
    table = Table(title="Training runs")
    for column in ("Solver", "Seed", "Iterations", "Samples", "Samples to success", "Final J", "Success", "Certified"):
        table.add_column(column)
    for s in summaries:
        table.add_row(
            s["solver"], str(s["seed"]), str(s["iterations"]), str(s["total_samples"]),
            "-" if s["samples_to_success"] is None else str(s["samples_to_success"]),
            f"{s['final_J']:.4f}", f"{s['final_success_rate']:.2f}",
            {True: "✅", False: "❌"}.get(s.get("certified"), "-"),
        )
    return table


@cli.command()
@click.option('--config', '-c', 'config_path', type=click.Path(exists=True, dir_okay=False), help='YAML or JSON config file')
@click.option('--seed', type=int, help='Run seed')
@click.option('--seeds', help="Several seeds: '0..4' or '0,1,2'")
@click.option('--jobs', '-j', default=1, type=click.IntRange(min=1), help='Parallel processes for --seeds')
@click.option('--solver', help='pal | mal | gda | br (its preset fills unset fields)')
@click.option('--env', 'env_name', help='gridworld-goal | point-reacher | pendulum')
@click.option('--budget', type=int, help='Real-world sample budget')
@click.option('--out', type=click.Path(file_okay=False), help='Output root (default $MBRL_GAME_OUTPUT_ROOT or ./runs)')
@click.option('--certify/--no-certify', default=True, help='Certify the final gridworld pair')
@click.pass_context
def train(ctx, config_path, seed, seeds, jobs, solver, env_name, budget, out, certify):
    """Train a solver and write its log, summary, checkpoint and manifest."""
    debug = ctx.obj['debug']
    try:
        file_data = load_config_file(config_path) if config_path else {}
        overrides: dict[str, Any] = {"solver": solver, "seed": seed, "budget": budget}
        if env_name is not None:
            overrides["env"] = {"name": env_name}
        seed_values = parse_seeds(seeds) if seeds else [None]
        configs = [resolve_config(file_data, {**overrides, "seed": s if s is not None else seed}) for s in seed_values]
    except ConfigError as e:
        _fail(e, EXIT_USAGE, debug)

    root = output_root(out)
    console.print(
        f"[blue]🔄 Training {configs[0].solver} on {configs[0].env.name} "
        f"({len(configs)} seed{'s' if len(configs) > 1 else ''}, budget {configs[0].budget})[/blue]"
    )
    try:
        if jobs > 1 and len(configs) > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                summaries = list(pool.map(train_seed, configs, [root] * len(configs), [certify] * len(configs)))
        else:
            summaries = [train_seed(cfg, root, certify) for cfg in configs]
    except DivergenceError as e:
        _fail(e, EXIT_DIVERGENCE, debug)
    except Exception as e:
        _fail(e, EXIT_FAILURE, debug)

    console.print(_summary_table(summaries))
    for s in summaries:
        console.print(f"[green]✅ Artifacts written to {s['output_dir']}[/green]")
    if any(s.get("certified") is False for s in summaries):
        console.print("[red]❌ Global performance bound violated on a trained pair[/red]")
        sys.exit(EXIT_FAILURE)


@cli.command()
@click.argument('suite', type=click.Choice(['lemma1', 'lemma2', 'lemma3', 'theorem1', 'all']))
@click.option('--trials', '-n', default=100, type=int, help='Random instances per suite')
@click.option('--seed', default=0, type=int, help='Master seed')
@click.option('--max-states', default=20, type=int, help='Largest random state space')
@click.option('--horizon', '-T', default=50, type=int, help='Chain horizon for the amplification suite')
@click.option('--out', type=click.Path(file_okay=False), help='Output root (default $MBRL_GAME_OUTPUT_ROOT or ./runs)')
@click.option('--bound-scale', default=1.0, type=float, hidden=True)
@click.pass_context
def verify(ctx, suite, trials, seed, max_states, horizon, out, bound_scale):
    """
    Certify the model-error bounds on random tabular instances.

    SUITE: lemma1 | lemma2 | lemma3 | theorem1 | all

    Exits 0 only when every bound holds; otherwise the first violating
    instance is dumped for replay and the exit code is 1.
    """
    debug = ctx.obj['debug']
    try:
        settings: SweepConfig = validate_section(SweepConfig, {
            "suite": suite, "trials": trials, "seed": seed, "bound_scale": bound_scale,
            "max_states": max_states, "horizon": horizon,
        })
    except ConfigError as e:
        _fail(e, EXIT_USAGE, debug)

    digest = config_hash(settings)
    target = output_root(out) / f"verify-{digest}"
    results = []
    try:
        for name in settings.suites:
            console.print(f"[blue]🔍 {name}: {settings.trials} trials[/blue]")
            results.append(run_suite(
                name, settings.trials, settings.seed, settings.bound_scale,
                settings.max_states, settings.max_actions, settings.horizon,
            ))
        write_sweep_csv(target / "sweep.csv", results, digest)
    except Exception as e:
        _fail(e, EXIT_FAILURE, debug)

    table = Table(title="Bound certification")
    for column in ("Suite", "Trials", "Median tightness", "Holds"):
        table.add_column(column)
    for result in results:
        table.add_row(result.suite, str(len(result.rows)), f"{result.median_tightness:.4f}",
                      "✅" if result.holds else "❌")
    console.print(table)

    violations = [result.violation for result in results if result.violation is not None]
    if violations:
        first = violations[0]
        path = target / f"violation_{first['suite']}.json"
        dump_violation(path, first)
        console.print(
            f"[red]❌ {first['suite']} violated on trial {first['trial']}: lhs {first['report']['lhs']:.6g} "
            f"> bound {first['report']['bound']:.6g}; instance written to {path}[/red]"
        )
        sys.exit(EXIT_FAILURE)
    console.print(f"[green]✅ All bounds hold; summary written to {target / 'sweep.csv'}[/green]")


@cli.command()
@click.argument('checkpoint_dir', type=click.Path(exists=True, file_okay=False))
@click.option('--mode', type=click.Choice(['open-loop', 'closed-loop', 'both']), default='both', help='Rollout mode')
@click.option('--horizon', '-T', default=50, type=click.IntRange(min=1), help='Look-ahead horizon')
@click.option('--n-rollouts', '-n', default=100, type=click.IntRange(min=1), help='Rollouts per member')
@click.option('--seed', default=0, type=int, help='Seed for start states and noise')
@click.option('--output', '-o', type=click.Path(dir_okay=False), help='Profile CSV (default <checkpoint_dir>/amplification.csv)')
@click.pass_context
def diagnose(ctx, checkpoint_dir, mode, horizon, n_rollouts, seed, output):
    """
    Measure how model error compounds over the look-ahead horizon.

    CHECKPOINT_DIR: Run directory (or its checkpoint/ child) from `train`
    """
    debug = ctx.obj['debug']
    try:
        env, policy, model, cfg = load_checkpoint(checkpoint_dir)
        profile = amplification_profile(env, policy, model, mode, horizon, n_rollouts, seed)
        path = Path(output) if output else Path(checkpoint_dir) / "amplification.csv"
        profile.write_csv(path, config_hash(cfg))
    except CheckpointError as e:
        _fail(e, EXIT_USAGE, debug)
    except Exception as e:
        _fail(e, EXIT_FAILURE, debug)

    frame = profile.to_frame()
    table = Table(title=f"Error amplification ({env.name})")
    for column in frame.columns:
        table.add_column(column)
    for t in sorted({0, len(frame) // 4, len(frame) // 2, len(frame) - 1}):
        table.add_row(*(f"{value:.4g}" for value in frame.iloc[t]))
    console.print(table)
    if profile.truncated:
        console.print("[yellow]Warning: model diverged; profile truncated[/yellow]")
    console.print(f"[green]✅ Profile written to {path}[/green]")


@cli.command()
@click.argument('runs_dir', type=click.Path(exists=True, file_okay=False))
@click.option('--output', '-o', type=click.Path(dir_okay=False), help='Comparison CSV (default <runs_dir>/comparison.csv)')
@click.pass_context
def compare(ctx, runs_dir, output):
    """
    Median sample efficiency and recovery of every solver found under RUNS_DIR.

    RUNS_DIR: Output root of one or more `train` invocations
    """
    debug = ctx.obj['debug']
    paths = sorted(Path(runs_dir).rglob("summary.json"))
    if not paths:
        _fail(ValueError(f"no summary.json found under {runs_dir}"), EXIT_USAGE, debug)
    try:
        summaries = [json.loads(path.read_text()) for path in paths]
        frame = compare_summaries(summaries)
        path = Path(output) if output else Path(runs_dir) / "comparison.csv"
        frame.to_csv(path)
    except (KeyError, ValueError) as e:
        _fail(e, EXIT_USAGE, debug)

    table = Table(title=f"Solvers ({len(paths)} runs)")
    for column in ("Solver", "Seeds", "Samples to success", "Final success", "Final J", "Samples to recover"):
        table.add_column(column)
    for solver, row in frame.iterrows():
        table.add_row(
            solver, str(int(row["seeds"])), f"{row['samples_to_success']:g}", f"{row['final_success_rate']:.2f}",
            f"{row['final_J']:.4f}", "-" if math.isnan(row["samples_to_recover"]) else f"{row['samples_to_recover']:g}",
        )
    console.print(table)
    console.print(f"[green]✅ Comparison written to {path}[/green]")


@cli.command()
def version():
    """Show version information."""
    from . import __version__
    console.print(f"mbrl-game version: {__version__}")


def main(argv: Optional[list[str]] = None):
    """Main entry point for the CLI."""
    try:
        cli(args=argv)
    except KeyboardInterrupt:
        console.print("\n[yellow]👋 Interrupted by user[/yellow]")
        sys.exit(EXIT_FAILURE)
    except Exception as e:
        console.print(f"[red]💥 Unexpected error: {e}[/red]")
        sys.exit(EXIT_FAILURE)


if __name__ == '__main__':
    main()
