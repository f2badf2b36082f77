import logging
import os
import sys
import traceback
from typing import Any, Dict, Optional

import click
from dotenv import load_dotenv

from shield_patcher.experiment import ExperimentRunner
from shield_patcher.models.experiment_models import MODEL_NAMES
from shield_patcher.utils.config_loader import load_experiment_config
from shield_patcher.utils.exceptions import (
    CheckpointError, ConfigurationError, DatasetError, ExperimentError, InvalidInputError, NumericalError, ShieldError,
)

load_dotenv()

ENGINES = ["greedy-word", "greedy-char", "genetic-word"]
NOISE_MODES = ["fresh", "input-seeded", "zero"]


def exit_code_for(error: Exception) -> int:
    """2 for configuration and input problems, 3 for numerical failures, 1 otherwise."""
    if isinstance(error, ExperimentError) and error.original_exception is not None:
        error = error.original_exception
    if isinstance(error, NumericalError):
        return 3
    if isinstance(error, (ConfigurationError, DatasetError, InvalidInputError, CheckpointError)):
        return 2
    return 1


def _env_overrides() -> Dict[str, Any]:
    overrides: Dict[str, Any] = {"out_dir": os.getenv("SHIELD_OUT_DIR") or None}
    workers = os.getenv("SHIELD_WORKERS")
    if workers:
        try:
            overrides["workers"] = int(workers)
        except ValueError:
            raise ConfigurationError(f"SHIELD_WORKERS must be an integer, got '{workers}'") from None
    return overrides


def _make_runner(ctx: click.Context) -> ExperimentRunner:
    opts = ctx.obj
    overrides = _env_overrides()
    overrides.update({
        "seeds": [opts["seed"]] if opts["seed"] is not None else None,
        "out_dir": opts["out_dir"] or overrides["out_dir"],
        "workers": opts["workers"] or overrides.get("workers"),
        "shield": {"noise_mode": opts["noise"]},
    })
    config = load_experiment_config(opts["config_path"], overrides)
    return ExperimentRunner(config, show_progress=opts["show_progress"], echo=click.echo)


def _run(ctx: click.Context, command: str, **kwargs) -> Any:
    try:
        runner = _make_runner(ctx)
        result = getattr(runner, command)(**kwargs)
    except ExperimentError as ee:
        click.secho(f"Experiment Error: {ee.stage} - {ee.message}", fg="red")
        if ee.original_exception:
            click.secho(f"  Details: {type(ee.original_exception).__name__}: {ee.original_exception}", fg="red")
        if ctx.obj["verbose"]:
            click.echo(traceback.format_exc())
        sys.exit(exit_code_for(ee))
    except ShieldError as se:
        click.secho(f"{type(se).__name__}: {se}", fg="red")
        sys.exit(exit_code_for(se))
    except Exception as e:
        click.secho(f"An unexpected error occurred: {e.__class__.__name__} - {e}", fg="red")
        if ctx.obj["verbose"]:
            click.echo(traceback.format_exc())
        sys.exit(1)
    click.secho(f"{ctx.info_name} finished.", fg="green")
    return result


@click.group()
@click.option("--seed", type=int, default=None, help="Run a single seed instead of the configured list.")
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
              help="JSON file merged over the bundled defaults.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None,
              help="Output directory (default: SHIELD_OUT_DIR or the configured out_dir).")
@click.option("--workers", type=click.IntRange(min=1), default=None, help="Parallel attack sessions.")
@click.option("--noise", type=click.Choice(NOISE_MODES), default=None, help="Gumbel noise mode of SHIELD victims.")
@click.option("--verbose", "-v", is_flag=True, help="Debug logging and tracebacks on failure.")
@click.option("--quiet", "-q", is_flag=True, help="No progress bars.")
@click.pass_context
def cli(ctx: click.Context, seed: Optional[int], config_path: Optional[str], out_dir: Optional[str],
        workers: Optional[int], noise: Optional[str], verbose: bool, quiet: bool):
    """
    Train text classifiers, patch them with SHIELD and measure their robustness
    against black-box adversarial attacks.
    """
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    ctx.obj = {"seed": seed, "config_path": config_path, "out_dir": out_dir, "workers": workers,
               "noise": noise, "verbose": verbose, "show_progress": not quiet and sys.stderr.isatty()}


@cli.command("gen-data")
@click.option("--output-dir", "-o", type=click.Path(file_okay=False), default=None,
              help="Where to write train/validation/test CSVs (default: <out>/data).")
@click.pass_context
def gen_data(ctx: click.Context, output_dir: Optional[str]):
    """Writes the configured dataset splits as CSV files."""
    _run(ctx, "cmd_gen_data", out_dir=output_dir)


@cli.command("train-base")
@click.option("--no-ensemble", is_flag=True, help="Skip the ensemble baseline.")
@click.pass_context
def train_base(ctx: click.Context, no_ensemble: bool):
    """Trains and freezes the base model (and the ensemble baseline) per seed."""
    _run(ctx, "cmd_train_base", ensemble=not no_ensemble)


@cli.command()
@click.option("--tau-grid", is_flag=True, help="Select tau by validation robustness over the configured grid.")
@click.pass_context
def patch(ctx: click.Context, tau_grid: bool):
    """Trains the SHIELD patch on top of each frozen base model."""
    _run(ctx, "cmd_patch", tau_grid=tau_grid)


@cli.command()
@click.option("--model", "models", multiple=True, type=click.Choice(MODEL_NAMES),
              default=("base", "shield_full"), show_default=True)
@click.option("--engine", "engines", multiple=True, type=click.Choice(ENGINES),
              help="Attack engines (default: every configured attack).")
@click.pass_context
def attack(ctx: click.Context, models, engines):
    """Attacks the given models on the test split."""
    _run(ctx, "cmd_attack", models=list(models), engines=list(engines) or None)


@cli.command("budget-curve")
@click.option("--model", "models", multiple=True, type=click.Choice(MODEL_NAMES),
              default=("base", "shield_full"), show_default=True)
@click.option("--engine", "engines", multiple=True, type=click.Choice(ENGINES))
@click.pass_context
def budget_curve(ctx: click.Context, models, engines):
    """Accuracy under attack at fractions of the query budget."""
    _run(ctx, "cmd_budget_curve", models=list(models), engines=list(engines) or None)


@cli.command()
@click.option("--engine", "engines", multiple=True, type=click.Choice(ENGINES))
@click.pass_context
def ablate(ctx: click.Context, engines):
    """Trains the SE-only and ME-only variants and attacks all defenses."""
    _run(ctx, "cmd_ablate", engines=list(engines) or None)


@cli.command()
@click.option("--select", type=click.Choice(["mean", "best"]), default="mean", show_default=True,
              help="Average over seeds, or keep each model's best seed.")
@click.pass_context
def report(ctx: click.Context, select: str):
    """Aggregates per-seed results into summary.csv and report.json."""
    _run(ctx, "cmd_report", select=select)


if __name__ == "__main__":
    cli()
