"""``memevo`` command line: run sequences, print statistics, compare modes."""
from __future__ import annotations

from pathlib import Path

import click

from .experiment import ExperimentConfig, Mode, compare_modes, read_stats, run_sequence
from .instance import ParseError
from .transfer import PoolError


@click.group()
def main():
    """Memetic routing solver with meme transfer across instances."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--mode", type=click.Choice([m.value for m in Mode]), default=None)
@click.option("--pool", type=click.Path(dir_okay=False), default=None, help="Meme pool JSON file.")
@click.option("--jobs", type=int, default=None, help="Parallel runs per instance.")
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory.")
@click.option("--runs", type=int, default=None, help="Runs per instance.")
@click.option("--evaluations", type=int, default=None, help="Evaluation budget per run.")
@click.option("--threshold-from", type=click.Path(exists=True), default=None,
              help="Results directory whose heuristic-mode Ave.Cost sets the Success No. threshold.")
def run(config_path, mode, pool, jobs, seed, out, runs, evaluations, threshold_from):
    """Solve the configured instance sequence."""
    try:
        cfg = ExperimentConfig.from_toml(config_path, mode=mode, pool_path=pool, jobs=jobs, seed=seed,
                                         output_dir=out, runs_per_instance=runs, max_evaluations=evaluations)
        thresholds = None
        if threshold_from:
            thresholds = {s.instance: s.ave_cost for s in read_stats(threshold_from)
                          if s.mode == Mode.HEURISTIC.value}
        stats = run_sequence(cfg, thresholds)
    except (ParseError, PoolError, ValueError, FileNotFoundError) as exc:
        raise click.ClickException(str(exc)) from exc
    _print_stats(stats)
    click.echo(f"wrote {Path(cfg.output_dir) / 'stats.csv'}")


def _print_stats(stats):
    click.echo(f"{'instance':<20}{'mode':<11}{'b_cost':>12}{'ave_cost':>12}{'std_dev':>10}"
               f"{'success':>9}{'evals':>10}{'cpu_s':>9}")
    for s in stats:
        click.echo(f"{s.instance:<20}{s.mode:<11}{s.best_cost:>12.2f}{s.ave_cost:>12.2f}{s.std_dev:>10.2f}"
                   f"{s.success_no:>9d}{s.evaluation_count:>10d}{s.cpu_time_seconds:>9.1f}")


@main.command()
@click.argument("dirs", nargs=-1, required=True, type=click.Path(exists=True))
def stats(dirs):
    """Print the statistics tables of one or more result directories."""
    for d in dirs:
        click.echo(f"== {d}")
        _print_stats(read_stats(d))


@main.command()
@click.argument("dir_a", type=click.Path(exists=True))
@click.argument("dir_b", type=click.Path(exists=True))
def compare(dir_a, dir_b):
    """Per-instance deltas (b - a) and a sign test on Ave.Cost."""
    try:
        report = compare_modes(read_stats(dir_a), read_stats(dir_b))
    except ValueError as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(report.format())


if __name__ == "__main__":
    main()
