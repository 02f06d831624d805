"""Command-line front end: ``advface train-zoo | attack | evaluate | reproduce``.

The output root defaults to ``$ADVFACE_OUTPUT_ROOT`` (or ``./outputs``).
"""

from __future__ import annotations

import logging
import sys

import click

from .config import METHODS, ExperimentConfig, SeedRange, load_config, parse_config
from .pipeline import OUTPUT_ENV, RunDir, evaluate, run_attack, set_jobs, train_zoo
from .reproduce import TABLES, reproduce
from .validation import ConfigError, InvalidArgumentError


def parse_seeds(text: str | None):
    """``"100"`` -> 0..99, ``"5-9"`` -> 5..9, ``"1,4,7"`` -> that list."""
    if text is None:
        return None
    text = text.strip()
    try:
        if "," in text:
            return [int(s) for s in text.split(",") if s.strip()]
        if "-" in text:
            lo, hi = (int(s) for s in text.split("-", 1))
            if hi < lo or lo < 0:
                raise ValueError
            return list(range(lo, hi + 1))
        n = int(text)
    except ValueError:
        raise click.BadParameter(f"cannot parse seeds {text!r}; use N, A-B or A,B,C") from None
    if n < 1:
        raise click.BadParameter("seed count must be >= 1")
    return list(range(n))


def _load(config_path, seeds=None, method=None) -> ExperimentConfig:
    cfg = load_config(config_path)
    updates = {}
    if seeds is not None:
        updates["seeds"] = seeds
    if method is not None:
        updates["attack"] = {**cfg.attack.model_dump(), "method": method}
    if updates:
        data = {**cfg.model_dump(), **updates}
        if isinstance(data["seeds"], SeedRange):
            data["seeds"] = data["seeds"].model_dump()
        cfg = parse_config(data)
    return cfg


def _fail(exc: Exception):
    click.echo(f"error: {exc}", err=True)
    sys.exit(2)


common_out = click.option("--out", type=click.Path(file_okay=False), default=None, envvar=OUTPUT_ENV,
                          help=f"Output root (default: ${OUTPUT_ENV} or ./outputs).")
common_jobs = click.option("--jobs", type=click.IntRange(min=1), default=None, help="Torch CPU threads.")
common_seeds = click.option("--seeds", default=None, help="Seed count N, range A-B or list A,B,C.")


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress.")
def main(verbose):
    """Attribute-conditioned latent-space attacks on forensic face classifiers."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(message)s")


@main.command("train-zoo")
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@common_out
@common_jobs
def train_zoo_cmd(config_path, out, jobs):
    """Train the forensic classifier zoo described by the config."""
    set_jobs(jobs)
    try:
        path = train_zoo(_load(config_path), out)
    except (ConfigError, InvalidArgumentError) as exc:
        _fail(exc)
    click.echo(str(path))


@main.command("attack")
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@common_out
@common_seeds
@common_jobs
@click.option("--method", type=click.Choice(METHODS), default=None, help="Override attack.method.")
def attack_cmd(config_path, out, seeds, jobs, method):
    """Run an attack campaign; writes one PNG + JSON + NPZ per run."""
    set_jobs(jobs)
    try:
        path = run_attack(_load(config_path, parse_seeds(seeds), method), out)
    except (ConfigError, InvalidArgumentError) as exc:
        _fail(exc)
    click.echo(str(path))


@main.command("evaluate")
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@common_out
@common_seeds
@common_jobs
@click.option("--method", type=click.Choice(METHODS), default=None, help="Override attack.method.")
def evaluate_cmd(config_path, out, seeds, jobs, method):
    """Score the saved results of a config: CSV reports and contact sheets."""
    set_jobs(jobs)
    try:
        cfg = _load(config_path, parse_seeds(seeds), method)
        reports = evaluate(cfg, out)
    except (ConfigError, InvalidArgumentError) as exc:
        _fail(exc)
    run = RunDir(cfg, out)
    for name in sorted(reports):
        click.echo(f"{name}: {reports[name]}")
    csv_path = run.reports / ("transfer.csv" if cfg.evaluation.leave_one_out else "campaign.csv")
    click.echo(csv_path.read_text(), nl=False)


@main.command("reproduce")
@click.argument("table_id", type=click.Choice(TABLES))
@common_out
@click.option("--seeds", "n_seeds", type=click.IntRange(min=1), default=100, help="Seeds per campaign.")
@click.option("--repetitions", type=click.IntRange(min=1), default=None, help="Leave-one-out repetitions.")
@common_jobs
def reproduce_cmd(table_id, out, n_seeds, repetitions, jobs):
    """Run the desk-scale analog of a published table."""
    set_jobs(jobs)
    try:
        res = reproduce(table_id, out, n_seeds, repetitions)
    except (ConfigError, InvalidArgumentError) as exc:
        _fail(exc)
    click.echo(res["text"])
    click.echo(f"csv: {res['csv']}")


if __name__ == "__main__":
    main()
