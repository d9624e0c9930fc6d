"""Command-line entry point: run, validate and list experiment configs.

Exit codes: 0 success, 2 config validation failure, 3 runtime inference
failure.  The default output directory comes from ``FACTORBP_OUT`` (falling
back to ``./out``); each config writes into a subdirectory named after the
config's ``name`` field (or the file stem).
"""
from __future__ import annotations

import os
import sys
from importlib import resources

import click

from . import __version__
from .errors import ConfigError, FactorBPError
from .experiments import (KINDS, load_config, run_experiment, seed_range,
                          validate_config)

EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _out_root(override: str | None) -> str:
    return override or os.environ.get("FACTORBP_OUT", "out")


def _config_name(cfg: dict, path: str) -> str:
    return cfg.get("name") or os.path.splitext(os.path.basename(path))[0]


@click.group()
@click.version_option(__version__)
def main():
    """Reproduce the package's experiments from JSON configs."""


@main.command()
@click.argument("config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", default=None,
              help="Output root (default: $FACTORBP_OUT or ./out).")
@click.option("--threads", default=1, show_default=True,
              help="Worker processes for per-seed parallelism.")
@click.option("--full-scale", is_flag=True,
              help="Run the config's full seed range instead of a short prefix.")
def run(config_path, out_dir, threads, full_scale):
    """Run one experiment config and write CSV/JSON artifacts."""
    try:
        cfg = load_config(config_path)
        problems = validate_config(cfg)
        if problems:
            for p in problems:
                click.echo(f"{config_path}: {p}", err=True)
            sys.exit(EXIT_CONFIG)
        target = os.path.join(_out_root(out_dir), _config_name(cfg, config_path))
        manifest = run_experiment(cfg, target, threads=threads,
                                  full_scale=full_scale)
    except ConfigError as e:
        click.echo(f"config error: {e}", err=True)
        sys.exit(EXIT_CONFIG)
    except FactorBPError as e:
        click.echo(f"runtime failure: {e}", err=True)
        sys.exit(EXIT_RUNTIME)
    click.echo(f"wrote {target} ({len(manifest['seeds_run'])} seeds, "
               f"{manifest['wall_time_s']}s)")


@main.command()
@click.argument("config_path", type=click.Path(exists=True, dir_okay=False))
def validate(config_path):
    """Check a config against every precondition without running it."""
    try:
        cfg = load_config(config_path)
    except ConfigError as e:
        click.echo(f"config error: {e}", err=True)
        sys.exit(EXIT_CONFIG)
    problems = validate_config(cfg)
    if problems:
        for p in problems:
            click.echo(f"{config_path}: {p}", err=True)
        sys.exit(EXIT_CONFIG)
    seeds = seed_range(cfg)
    click.echo(f"{config_path}: valid ({cfg['kind']}, {len(seeds)} seeds)")


@main.command("list-experiments")
def list_experiments():
    """List the supported experiment kinds and the bundled configs."""
    click.echo("kinds: " + ", ".join(KINDS))
    pkg = resources.files("factorbp") / "configs"
    names = sorted(p.name for p in pkg.iterdir() if p.name.endswith(".json"))
    for name in names:
        click.echo(f"bundled: {name}")


if __name__ == "__main__":
    main()
