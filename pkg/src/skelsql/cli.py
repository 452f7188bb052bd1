"""Command-line entry points for index building and evaluation."""

from __future__ import annotations

import logging
import sys
from pathlib import Path

import click

from .errors import DbUnreadable, FileMissing
from .harness import MOCK_BEHAVIORS, RunConfig, build_index, evaluate

EXIT_CONFIG = 2
EXIT_IO = 3


def _common_options(fn):
    options = [
        click.option("--tables", required=True, type=click.Path(path_type=Path)),
        click.option("--train", type=click.Path(path_type=Path)),
        click.option("--dev", type=click.Path(path_type=Path)),
        click.option("--db-dir", "db_dir", required=True, type=click.Path(path_type=Path)),
        click.option("--index", required=True, type=click.Path(path_type=Path)),
        click.option("--k", default=8, show_default=True),
        click.option("--alpha", default=0.9, show_default=True),
        click.option("--beta", default=0.5, show_default=True),
        click.option("--tau", default=0.6, show_default=True),
        click.option("--theta", default=0.4, show_default=True),
        click.option("--max-fallbacks", "max_fallbacks", default=3, show_default=True),
        click.option("--backend", default="reference", show_default=True,
                      type=click.Choice(["reference", "sidecar"])),
        click.option("--sidecar-url", "sidecar_url", default=None),
        click.option("--llm", default="mock", show_default=True,
                      type=click.Choice(["mock", "replay", "http"])),
        click.option("--llm-url", "llm_url", default=None),
        click.option("--model", default="text-davinci-003", show_default=True),
        click.option("--cassette", type=click.Path(path_type=Path)),
        click.option("--mock-behavior", "mock_behavior", default="gold",
                      show_default=True, type=click.Choice(list(MOCK_BEHAVIORS))),
        click.option("--exclude-same-db", "exclude_same_db", is_flag=True, default=False),
        click.option("--seed", default=13, show_default=True),
        click.option("--workers", default=4, show_default=True),
        click.option("--timeout", default=30.0, show_default=True),
        click.option("--out", type=click.Path(path_type=Path)),
        click.option("--dump-relevance", "dump_relevance", type=click.Path(path_type=Path)),
    ]
    for opt in reversed(options):
        fn = opt(fn)
    return fn


def _config_from_kwargs(**kwargs) -> RunConfig:
    config = RunConfig(**kwargs)
    try:
        config.validate()
    except ValueError as exc:
        raise click.UsageError(str(exc)) from exc
    return config


@click.group()
@click.option("-v", "--verbose", is_flag=True, default=False)
def main(verbose: bool):
    logging.basicConfig(
        level=logging.INFO if verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )


@main.command("build-index")
@_common_options
def build_index_cmd(**kwargs):
    """De-semanticize the training split and build the skeleton index."""
    config = _config_from_kwargs(**kwargs)
    if config.train is None:
        raise click.UsageError("--train is required for build-index")
    try:
        index = build_index(config)
    except (FileMissing, DbUnreadable, OSError) as exc:
        click.echo(f"fatal: {exc}", err=True)
        sys.exit(EXIT_IO)
    click.echo(f"indexed {len(index)} skeletons -> {config.index}")


@main.command("evaluate")
@_common_options
def evaluate_cmd(**kwargs):
    """Run the pipeline over the dev split and report VA/EX."""
    config = _config_from_kwargs(**kwargs)
    if config.dev is None or config.train is None:
        raise click.UsageError("--train and --dev are required for evaluate")
    try:
        report = evaluate(config)
    except (FileMissing, DbUnreadable, OSError) as exc:
        click.echo(f"fatal: {exc}", err=True)
        sys.exit(EXIT_IO)
    click.echo(
        f"questions={len(report.records)} va={report.va_rate:.3f} ex={report.ex_rate:.3f}"
    )
    if config.out is not None:
        click.echo(f"report written to {config.out}")


if __name__ == "__main__":
    main()
