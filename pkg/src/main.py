#!/usr/bin/env python3
"""
Staggered embedded-boundary flow solver
Command-line entry point
"""

import logging

import click
from rich.logging import RichHandler

from .commands import geom_dump, preset, run
from .config import get_settings


@click.group()
@click.option("--log-level", default=None, help="Override the LOG_LEVEL setting")
def cli(log_level):
    """Cut-cell finite-volume solver for compressible and anelastic flow"""
    settings = get_settings()
    logging.basicConfig(
        level=(log_level or settings.LOG_LEVEL).upper(),
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(rich_tracebacks=True)],
    )


# Register commands
cli.add_command(run.command)
cli.add_command(preset.command)
cli.add_command(geom_dump.command)

if __name__ == "__main__":
    cli()
