"""
Helpers shared by the CLI commands: console output and error reporting
"""

import functools
import logging
from typing import Callable

import click
from rich.console import Console
from rich.markup import escape
from rich.table import Table

from ..errors import SolverAbort, SolverError
from ..models import RunSummary

logger = logging.getLogger(__name__)

console = Console()


def handle_errors(func: Callable) -> Callable:
    """Report solver errors in red and exit with status 1"""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except SolverAbort as exc:
            console.print(f"[bold red]Run aborted:[/bold red] {escape(str(exc))}")
            if exc.dump_path:
                console.print(f"[red]State written to {escape(exc.dump_path)}[/red]")
            raise click.exceptions.Exit(1)
        except SolverError as exc:
            console.print(f"[bold red]Error:[/bold red] {escape(str(exc))}")
            raise click.exceptions.Exit(1)

    return wrapper


def print_summary(summary: RunSummary, title: str = "Run summary") -> None:
    table = Table(title=title)
    table.add_column("Quantity", style="cyan")
    table.add_column("Value", justify="right")
    table.add_row("steps", str(summary.steps))
    table.add_row("time", f"{summary.time:.6e}")
    for key, value in summary.diagnostics.items():
        if key in ("steps", "time"):
            continue
        table.add_row(key, f"{value:.6e}")
    table.add_row("outputs", str(len(summary.outputs)))
    console.print(table)


run_options = [
    click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE",
                 help="Override a config key, e.g. --set grid.n='60 1 86'"),
    click.option("--steps", type=click.IntRange(min=0), default=None, help="Number of steps to take"),
    click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory"),
    click.option("--no-wsrd", is_flag=True, default=False, help="Disable weighted state redistribution"),
]


def with_run_options(func: Callable) -> Callable:
    for option in reversed(run_options):
        func = option(func)
    return func
