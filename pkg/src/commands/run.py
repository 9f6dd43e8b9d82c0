"""
`run` command - advance a case described by a config file
"""

import click

from ..config import apply_overrides, read_sections, validate_tree
from ..errors import ConfigError
from ..runner import run_case
from .common import console, handle_errors, print_summary, with_run_options


@click.command("run")
@click.argument("config_path", type=click.Path(dir_okay=False))
@with_run_options
@handle_errors
def command(config_path, overrides, steps, out, no_wsrd):
    """Run the case in CONFIG_PATH"""
    try:
        with open(config_path, "r", encoding="utf-8") as handle:
            tree, locations = read_sections(handle.readlines())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {config_path}") from None
    config = validate_tree(apply_overrides(tree, overrides), locations)
    console.print(f"Running [bold]{config.case.name}[/bold] ({config.model.value}, grid {config.grid.n})")
    summary = run_case(config, steps=steps, out=out, no_wsrd=no_wsrd)
    print_summary(summary)
