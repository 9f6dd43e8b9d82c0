"""
`preset` command - run one of the built-in cases
"""

import click

from ..cases import preset
from ..runner import run_case
from .common import console, handle_errors, print_summary, with_run_options


@click.command("preset")
@click.argument("name")
@with_run_options
@click.option("--show", is_flag=True, default=False, help="Print the resolved config and exit")
@handle_errors
def command(name, overrides, steps, out, no_wsrd, show):
    """Run the built-in case NAME: agnesi, hemisphere or squareCylinder(h)"""
    config = preset(name, overrides)
    if show:
        console.print_json(config.model_dump_json())
        return
    console.print(f"Running preset [bold]{config.case.name}[/bold] (grid {config.grid.n})")
    summary = run_case(config, steps=steps, out=out, no_wsrd=no_wsrd)
    print_summary(summary, title=f"{config.case.name} summary")
