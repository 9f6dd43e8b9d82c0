"""
`geom-dump` command - write the cut-cell geometry of all four grid variants
"""

from pathlib import Path

import click

from ..cases import make_surface, preset
from ..config import get_settings, parse_config
from ..geometry import build_geometry_set
from ..wsrd import build_all_neighborhoods
from .common import console, handle_errors


@click.command("geom-dump")
@click.argument("config_path", type=click.Path(dir_okay=False), required=False)
@click.option("--preset", "preset_name", default=None, help="Use a built-in case instead of a file")
@click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE", help="Override a preset key")
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory")
@click.option("--wsrd/--no-wsrd", default=False, help="Also dump the merging neighborhoods")
@handle_errors
def command(config_path, preset_name, overrides, out, wsrd):
    """Write geometry_<variant>.txt for the case in CONFIG_PATH"""
    if (config_path is None) == (preset_name is None):
        raise click.UsageError("give either CONFIG_PATH or --preset")
    config = preset(preset_name, overrides) if preset_name else parse_config(config_path)
    directory = Path(out or get_settings().OUTPUT_DIR)
    geoms = build_geometry_set(make_surface(config), config.grid)
    for geom in geoms.variants:
        path = geom.export(directory / f"geometry_{geom.variant.value}.txt")
        console.print(f"{geom.variant.value}: {int(geom.cut.sum())} cut cells -> {path}")
    if wsrd:
        for variant, nmap in build_all_neighborhoods(geoms).items():
            console.print(f"{variant.value}: {len(nmap.members)} neighborhoods -> "
                          f"{nmap.dump(directory / f'wsrd_{variant.value}.txt')}")
