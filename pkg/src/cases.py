"""
Case library: named presets for the ridge, hemisphere and square-cylinder runs
"""

import logging
import re
from typing import Any, Callable, Dict, Iterable, Optional, Tuple

from .config import apply_overrides, validate_tree
from .errors import ConfigError
from .geometry import ImplicitSurface, builtin_surface
from .models import SolverConfig

logger = logging.getLogger(__name__)

# Ridge: L = 595 m, H = 600 m, crest at x = 0
AGNESI_LENGTH = 595.0
AGNESI_HEIGHT = 600.0
AGNESI_CELLS = (120, 1, 172)

HEMISPHERE_EDGE = 10.0
HEMISPHERE_RADIUS = 0.5
HEMISPHERE_CELLS = 256
HEMISPHERE_U_INF = 10.0

# Square cylinder, lengths in units of the cylinder width
CYLINDER_WIDTH = 1.0
CYLINDER_LENGTH = 25.5
CYLINDER_SPAN = 15.3
CYLINDER_INLET_DISTANCE = 6.1
CYLINDER_REYNOLDS = 250.0
CYLINDER_ASPECT_RATIOS = (3, 4, 5)

# Reference Strouhal numbers per aspect ratio for the extended-run harness
CYLINDER_STROUHAL = {3: 0.119, 4: 0.122, 5: 0.125}


def cylinder_height(aspect: int) -> float:
    """Domain height; taller for the tallest cylinder"""
    return 12.7 if aspect >= 5 else 10.2


def agnesi_tree() -> Dict[str, Any]:
    half = 0.5 * AGNESI_LENGTH
    return {
        "model": "compressible",
        "forcing": (0.005, 0.0, 0.0),
        "grid": {
            "n": AGNESI_CELLS,
            "extent": (AGNESI_LENGTH, AGNESI_LENGTH / AGNESI_CELLS[0], AGNESI_HEIGHT),
            "origin": (-half, 0.0, 0.0),
        },
        "surface": {"name": "agnesi_ridge", "peak_height": 100.0, "half_width": 100.0},
        "boundaries": {
            "xlo": "periodic", "xhi": "periodic",
            "ylo": "periodic", "yhi": "periodic",
            "zlo": "slip_wall", "zhi": "slip_wall",
            "eb_wall": "no_slip",
        },
        "constants": {"mu": 60.0, "g": 9.81},
        "damping": {"rayleigh_thickness": 50.0, "rayleigh_coefficient": 0.25, "nondimensional": True},
        "step": {"cfl": 0.5, "end_time": 4.0 * 3600.0},
        "initial": {"velocity": (0.0, 0.0, 0.0), "theta": 300.0},
        "case": {"name": "agnesi", "length_scale": 100.0, "velocity_scale": 1.0},
        "probes": [
            {"name": f"u_z{int(z)}", "variable": "u", "location": (0.0, 0.5 * AGNESI_LENGTH / AGNESI_CELLS[0], z)}
            for z in (110.0, 300.0, 500.0)
        ],
        "lines": [
            {"name": f"u_profile_{tag}", "variable": "u", "axis": 2,
             "point": (x, 0.5 * AGNESI_LENGTH / AGNESI_CELLS[0], 0.0)}
            for tag, x in (("quarter", -0.25 * AGNESI_LENGTH), ("crest", 0.0),
                           ("three_quarter", 0.25 * AGNESI_LENGTH))
        ],
    }


def hemisphere_tree() -> Dict[str, Any]:
    center = (0.5 * HEMISPHERE_EDGE, 0.5 * HEMISPHERE_EDGE, 0.0)
    n = HEMISPHERE_CELLS
    theta = 300.0
    # zero gravity: uniform background density at P00
    rho = 1.0e5 / (287.0 * theta)
    return {
        "model": "compressible",
        "grid": {"n": (n, n, n), "extent": (HEMISPHERE_EDGE,) * 3},
        "surface": {"name": "hemisphere", "center": center, "radius": HEMISPHERE_RADIUS},
        "boundaries": {
            "xlo": "inflow", "xhi": "outflow",
            "ylo": "periodic", "yhi": "periodic",
            "zlo": "slip_wall", "zhi": "slip_wall",
            "eb_wall": "free_slip",
            "inflow": {"velocity": (HEMISPHERE_U_INF, 0.0, 0.0), "theta": theta, "rho": rho},
        },
        "constants": {"mu": 1.0, "g": 0.0},
        "viscosity_mask": {"center": center, "inner_radius": 2.0 * HEMISPHERE_RADIUS,
                           "ramp": 0.5 * HEMISPHERE_RADIUS},
        "damping": {
            "sponge_sides": ["xhi", "ylo", "yhi", "zhi"],
            "sponge_thickness": 2.0,
            "sponge_strength": 0.1,
            "reference_velocity": (HEMISPHERE_U_INF, 0.0, 0.0),
        },
        "step": {"cfl": 0.5, "end_time": 3.0 * HEMISPHERE_EDGE / HEMISPHERE_U_INF},
        "initial": {"velocity": (HEMISPHERE_U_INF, 0.0, 0.0), "theta": theta},
        "case": {
            "name": "hemisphere",
            "length_scale": 2.0 * HEMISPHERE_RADIUS,
            "velocity_scale": HEMISPHERE_U_INF,
            "obstacle_center": center,
            "obstacle_radius": HEMISPHERE_RADIUS,
        },
        "lines": [
            {"name": "u_along_z_x5", "variable": "u", "axis": 2, "point": (5.0, 5.0, 0.0)},
            {"name": "u_along_z_x6", "variable": "u", "axis": 2, "point": (6.0, 5.0, 0.0)},
            {"name": "u_along_y", "variable": "u", "axis": 1, "point": (6.0, 5.0, 0.5)},
            {"name": "v_along_y", "variable": "v", "axis": 1, "point": (6.0, 5.0, 0.5)},
        ],
    }


def square_cylinder_tree(aspect: int = 3) -> Dict[str, Any]:
    if aspect not in CYLINDER_ASPECT_RATIOS:
        raise ConfigError(f"square cylinder aspect ratio must be one of {CYLINDER_ASPECT_RATIOS}, got {aspect}")
    d = CYLINDER_WIDTH
    height = cylinder_height(aspect)
    nz = 41 if aspect < 5 else 51
    u_inf = 1.0
    # theta0 = P00 / R gives rho0 = 1 at the reference pressure
    theta = 1.0e5 / 287.0
    return {
        "model": "anelastic",
        "grid": {
            "n": (102, 61, nz),
            "extent": (CYLINDER_LENGTH * d, CYLINDER_SPAN * d, height),
            "origin": (-CYLINDER_INLET_DISTANCE * d, -0.5 * CYLINDER_SPAN * d, 0.0),
        },
        "surface": {"name": "box", "center": (0.0, 0.0, 0.5 * aspect * d), "width": d, "height": aspect * d},
        "boundaries": {
            "xlo": "inflow", "xhi": "outflow",
            "ylo": "slip_wall", "yhi": "slip_wall",
            "zlo": "no_slip_wall", "zhi": "slip_wall",
            "eb_wall": "no_slip",
            "inflow": {"velocity": (u_inf, 0.0, 0.0), "theta": theta, "rho": 1.0},
        },
        "constants": {"mu": u_inf * d / CYLINDER_REYNOLDS, "g": 0.0},
        "step": {"cfl": 0.5},
        "initial": {"velocity": (u_inf, 0.0, 0.0), "theta": theta},
        "case": {"name": f"squareCylinder({aspect})", "length_scale": d, "velocity_scale": u_inf,
                 "spinup_time": 100.0},
        "probes": [{"name": "v_wake", "variable": "v", "location": (17.0, 0.0, 2.0)}],
        "lines": [
            {"name": "u_centerline", "variable": "u", "axis": 0, "point": (0.0, 0.0, 0.5 * aspect * d),
             "time_average": True},
        ],
    }


PRESETS: Dict[str, Callable[..., Dict[str, Any]]] = {
    "agnesi": agnesi_tree,
    "hemisphere": hemisphere_tree,
    "squarecylinder": square_cylinder_tree,
}

_NAME = re.compile(r"^\s*([A-Za-z_]+)\s*(?:\(\s*(\d+)\s*\))?\s*$")


def parse_preset_name(name: str) -> Tuple[str, Optional[int]]:
    """'squareCylinder(4)' -> ('squarecylinder', 4)"""
    match = _NAME.match(name)
    if not match:
        raise ConfigError(f"malformed preset name '{name}'")
    key = match.group(1).lower()
    if key not in PRESETS:
        raise ConfigError(f"unknown preset '{name}'; available: agnesi, hemisphere, squareCylinder(h)")
    param = int(match.group(2)) if match.group(2) else None
    if param is not None and key != "squarecylinder":
        raise ConfigError(f"preset '{key}' takes no parameter")
    return key, param


def preset_tree(name: str) -> Dict[str, Any]:
    key, param = parse_preset_name(name)
    if param is None:
        return PRESETS[key]()
    return PRESETS[key](param)


def preset(name: str, overrides: Iterable[str] = ()) -> SolverConfig:
    """Validated config of a named case with dotted key=value overrides applied"""
    tree = apply_overrides(preset_tree(name), overrides)
    config = validate_tree(tree)
    logger.info(f"Preset {config.case.name}: grid {config.grid.n}, model {config.model.value}")
    return config


def make_surface(config: SolverConfig) -> ImplicitSurface:
    return builtin_surface(config.surface)
