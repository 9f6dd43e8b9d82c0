"""
Diagnostics: probes, exact solutions, spectra and error norms
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.signal import periodogram

from .errors import DiagnosticsError
from .fields import StaggeredState
from .geometry import GeometrySet, interior_slices, shift_up
from .models import ErrorReport, FluidConstants, GridVariant, LineSpec, Vector
from .physics import primitives

logger = logging.getLogger(__name__)

# Probe variables and the grid variant each one lives on
VARIABLES = {
    "rho": GridVariant.CELL,
    "rho_theta": GridVariant.CELL,
    "theta": GridVariant.CELL,
    "p": GridVariant.CELL,
    "p_pert": GridVariant.CELL,
    "u": GridVariant.XFACE,
    "v": GridVariant.YFACE,
    "w": GridVariant.ZFACE,
    "mom_x": GridVariant.XFACE,
    "mom_y": GridVariant.YFACE,
    "mom_z": GridVariant.ZFACE,
}


def variable_field(state: StaggeredState, geoms: Optional[GeometrySet], constants: FluidConstants,
                   name: str) -> Tuple[GridVariant, np.ndarray]:
    if name not in VARIABLES:
        raise DiagnosticsError(f"unknown variable '{name}'; expected one of {sorted(VARIABLES)}")
    variant = VARIABLES[name]
    if name in ("rho", "rho_theta"):
        return variant, getattr(state, name)
    if name.startswith("mom_"):
        return variant, state.mom["xyz".index(name[-1])]
    prim = primitives(state, geoms, constants)
    if name in ("u", "v", "w"):
        return variant, prim.velocity["uvw".index(name)]
    return variant, getattr(prim, name)


def _interpolator(state: StaggeredState, variant: GridVariant, values: np.ndarray) -> RegularGridInterpolator:
    coords = state.grid.cv_centers(variant)
    # single-cell axes carry no variation
    points = [c if len(c) > 1 else np.array([c[0] - 1.0, c[0] + 1.0]) for c in coords]
    data = values
    for a, c in enumerate(coords):
        if len(c) == 1:
            data = np.repeat(data, 2, axis=a)
    return RegularGridInterpolator(points, data, bounds_error=False, fill_value=None)


def sample_points(state: StaggeredState, geoms: Optional[GeometrySet], constants: FluidConstants,
                  name: str, points: np.ndarray) -> np.ndarray:
    """Trilinear interpolation of a variable at physical points (..., 3)"""
    variant, values = variable_field(state, geoms, constants, name)
    return _interpolator(state, variant, values)(np.asarray(points, dtype=float))


@dataclass
class ProbeSeries:
    """Time series of one variable at a fixed location"""

    name: str
    variable: str
    location: Vector
    times: List[float] = field(default_factory=list)
    values: List[float] = field(default_factory=list)

    def append(self, t: float, value: float) -> None:
        if self.times and t <= self.times[-1]:
            raise DiagnosticsError(f"probe {self.name}: time {t} does not increase past {self.times[-1]}")
        self.times.append(float(t))
        self.values.append(float(value))

    def record(self, state: StaggeredState, geoms: Optional[GeometrySet], constants: FluidConstants) -> float:
        value = float(sample_points(state, geoms, constants, self.variable, np.asarray(self.location)))
        self.append(state.time, value)
        return value

    def arrays(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.asarray(self.times), np.asarray(self.values)

    def write_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        t, v = self.arrays()
        np.savetxt(path, np.column_stack([t, v]).reshape(-1, 2), delimiter=",", fmt="%.12e",
                   header=f"t,{self.variable}", comments="")
        return path


# Exact potential flow past a hemisphere
def exact_hemisphere_velocity(r, theta, a: float, u_inf: float) -> Tuple[np.ndarray, np.ndarray]:
    """Radial and polar velocity of potential flow past a sphere of radius a"""
    r = np.asarray(r, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if np.any(r < a):
        raise DiagnosticsError(f"exact solution is defined for r >= a = {a}")
    ratio = a ** 3 / r ** 3
    u_r = -u_inf * (1.0 - ratio) * np.cos(theta)
    u_theta = u_inf * (1.0 + 0.5 * ratio) * np.sin(theta)
    return u_r, u_theta


# polar axis points upstream, so the free stream is +x
_POLAR_AXIS = np.array([-1.0, 0.0, 0.0])


def spherical_coordinates(points: np.ndarray, center: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    """(r, polar angle) about `center` with the polar axis along -x"""
    rel = np.asarray(points, dtype=float) - np.asarray(center, dtype=float)
    r = np.linalg.norm(rel, axis=-1)
    cos = np.clip(np.einsum("...k,k->...", rel, _POLAR_AXIS) / np.where(r > 0.0, r, 1.0), -1.0, 1.0)
    return r, np.arccos(cos)


def spherical_to_cartesian_velocity(u_r, u_theta, points: np.ndarray, center: Sequence[float]) -> np.ndarray:
    """Velocity vectors (..., 3) from (u_r, u_theta); no azimuthal component"""
    rel = np.asarray(points, dtype=float) - np.asarray(center, dtype=float)
    r, theta = spherical_coordinates(points, center)
    e_r = rel / r[..., None]
    sin = np.sin(theta)
    with np.errstate(invalid="ignore", divide="ignore"):
        e_theta = (np.cos(theta)[..., None] * e_r - _POLAR_AXIS) / sin[..., None]
    e_theta = np.where(sin[..., None] > 1e-12, e_theta, 0.0)
    return np.asarray(u_r)[..., None] * e_r + np.asarray(u_theta)[..., None] * e_theta


def hemisphere_velocity_cartesian(points: np.ndarray, center: Sequence[float], a: float, u_inf: float) -> np.ndarray:
    """Exact Cartesian velocity; regular on the polar axis"""
    rel = np.asarray(points, dtype=float) - np.asarray(center, dtype=float)
    r, theta = spherical_coordinates(points, center)
    u_r, _ = exact_hemisphere_velocity(r, theta, a, u_inf)
    e_r = rel / r[..., None]
    # u_theta * e_theta with the sin(theta) factor cancelled
    tangential = u_inf * (1.0 + 0.5 * a ** 3 / r ** 3)
    return u_r[..., None] * e_r + tangential[..., None] * (np.cos(theta)[..., None] * e_r - _POLAR_AXIS)


# Spectra
def dominant_frequency(series: ProbeSeries, spinup: float = 0.0, length_scale: float = 1.0,
                       velocity_scale: float = 1.0, min_samples: int = 64) -> Tuple[float, float]:
    """Frequency of the largest non-DC spectral peak and the Strouhal number f*d/u"""
    t, v = series.arrays()
    if len(t):
        keep = t >= t[0] + spinup
        t, v = t[keep], v[keep]
    if len(t) < min_samples:
        raise DiagnosticsError(f"probe {series.name}: {len(t)} samples after spin-up, need {min_samples}")
    dt = float(np.median(np.diff(t)))
    uniform = t[0] + dt * np.arange(int(np.floor((t[-1] - t[0]) / dt)) + 1)
    values = np.interp(uniform, t, v)
    values = values - values.mean()
    if not np.any(np.abs(values) > 1e-14 * max(1.0, float(np.max(np.abs(v))))):
        raise DiagnosticsError(f"probe {series.name}: series is constant")
    freqs, power = periodogram(values, fs=1.0 / dt, window="hann", detrend=False)
    power[0] = 0.0
    peak = float(freqs[int(np.argmax(power))])
    return peak, peak * length_scale / velocity_scale


# Error norms
def error_norms(numerical: np.ndarray, exact: Union[np.ndarray, Callable[..., np.ndarray]],
                region: np.ndarray, weights: Optional[np.ndarray] = None,
                points: Optional[np.ndarray] = None) -> ErrorReport:
    """Volume-fraction weighted L2 and pointwise Linf of numerical - exact over `region`"""
    region = np.asarray(region, dtype=bool)
    if not np.any(region):
        raise DiagnosticsError("error region is empty")
    reference = exact(points) if callable(exact) else np.asarray(exact, dtype=float)
    diff = (np.asarray(numerical, dtype=float) - reference)[region]
    w = np.ones_like(diff) if weights is None else np.broadcast_to(weights, region.shape)[region]
    total = float(np.sum(w))
    if total <= 0.0:
        raise DiagnosticsError("error region holds no fluid volume")
    l2 = float(np.sqrt(np.sum(w * diff * diff) / total))
    scale = float(np.sqrt(np.sum(w * np.asarray(reference)[region] ** 2) / total))
    return ErrorReport(
        l2=l2,
        linf=float(np.max(np.abs(diff))),
        count=int(diff.size),
        relative_l2=l2 / scale if scale > 0.0 else None,
    )


def sample_line(state: StaggeredState, geoms: GeometrySet, constants: FluidConstants,
                line: LineSpec) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Coordinates, values and volume fractions along an axis-aligned line of control volumes"""
    variant, values = variable_field(state, geoms, constants, line.variable)
    grid = state.grid
    coords = grid.cv_centers(variant)
    region = interior_slices(grid, variant, boundary_faces=True)
    index = []
    for a in range(3):
        if a == line.axis:
            index.append(region[a])
        else:
            index.append(int(np.argmin(np.abs(coords[a] - line.point[a]))))
    along = coords[line.axis][region[line.axis]]
    vals = values[tuple(index)]
    alpha = geoms[variant].alpha[tuple(index)]
    keep = np.ones(along.shape, dtype=bool)
    if line.start is not None:
        keep &= along >= line.start
    if line.stop is not None:
        keep &= along <= line.stop
    return along[keep], vals[keep], alpha[keep]


class TimeAverage:
    """Running time-weighted mean of an array"""

    def __init__(self):
        self.total: Optional[np.ndarray] = None
        self.duration = 0.0

    def add(self, values: np.ndarray, dt: float) -> None:
        values = np.asarray(values, dtype=float)
        if self.total is None:
            self.total = np.zeros_like(values)
        self.total += dt * values
        self.duration += dt

    @property
    def mean(self) -> np.ndarray:
        if self.total is None or self.duration <= 0.0:
            raise DiagnosticsError("no samples accumulated")
        return self.total / self.duration


def small_cell_momentum_ratio(state: StaggeredState, geoms: GeometrySet, threshold: float = 0.05) -> float:
    """max |momentum| over cut volumes with alpha < threshold relative to regular volumes"""
    small_max, regular_max = 0.0, 0.0
    for a in range(3):
        geom = geoms.faces[a]
        inside = geom.update_mask()
        mom = np.abs(state.mom[a])
        small = inside & geom.cut & (geom.alpha < threshold)
        regular = inside & geom.regular
        if np.any(small):
            small_max = max(small_max, float(mom[small].max()))
        if np.any(regular):
            regular_max = max(regular_max, float(mom[regular].max()))
    if regular_max == 0.0:
        return float("inf") if small_max > 0.0 else 0.0
    return small_max / regular_max


def eb_divergence(state: StaggeredState, geoms: GeometrySet) -> np.ndarray:
    """alpha * D(rho u) per fluid cell: net beta-weighted face flux per full cell volume"""
    geom = geoms.cell
    out = np.zeros(state.grid.shape)
    for a in range(3):
        bf = geom.beta[a] * state.mom[a]
        out += (shift_up(bf, a) - bf) / state.grid.spacing[a]
    return np.where(geom.update_mask(), out, 0.0)
