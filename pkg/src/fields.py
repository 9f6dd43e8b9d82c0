"""
Staggered field storage, ghost layers, domain boundary conditions and damping layers
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import SolverError
from .geometry import interior_slices
from .models import (
    N_GHOST, SIDE_NAMES, BoundarySpec, BoundaryType, DampingSpec, FlowModel,
    GridSpec, GridVariant, OutputFormat,
)

if TYPE_CHECKING:
    from .geometry import GeometrySet
    from .physics import BackgroundProfile

logger = logging.getLogger(__name__)


@dataclass
class StaggeredState:
    """Prognostic fields on the extended grid.

    rho and rho_theta live at cell centers; mom[a] lives on the low a-faces.
    In the anelastic model rho holds the background density and is not advanced.
    """

    grid: GridSpec
    model: FlowModel
    rho: np.ndarray
    rho_theta: np.ndarray
    mom: List[np.ndarray]
    background: "BackgroundProfile"
    time: float = 0.0
    step: int = 0

    def copy(self) -> "StaggeredState":
        return StaggeredState(
            grid=self.grid,
            model=self.model,
            rho=self.rho.copy(),
            rho_theta=self.rho_theta.copy(),
            mom=[m.copy() for m in self.mom],
            background=self.background,
            time=self.time,
            step=self.step,
        )

    def prognostic(self) -> Dict[str, Tuple[GridVariant, np.ndarray]]:
        """Name -> (variant, array) of the advanced variables"""
        out: Dict[str, Tuple[GridVariant, np.ndarray]] = {}
        if self.model == FlowModel.COMPRESSIBLE:
            out["rho"] = (GridVariant.CELL, self.rho)
        out["rho_theta"] = (GridVariant.CELL, self.rho_theta)
        for a, name in enumerate(("mom_x", "mom_y", "mom_z")):
            out[name] = (GridVariant.face(a), self.mom[a])
        return out

    def reference(self, name: str) -> Union[np.ndarray, float]:
        """Hydrostatic rest value of a prognostic variable, broadcastable to the grid"""
        bg = self.background
        if name == "rho":
            return bg.column(bg.rho0)
        if name == "rho_theta":
            return bg.column(bg.rho0 * bg.theta0)
        return 0.0

    def axpy(self, base: "StaggeredState", rate: Dict[str, np.ndarray], dt: float) -> None:
        """self <- base + dt * rate for every prognostic variable"""
        for name, (_, arr) in self.prognostic().items():
            _, src = base.prognostic()[name]
            np.add(src, dt * rate[name], out=arr)


def _axis_slice(axis: int, s: Union[slice, int]) -> Tuple:
    index: List = [slice(None)] * 3
    index[axis] = s
    return tuple(index)


def fill_axis(f: np.ndarray, axis: int, n: int, low: BoundaryType, high: BoundaryType,
              normal: bool = False, no_slip_odd: bool = False,
              inflow_value: float = 0.0, hold_outflow_face: bool = False) -> None:
    """Fill the ghost layers of one array along one axis in place.

    `normal` marks a face array along its own axis (boundary faces at g and g+n).
    `no_slip_odd` reflects with a sign flip at no-slip walls (tangential momentum).
    `hold_outflow_face` keeps an outflow boundary face as it is and only copies
    it outward; the projection owns that face in the anelastic model.
    """
    g = N_GHOST
    S = lambda s: _axis_slice(axis, s)  # noqa: E731

    if low == BoundaryType.PERIODIC:
        f[S(slice(0, g))] = f[S(slice(n, n + g))]
        f[S(slice(g + n, None))] = f[S(slice(g, 2 * g))]
        return

    if normal:
        # low side
        if low in (BoundaryType.SLIP_WALL, BoundaryType.NO_SLIP_WALL):
            f[S(g)] = 0.0
            for m in range(1, g + 1):
                f[S(g - m)] = -f[S(g + m)]
        elif low == BoundaryType.OUTFLOW:
            source = g if hold_outflow_face else g + 1
            for m in range(0, g + 1):
                f[S(g - m)] = f[S(source)]
        elif low == BoundaryType.INFLOW:
            f[S(slice(0, g + 1))] = inflow_value
        # high side
        top = g + n
        if high in (BoundaryType.SLIP_WALL, BoundaryType.NO_SLIP_WALL):
            f[S(top)] = 0.0
            for m in range(1, g):
                f[S(top + m)] = -f[S(top - m)]
        elif high == BoundaryType.OUTFLOW:
            source = top if hold_outflow_face else top - 1
            for m in range(0, g):
                f[S(top + m)] = f[S(source)]
        elif high == BoundaryType.INFLOW:
            f[S(slice(top, None))] = inflow_value
        return

    def sign(kind: BoundaryType) -> float:
        return -1.0 if (no_slip_odd and kind == BoundaryType.NO_SLIP_WALL) else 1.0

    if low in (BoundaryType.SLIP_WALL, BoundaryType.NO_SLIP_WALL):
        for m in range(g):
            f[S(g - 1 - m)] = sign(low) * f[S(g + m)]
    elif low == BoundaryType.OUTFLOW:
        for m in range(g):
            f[S(g - 1 - m)] = f[S(g)]
    elif low == BoundaryType.INFLOW:
        f[S(slice(0, g))] = inflow_value
    top = g + n
    if high in (BoundaryType.SLIP_WALL, BoundaryType.NO_SLIP_WALL):
        for m in range(g):
            f[S(top + m)] = sign(high) * f[S(top - 1 - m)]
    elif high == BoundaryType.OUTFLOW:
        for m in range(g):
            f[S(top + m)] = f[S(top - 1)]
    elif high == BoundaryType.INFLOW:
        f[S(slice(top, None))] = inflow_value


def fill_ghost(state: StaggeredState, bcs: BoundarySpec) -> StaggeredState:
    """Refresh ghost layers and boundary faces of every prognostic variable in place.

    Axes are filled in x, y, z order over the full extent of the other axes so
    edge and corner ghosts are well defined. Anelastic outflow faces keep the
    value left by the projection.
    """
    grid = state.grid
    if tuple(grid.periodic) != tuple(bcs.periodic):
        raise SolverError(f"periodic flags of grid {grid.periodic} and boundaries {bcs.periodic} disagree")
    inflow = bcs.inflow
    hold = state.model == FlowModel.ANELASTIC
    for axis in range(3):
        low, high = bcs.side(axis, 0), bcs.side(axis, 1)
        n = grid.n[axis]
        if state.model == FlowModel.COMPRESSIBLE:
            fill_axis(state.rho, axis, n, low, high, inflow_value=inflow.rho)
        fill_axis(state.rho_theta, axis, n, low, high, inflow_value=inflow.rho * inflow.theta)
        for c in range(3):
            value = inflow.rho * inflow.velocity[c]
            if c == axis:
                fill_axis(state.mom[c], axis, n, low, high, normal=True, inflow_value=value,
                          hold_outflow_face=hold)
            else:
                fill_axis(state.mom[c], axis, n, low, high, no_slip_odd=True, inflow_value=value)
    return state


def fill_scalar_ghost(f: np.ndarray, grid: GridSpec, bcs: BoundarySpec, dirichlet_outflow: bool = True) -> None:
    """Ghost fill for the projection potential.

    Periodic copy; mirror (zero normal gradient) at walls and inflow; odd
    mirror (zero value on the face) at outflow when `dirichlet_outflow`.
    """
    g = N_GHOST
    for axis in range(3):
        n = grid.n[axis]
        low, high = bcs.side(axis, 0), bcs.side(axis, 1)
        if low == BoundaryType.PERIODIC:
            fill_axis(f, axis, n, low, high)
            continue
        for side, kind in ((0, low), (1, high)):
            sign = -1.0 if (kind == BoundaryType.OUTFLOW and dirichlet_outflow) else 1.0
            for m in range(g):
                if side == 0:
                    f[_axis_slice(axis, g - 1 - m)] = sign * f[_axis_slice(axis, g + m)]
                else:
                    f[_axis_slice(axis, g + n + m)] = sign * f[_axis_slice(axis, g + n - 1 - m)]


# Damping layers
def _ramp(distance: np.ndarray, thickness: float) -> np.ndarray:
    """cos^2 weight: 1 on the boundary, 0 at the layer base and beyond"""
    d = np.clip(distance, 0.0, None)
    w = np.cos(0.5 * np.pi * d / thickness) ** 2
    return np.where(d < thickness, w, 0.0)


def layer_weight(grid: GridSpec, variant: GridVariant, side: str, thickness: float) -> np.ndarray:
    """Ramp weight of a layer at a domain side, broadcastable to the extended shape"""
    index = SIDE_NAMES.index(side)
    axis, high = index // 2, index % 2
    coords = grid.cv_centers(variant)[axis]
    lo = grid.origin[axis]
    hi = lo + grid.lengths[axis]
    distance = (hi - coords) if high else (coords - lo)
    shape = [1, 1, 1]
    shape[axis] = -1
    return _ramp(distance, thickness).reshape(shape)


def apply_damping(state: StaggeredState, damping: DampingSpec, dt: float,
                  geoms: Optional["GeometrySet"] = None) -> StaggeredState:
    """Relax prognostic deviations from the reference state inside the damping layers.

    Momentum and density relax toward the background; rho_theta follows the
    relaxed potential temperature at the layer's density.
    """
    if not damping.active:
        return state
    grid = state.grid
    bg = state.background
    scale = 1.0 if damping.nondimensional else dt

    def factor(variant: GridVariant, sides: Sequence[str], thickness: float, coefficient: float) -> np.ndarray:
        w = np.zeros((1, 1, 1))
        for side in sides:
            w = np.maximum(w, layer_weight(grid, variant, side, thickness))
        out = np.clip(w * coefficient * scale, 0.0, 1.0)
        out = np.broadcast_to(out, grid.shape)
        if geoms is not None:
            out = np.where(geoms[variant].alpha > 0.0, out, 0.0)
        return out

    rho_ref = bg.column(bg.rho0)
    theta_ref = bg.column(bg.theta0)
    u_ref = damping.reference_velocity

    def mom_ref(a: int) -> np.ndarray:
        rho_face = bg.column(bg.rho0_zface) if a == 2 else rho_ref
        return rho_face * u_ref[a]

    layers = []
    if damping.rayleigh_thickness > 0 and damping.rayleigh_coefficient > 0:
        targets = ["rho_theta", "mom_z"] + (["mom_x", "mom_y"] if damping.damp_horizontal else [])
        layers.append((["zhi"], damping.rayleigh_thickness, damping.rayleigh_coefficient, targets))
    if damping.sponge_sides and damping.sponge_thickness > 0 and damping.sponge_strength > 0:
        targets = ["rho", "rho_theta", "mom_x", "mom_y", "mom_z"]
        layers.append((damping.sponge_sides, damping.sponge_thickness, damping.sponge_strength, targets))

    fields = state.prognostic()
    for sides, thickness, coefficient, targets in layers:
        theta = state.rho_theta / state.rho
        for name in targets:
            if name not in fields:
                continue
            variant, arr = fields[name]
            k = factor(variant, sides, thickness, coefficient)
            if name == "rho_theta":
                # theta is relaxed and recombined with the layer's density
                arr[...] = np.where(k > 0.0, state.rho * (theta - k * (theta - theta_ref)), arr)
                continue
            ref = rho_ref if name == "rho" else mom_ref(variant.axis)
            arr -= k * (arr - ref)
    return state


# Field output
def _variant_points(grid: GridSpec, variant: GridVariant) -> Tuple[Tuple[slice, ...], List[np.ndarray]]:
    sl = interior_slices(grid, variant, boundary_faces=True)
    coords = [grid.cv_centers(variant)[a][sl[a]] for a in range(3)]
    return sl, coords


def write_vtk(stem: Union[str, Path], grid: GridSpec,
              arrays: Dict[str, Tuple[GridVariant, np.ndarray]]) -> List[Path]:
    """Legacy-VTK structured points, one file per grid variant"""
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    by_variant: Dict[GridVariant, List[Tuple[str, np.ndarray]]] = {}
    for name, (variant, arr) in arrays.items():
        by_variant.setdefault(variant, []).append((name, arr))
    written = []
    for variant, items in by_variant.items():
        sl, coords = _variant_points(grid, variant)
        dims = [len(c) for c in coords]
        path = stem.parent / f"{stem.name}_{variant.value}.vtk"
        with open(path, "w", encoding="ascii") as handle:
            handle.write("# vtk DataFile Version 3.0\n")
            handle.write(f"{variant.value} fields\nASCII\nDATASET STRUCTURED_POINTS\n")
            handle.write(f"DIMENSIONS {dims[0]} {dims[1]} {dims[2]}\n")
            handle.write(f"ORIGIN {coords[0][0]!r} {coords[1][0]!r} {coords[2][0]!r}\n")
            handle.write(f"SPACING {grid.dx!r} {grid.dy!r} {grid.dz!r}\n")
            handle.write(f"POINT_DATA {int(np.prod(dims))}\n")
            for name, arr in items:
                handle.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                values = np.asarray(arr[sl], dtype=float).ravel(order="F")
                np.savetxt(handle, values, fmt="%.10e")
        written.append(path)
    return written


def write_csv(stem: Union[str, Path], grid: GridSpec,
              arrays: Dict[str, Tuple[GridVariant, np.ndarray]]) -> List[Path]:
    """Flat CSV (index, coordinates, value), one file per variable"""
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    written = []
    for name, (variant, arr) in arrays.items():
        sl, coords = _variant_points(grid, variant)
        idx = np.meshgrid(*[np.arange(s.start, s.stop) - N_GHOST for s in sl], indexing="ij")
        pos = np.meshgrid(*coords, indexing="ij")
        table = np.column_stack([*(i.ravel() for i in idx), *(p.ravel() for p in pos), arr[sl].ravel()])
        path = stem.parent / f"{stem.name}_{name}.csv"
        np.savetxt(path, table, delimiter=",", fmt=["%d"] * 3 + ["%.10e"] * 4,
                   header=f"i,j,k,x,y,z,{name}", comments="")
        written.append(path)
    return written


def dump_fields(stem: Union[str, Path], grid: GridSpec, arrays: Dict[str, Tuple[GridVariant, np.ndarray]],
                fmt: OutputFormat = OutputFormat.VTK) -> List[Path]:
    if fmt == OutputFormat.CSV:
        return write_csv(stem, grid, arrays)
    return write_vtk(stem, grid, arrays)
