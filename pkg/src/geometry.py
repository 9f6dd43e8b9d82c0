"""
Cut-cell geometry for the cell-centered grid and the three face-staggered grids.

Node values of the implicit surface are sampled on the extended grid (ghost
layers included, periodic axes wrapped so ghosts are exact images). Each cut
cell is clipped by the piecewise-linear zero level set into a closed triangle
soup; volumes, centroids and face data follow from the divergence theorem.
The soup is then split by the three mid-planes to obtain half-cells, which are
paired across faces to build the staggered control volumes.

Conventions: phi > 0 is fluid. The EB normal points from the fluid into the
solid. Face arrays store the LOW face of each control volume.
"""

import logging
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .config import get_settings
from .errors import GeometryError, UnsupportedTopologyError
from .models import N_GHOST, GridSpec, GridVariant, SurfaceKind, SurfaceSpec

logger = logging.getLogger(__name__)


class CellClass(IntEnum):
    COVERED = 0
    REGULAR = 1
    CUT = 2


# Implicit surfaces
class ImplicitSurface:
    """Signed function of position, positive in the fluid"""

    def __call__(self, x: np.ndarray, y: np.ndarray, z: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class FunctionSurface(ImplicitSurface):
    def __init__(self, func: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]):
        self.func = func

    def __call__(self, x, y, z):
        return self.func(x, y, z)


class NoSurface(ImplicitSurface):
    def __call__(self, x, y, z):
        return np.ones(np.broadcast(x, y, z).shape)


class PlaneSurface(ImplicitSurface):
    """Fluid on the side the normal points to"""

    def __init__(self, normal: Sequence[float], point: Sequence[float]):
        normal = np.asarray(normal, dtype=float)
        length = np.linalg.norm(normal)
        if length == 0.0:
            raise GeometryError("plane normal must be non-zero")
        self.normal = normal / length
        self.point = np.asarray(point, dtype=float)

    def __call__(self, x, y, z):
        n, p = self.normal, self.point
        return n[0] * (x - p[0]) + n[1] * (y - p[1]) + n[2] * (z - p[2])


class SphereSurface(ImplicitSurface):
    """Solid ball; a hemisphere is a ball centered on a domain wall"""

    def __init__(self, center: Sequence[float], radius: float):
        if radius <= 0:
            raise GeometryError(f"radius must be positive, got {radius}")
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)

    def __call__(self, x, y, z):
        c = self.center
        return np.sqrt((x - c[0]) ** 2 + (y - c[1]) ** 2 + (z - c[2]) ** 2) - self.radius


class BoxSurface(ImplicitSurface):
    """Solid box with square cross-section `width` and vertical extent `height`"""

    def __init__(self, center: Sequence[float], width: float, height: float):
        if width <= 0 or height <= 0:
            raise GeometryError(f"box width and height must be positive, got {width}, {height}")
        self.center = np.asarray(center, dtype=float)
        self.half = np.array([0.5 * width, 0.5 * width, 0.5 * height])

    def __call__(self, x, y, z):
        c, h = self.center, self.half
        return np.maximum(
            np.maximum(np.abs(x - c[0]) - h[0], np.abs(y - c[1]) - h[1]),
            np.abs(z - c[2]) - h[2],
        )


class AgnesiRidge(ImplicitSurface):
    """Terrain height h_p / (1 + ((x - x0) / a)^2), fluid above"""

    def __init__(self, peak_height: float, half_width: float, x0: float = 0.0):
        if peak_height <= 0 or half_width <= 0:
            raise GeometryError("ridge peak height and half width must be positive")
        self.peak_height = float(peak_height)
        self.half_width = float(half_width)
        self.x0 = float(x0)

    def height(self, x: np.ndarray) -> np.ndarray:
        return self.peak_height / (1.0 + ((x - self.x0) / self.half_width) ** 2)

    def __call__(self, x, y, z):
        return z - self.height(x)


def builtin_surface(spec: SurfaceSpec) -> ImplicitSurface:
    """Build one of the named case surfaces"""

    def need(field: str):
        value = getattr(spec, field)
        if value is None:
            raise GeometryError(f"surface '{spec.name.value}' requires '{field}'")
        return value

    if spec.name == SurfaceKind.NONE:
        return NoSurface()
    if spec.name == SurfaceKind.PLANE:
        return PlaneSurface(need("normal"), need("point"))
    if spec.name in (SurfaceKind.SPHERE, SurfaceKind.HEMISPHERE):
        return SphereSurface(need("center"), need("radius"))
    if spec.name == SurfaceKind.BOX:
        return BoxSurface(need("center"), need("width"), need("height"))
    if spec.name == SurfaceKind.AGNESI_RIDGE:
        return AgnesiRidge(need("peak_height"), need("half_width"), spec.x0)
    raise GeometryError(f"unknown surface '{spec.name}'")


# Index helpers
def interior_slices(grid: GridSpec, variant: GridVariant, boundary_faces: bool = False) -> Tuple[slice, ...]:
    """Slices selecting the control volumes owned by the domain.

    On a non-periodic axis the face variant has n+1 faces; the two boundary
    faces are excluded unless `boundary_faces` is set.
    """
    g = N_GHOST
    slices = []
    for a in range(3):
        n = grid.n[a]
        if variant.axis == a and not grid.periodic[a]:
            slices.append(slice(g, g + n + 1) if boundary_faces else slice(g + 1, g + n))
        else:
            slices.append(slice(g, g + n))
    return tuple(slices)


def interior_mask(grid: GridSpec, variant: GridVariant, boundary_faces: bool = False) -> np.ndarray:
    mask = np.zeros(grid.shape, dtype=bool)
    mask[interior_slices(grid, variant, boundary_faces)] = True
    return mask


def shift_down(a: np.ndarray, axis: int) -> np.ndarray:
    """out[i] = a[i-1] along `axis`; the first layer repeats itself"""
    out = np.empty_like(a)
    src = [slice(None)] * a.ndim
    dst = [slice(None)] * a.ndim
    dst[axis] = slice(1, None)
    src[axis] = slice(None, -1)
    out[tuple(dst)] = a[tuple(src)]
    dst[axis] = slice(0, 1)
    out[tuple(dst)] = a[tuple(dst)]
    return out


def shift_up(a: np.ndarray, axis: int) -> np.ndarray:
    """out[i] = a[i+1] along `axis`; the last layer repeats itself"""
    out = np.empty_like(a)
    src = [slice(None)] * a.ndim
    dst = [slice(None)] * a.ndim
    dst[axis] = slice(None, -1)
    src[axis] = slice(1, None)
    out[tuple(dst)] = a[tuple(src)]
    dst[axis] = slice(-1, None)
    out[tuple(dst)] = a[tuple(dst)]
    return out


def in_plane_axes(axis: int) -> Tuple[int, int]:
    return tuple(b for b in range(3) if b != axis)


# Node sampling and classification
def node_coordinates(grid: GridSpec, axis: int) -> np.ndarray:
    idx = np.arange(grid.shape[axis] + 1) - N_GHOST
    if grid.periodic[axis]:
        idx = np.mod(idx, grid.n[axis])
    return grid.origin[axis] + idx * grid.spacing[axis]


def classify_cells(surface: ImplicitSurface, grid: GridSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Sample phi at the extended nodes and classify every extended cell"""
    xn, yn, zn = (node_coordinates(grid, a) for a in range(3))
    X, Y, Z = np.meshgrid(xn, yn, zn, indexing="ij")
    phi = np.broadcast_to(np.asarray(surface(X, Y, Z), dtype=float), X.shape).copy()
    if not np.all(np.isfinite(phi)):
        bad = np.argwhere(~np.isfinite(phi))[0]
        raise GeometryError(f"surface is not finite at node {tuple(int(i) for i in bad)}")

    eps = get_settings().NODE_TIE_EPS * min(grid.spacing)
    phi[phi == 0.0] = -eps

    fluid = (phi > 0.0).astype(np.int8)
    count = np.zeros(grid.shape, dtype=np.int8)
    for a in (0, 1):
        for b in (0, 1):
            for c in (0, 1):
                count += fluid[a:a + grid.shape[0], b:b + grid.shape[1], c:c + grid.shape[2]]
    cls = np.full(grid.shape, CellClass.CUT, dtype=np.int8)
    cls[count == 8] = CellClass.REGULAR
    cls[count == 0] = CellClass.COVERED
    return phi, cls


# Cut-cell clipping
# Corner n of a cell sits at ((n & 1), (n >> 1) & 1, (n >> 2) & 1)
_CORNERS = np.array([[n & 1, (n >> 1) & 1, (n >> 2) & 1] for n in range(8)], dtype=float)
# Face tag 2*axis + side, corners ordered counter-clockwise seen from outside
_FACE_NODES = {
    0: (0, 4, 6, 2),
    1: (1, 3, 7, 5),
    2: (0, 1, 5, 4),
    3: (2, 6, 7, 3),
    4: (0, 2, 3, 1),
    5: (4, 5, 7, 6),
}
_EB_TAG = 6
_EDGES = [(n, n ^ bit) for n in range(8) for bit in (1, 2, 4) if n < n ^ bit]


def _connected(nodes: List[int]) -> bool:
    if not nodes:
        return False
    members = set(nodes)
    seen = {nodes[0]}
    stack = [nodes[0]]
    while stack:
        n = stack.pop()
        for bit in (1, 2, 4):
            m = n ^ bit
            if m in members and m not in seen:
                seen.add(m)
                stack.append(m)
    return len(seen) == len(members)


@dataclass
class _Soup:
    """Closed, outward-oriented triangle surface of a clipped cell"""

    tris: np.ndarray  # (T, 3, 3)
    tags: np.ndarray  # (T,)


def clip_cell(phi8: np.ndarray, spacing: Sequence[float], index=(0, 0, 0)) -> _Soup:
    """Clip one cell (8 corner values) into its fluid polyhedron.

    Coordinates are local to the cell's low corner, in physical units.
    """
    fluid = phi8 > 0.0
    wet = [n for n in range(8) if fluid[n]]
    dry = [n for n in range(8) if not fluid[n]]
    if not _connected(wet) or not _connected(dry):
        raise UnsupportedTopologyError(index)

    corners = _CORNERS * np.asarray(spacing, dtype=float)
    crossings: Dict[Tuple[int, int], np.ndarray] = {}

    def crossing(n0: int, n1: int) -> Tuple[int, int]:
        key = (min(n0, n1), max(n0, n1))
        if key not in crossings:
            lo, hi = key
            t = phi8[lo] / (phi8[lo] - phi8[hi])
            crossings[key] = corners[lo] + t * (corners[hi] - corners[lo])
        return key

    tris: List[np.ndarray] = []
    tags: List[int] = []
    successor: Dict[Tuple[int, int], Tuple[int, int]] = {}

    for tag, ring in _FACE_NODES.items():
        poly: List[Tuple[str, object]] = []
        for m in range(4):
            n0, n1 = ring[m], ring[(m + 1) % 4]
            if fluid[n0]:
                poly.append(("n", n0))
            if fluid[n0] != fluid[n1]:
                poly.append(("e", crossing(n0, n1)))
        if len(poly) < 3:
            continue
        for m in range(len(poly)):
            here, there = poly[m], poly[(m + 1) % len(poly)]
            if here[0] == "e" and there[0] == "e":
                # the EB runs opposite to the face boundary
                successor[there[1]] = here[1]
        pts = [corners[v] if kind == "n" else crossings[v] for kind, v in poly]
        for m in range(1, len(pts) - 1):
            tris.append(np.array([pts[0], pts[m], pts[m + 1]]))
            tags.append(tag)

    if successor:
        start = next(iter(successor))
        loop = [start]
        node = successor[start]
        while node != start:
            if node not in successor or len(loop) > len(successor):
                raise UnsupportedTopologyError(index, "open or multiple boundary loops")
            loop.append(node)
            node = successor[node]
        if len(loop) != len(successor):
            raise UnsupportedTopologyError(index, "multiple boundary loops")
        pts = [crossings[key] for key in loop]
        center = np.mean(pts, axis=0)
        for m in range(len(pts)):
            tris.append(np.array([center, pts[m], pts[(m + 1) % len(pts)]]))
            tags.append(_EB_TAG)

    return _Soup(np.array(tris).reshape(-1, 3, 3), np.array(tags, dtype=np.int8))


def _triangle_terms(tris: np.ndarray):
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    avec = 0.5 * np.cross(b - a, c - a)
    cen = (a + b + c) / 3.0
    # integral of x_i^2 over the triangle divided by its area
    sq = (a * a + b * b + c * c + a * b + b * c + c * a) / 6.0
    return avec, cen, sq


def _clip_polygon(pts: List[np.ndarray], axis: int, value: float, keep_low: bool) -> List[np.ndarray]:
    out: List[np.ndarray] = []
    sign = 1.0 if keep_low else -1.0
    s = [sign * (p[axis] - value) for p in pts]
    for m in range(len(pts)):
        p, q = pts[m], pts[(m + 1) % len(pts)]
        sp, sq = s[m], s[(m + 1) % len(pts)]
        if sp <= 0.0:
            out.append(p)
        if (sp < 0.0 < sq) or (sq < 0.0 < sp):
            x = p + (sp / (sp - sq)) * (q - p)
            x[axis] = value
            out.append(x)
    return out


def split_soup(soup: _Soup, axis: int, value: float, keep_low: bool) -> _Soup:
    """Keep the part of the surface on one side of the plane x_axis = value"""
    tris: List[np.ndarray] = []
    tags: List[int] = []
    for tri, tag in zip(soup.tris, soup.tags):
        s = tri[:, axis] - value
        if np.all(s == 0.0):
            # triangle lying in the plane joins the half its outward normal faces away from
            normal = np.cross(tri[1] - tri[0], tri[2] - tri[0])[axis]
            if (normal > 0.0) == keep_low:
                tris.append(tri)
                tags.append(tag)
            continue
        if (keep_low and np.all(s <= 0.0)) or (not keep_low and np.all(s >= 0.0)):
            tris.append(tri)
            tags.append(tag)
            continue
        if (keep_low and np.all(s >= 0.0)) or (not keep_low and np.all(s <= 0.0)):
            continue
        poly = _clip_polygon([p.copy() for p in tri], axis, value, keep_low)
        for m in range(1, len(poly) - 1):
            tris.append(np.array([poly[0], poly[m], poly[m + 1]]))
            tags.append(tag)
    return _Soup(np.array(tris).reshape(-1, 3, 3), np.array(tags, dtype=np.int8))


@dataclass
class HalfCell:
    """Moments of a (half) cell in the cell's local frame"""

    vol: float
    mom: np.ndarray  # first volume moments (3,)
    eb_vec: np.ndarray  # EB vector area (3,)
    eb_area: float  # EB scalar area
    eb_mom: np.ndarray  # area-weighted EB position (3,)
    face_area: np.ndarray  # (6,) per face tag
    face_mom: np.ndarray  # (6, 3)
    cap_area: float  # fluid area of the cutting mid-plane
    cap_mom: np.ndarray  # (3,)

    def shifted(self, offset: np.ndarray) -> "HalfCell":
        """Same moments expressed in a frame whose origin moved by -offset"""
        return HalfCell(
            vol=self.vol,
            mom=self.mom + self.vol * offset,
            eb_vec=self.eb_vec,
            eb_area=self.eb_area,
            eb_mom=self.eb_mom + self.eb_area * offset,
            face_area=self.face_area,
            face_mom=self.face_mom + self.face_area[:, None] * offset,
            cap_area=self.cap_area,
            cap_mom=self.cap_mom + self.cap_area * offset,
        )


def soup_moments(soup: _Soup, axis: Optional[int] = None, value: float = 0.0) -> HalfCell:
    """Moments of a closed region bounded by `soup` plus an optional planar cap"""
    face_area = np.zeros(6)
    face_mom = np.zeros((6, 3))
    if len(soup.tris) == 0:
        return HalfCell(0.0, np.zeros(3), np.zeros(3), 0.0, np.zeros(3), face_area, face_mom, 0.0, np.zeros(3))

    avec, cen, sq = _triangle_terms(soup.tris)
    area = np.linalg.norm(avec, axis=1)

    cap_vec = np.zeros(3)
    cap_area = 0.0
    cap_mom = np.zeros(3)
    if axis is not None:
        # closedness supplies the missing planar cap
        cap_vec = -avec.sum(axis=0)
        cap_area = abs(cap_vec[axis])
        if cap_area > 0.0:
            sign = np.sign(cap_vec[axis])
            for b in in_plane_axes(axis):
                cap_mom[b] = -sign * np.sum(avec[:, axis] * cen[:, b])
            cap_mom[axis] = value * cap_area

    vol = np.sum(cen * avec) / 3.0
    mom = 0.5 * np.sum(avec * sq, axis=0)
    if axis is not None:
        vol += value * cap_vec[axis] / 3.0
        mom[axis] += 0.5 * value * value * cap_vec[axis]

    eb = soup.tags == _EB_TAG
    eb_vec = avec[eb].sum(axis=0)
    eb_area = float(area[eb].sum())
    eb_mom = (area[eb, None] * cen[eb]).sum(axis=0)

    for tag in range(6):
        sel = soup.tags == tag
        if np.any(sel):
            face_area[tag] = area[sel].sum()
            face_mom[tag] = (area[sel, None] * cen[sel]).sum(axis=0)

    return HalfCell(float(vol), mom, eb_vec, eb_area, eb_mom, face_area, face_mom, float(cap_area), cap_mom)


def analytic_half(spacing: Sequence[float], axis: int, side: int, regular: bool) -> HalfCell:
    """Half of a regular (fully fluid) or covered cell"""
    d = np.asarray(spacing, dtype=float)
    face_area = np.zeros(6)
    face_mom = np.zeros((6, 3))
    if not regular:
        return HalfCell(0.0, np.zeros(3), np.zeros(3), 0.0, np.zeros(3), face_area, face_mom, 0.0, np.zeros(3))
    lo = np.zeros(3)
    hi = d.copy()
    if side == 0:
        hi[axis] = 0.5 * d[axis]
    else:
        lo[axis] = 0.5 * d[axis]
    size = hi - lo
    center = 0.5 * (lo + hi)
    vol = float(np.prod(size))
    for b in range(3):
        area = float(np.prod([size[c] for c in range(3) if c != b]))
        for s, coord in ((0, lo[b]), (1, hi[b])):
            if b == axis and s != side:
                continue  # the mid-plane, not a cell face
            tag = 2 * b + s
            face_area[tag] = area
            pos = center.copy()
            pos[b] = coord
            face_mom[tag] = area * pos
    cap_area = float(np.prod([d[c] for c in range(3) if c != axis]))
    cap_pos = 0.5 * d
    return HalfCell(vol, vol * center, np.zeros(3), 0.0, np.zeros(3), face_area, face_mom, cap_area, cap_area * cap_pos)


# Geometry datasets
@dataclass
class EBGeometry:
    """Cut-cell data of one grid variant on the extended grid.

    beta[a] and face_centroid[a] belong to the LOW a-face of each control
    volume. Centroid offsets are in units of the spacing, relative to the
    control-volume (or face) center.
    """

    grid: GridSpec
    variant: GridVariant
    cls: np.ndarray
    alpha: np.ndarray
    beta: Tuple[np.ndarray, np.ndarray, np.ndarray]
    face_centroid: Tuple[np.ndarray, np.ndarray, np.ndarray]
    vol_centroid: np.ndarray
    eb_area: np.ndarray
    eb_normal: np.ndarray
    eb_centroid: np.ndarray

    @property
    def volume(self) -> np.ndarray:
        return self.alpha * self.grid.cell_volume

    @property
    def covered(self) -> np.ndarray:
        return self.cls == CellClass.COVERED

    @property
    def regular(self) -> np.ndarray:
        return self.cls == CellClass.REGULAR

    @property
    def cut(self) -> np.ndarray:
        return self.cls == CellClass.CUT

    def interior(self, boundary_faces: bool = False) -> Tuple[slice, ...]:
        return interior_slices(self.grid, self.variant, boundary_faces)

    def update_mask(self) -> np.ndarray:
        """Control volumes advanced in time: owned by the domain and not covered"""
        mask = interior_mask(self.grid, self.variant)
        return mask & (self.alpha > 0.0)

    def total_fluid_volume(self) -> float:
        return float(np.sum(self.volume[self.interior()]))

    def centroid_offsets_physical(self) -> np.ndarray:
        return self.vol_centroid * np.asarray(self.grid.spacing)

    def closedness_residual(self) -> np.ndarray:
        """Residual vector of the closedness identity per control volume, (..., 3)"""
        d = self.grid.spacing
        res = np.zeros(self.alpha.shape + (3,))
        for a in range(3):
            hi = shift_up(self.beta[a], a)
            res[..., a] = (hi - self.beta[a]) * self.grid.face_area(a)
        res += self.eb_area[..., None] * self.eb_normal
        res[..., :] *= self.cut[..., None]
        last = [slice(None)] * 3
        for a in range(3):
            # the last layer has no high neighbour stored
            last_a = list(last)
            last_a[a] = slice(-1, None)
            res[tuple(last_a)] = 0.0
        return res

    def export(self, path: Union[str, Path]) -> Path:
        """Write the owned control volumes as a self-describing columnar text file"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        sl = self.interior(boundary_faces=True)
        idx = np.stack(np.meshgrid(*[np.arange(s.start, s.stop) for s in sl], indexing="ij"), axis=-1)
        rows = idx.reshape(-1, 3)
        i, j, k = rows[:, 0], rows[:, 1], rows[:, 2]
        cols = [rows - N_GHOST, self.cls[i, j, k][:, None], self.alpha[i, j, k][:, None]]
        for a in range(3):
            hi = [i, j, k]
            hi[a] = np.minimum(hi[a] + 1, self.grid.shape[a] - 1)
            cols.append(self.beta[a][i, j, k][:, None])
            cols.append(self.beta[a][tuple(hi)][:, None])
        cols += [
            self.vol_centroid[i, j, k],
            self.eb_area[i, j, k][:, None],
            self.eb_normal[i, j, k],
            self.eb_centroid[i, j, k],
        ]
        table = np.hstack([np.asarray(c, dtype=float) for c in cols])
        names = (
            "i j k class alpha beta_xlo beta_xhi beta_ylo beta_yhi beta_zlo beta_zhi "
            "vc_x vc_y vc_z eb_area n_x n_y n_z ebc_x ebc_y ebc_z"
        )
        header = (
            f"variant={self.variant.value} n={self.grid.n[0]} {self.grid.n[1]} {self.grid.n[2]} "
            f"spacing={self.grid.dx!r} {self.grid.dy!r} {self.grid.dz!r}\n{names}"
        )
        fmt = ["%d"] * 4 + ["%.17g"] * (table.shape[1] - 4)
        np.savetxt(path, table, fmt=fmt, header=header)
        return path


@dataclass
class HalfCellData:
    """Half-cell moments of every cut cell, for the three axes and both sides"""

    grid: GridSpec
    cls: np.ndarray
    halves: Dict[Tuple[int, int, int], List[List[HalfCell]]]

    def half(self, index: Tuple[int, int, int], axis: int, side: int) -> HalfCell:
        if index in self.halves:
            return self.halves[index][axis][side]
        return analytic_half(self.grid.spacing, axis, side, self.cls[index] == CellClass.REGULAR)


def _empty_geometry(grid: GridSpec, variant: GridVariant) -> EBGeometry:
    shape = grid.shape
    return EBGeometry(
        grid=grid,
        variant=variant,
        cls=np.full(shape, CellClass.COVERED, dtype=np.int8),
        alpha=np.zeros(shape),
        beta=tuple(np.zeros(shape) for _ in range(3)),
        face_centroid=tuple(np.zeros(shape + (2,)) for _ in range(3)),
        vol_centroid=np.zeros(shape + (3,)),
        eb_area=np.zeros(shape),
        eb_normal=np.zeros(shape + (3,)),
        eb_centroid=np.zeros(shape + (3,)),
    )


def _finish(geom: EBGeometry) -> EBGeometry:
    """Snap degenerate volumes and clear faces touching covered volumes"""
    tol = get_settings().SNAP_TOL
    cut = geom.cls == CellClass.CUT
    to_covered = cut & (geom.alpha < tol)
    to_regular = cut & (geom.alpha > 1.0 - tol)
    geom.cls[to_covered] = CellClass.COVERED
    geom.cls[to_regular] = CellClass.REGULAR
    geom.alpha[geom.cls == CellClass.COVERED] = 0.0
    geom.alpha[geom.cls == CellClass.REGULAR] = 1.0
    not_cut = geom.cls != CellClass.CUT
    geom.vol_centroid[not_cut & (geom.cls == CellClass.COVERED)] = 0.0
    geom.eb_area[not_cut] = 0.0
    geom.eb_normal[not_cut] = 0.0
    geom.eb_centroid[not_cut] = 0.0
    covered = geom.cls == CellClass.COVERED
    for a in range(3):
        shut = covered | shift_down(covered, a)
        geom.beta[a][shut] = 0.0
        geom.face_centroid[a][shut] = 0.0
    return geom


def build_cc_geometry(surface: ImplicitSurface, grid: GridSpec) -> Tuple[EBGeometry, HalfCellData]:
    """Cell-centered cut-cell dataset plus the half-cell data of every cut cell"""
    phi, cls = classify_cells(surface, grid)
    geom = _empty_geometry(grid, GridVariant.CELL)
    d = np.asarray(grid.spacing, dtype=float)
    full = grid.cell_volume
    tol = get_settings().SNAP_TOL

    regular = cls == CellClass.REGULAR
    geom.alpha[:] = regular
    for a in range(3):
        geom.beta[a][:] = regular
    geom.cls[:] = cls

    halves: Dict[Tuple[int, int, int], List[List[HalfCell]]] = {}
    for index in map(tuple, np.argwhere(cls == CellClass.CUT)):
        i, j, k = index
        phi8 = np.array([phi[i + (n & 1), j + ((n >> 1) & 1), k + ((n >> 2) & 1)] for n in range(8)])
        soup = clip_cell(phi8, d, index=(i - N_GHOST, j - N_GHOST, k - N_GHOST))
        cell = soup_moments(soup)
        alpha = cell.vol / full
        geom.alpha[index] = alpha
        if alpha < tol:
            continue
        if alpha > 1.0 - tol:
            for a in range(3):
                geom.beta[a][index] = 1.0
            continue

        center = 0.5 * d
        geom.vol_centroid[index] = (cell.mom / cell.vol - center) / d
        for a in range(3):
            b, c = in_plane_axes(a)
            area = cell.face_area[2 * a]
            geom.beta[a][index] = area / grid.face_area(a)
            if area > 0.0:
                pos = cell.face_mom[2 * a] / area
                geom.face_centroid[a][index] = [(pos[b] - center[b]) / d[b], (pos[c] - center[c]) / d[c]]
        # closedness fixes the EB vector area from the face polygons
        face_vec = np.zeros(3)
        for a in range(3):
            face_vec[a] = cell.face_area[2 * a + 1] - cell.face_area[2 * a]
        eb_vec = -face_vec
        eb_area = float(np.linalg.norm(eb_vec))
        geom.eb_area[index] = eb_area
        if eb_area > 0.0:
            geom.eb_normal[index] = eb_vec / eb_area
        if cell.eb_area > 0.0:
            geom.eb_centroid[index] = (cell.eb_mom / cell.eb_area - center) / d

        per_axis: List[List[HalfCell]] = []
        for a in range(3):
            mid = 0.5 * d[a]
            low = soup_moments(split_soup(soup, a, mid, keep_low=True), a, mid)
            high = soup_moments(split_soup(soup, a, mid, keep_low=False), a, mid)
            per_axis.append([low, high])
        halves[index] = per_axis

    _finish(geom)
    # half data only for cells that stayed cut after snapping
    halves = {idx: h for idx, h in halves.items() if geom.cls[idx] == CellClass.CUT}
    logger.info(
        f"cell geometry: {int(np.sum(geom.cut[geom.interior()]))} cut, "
        f"{int(np.sum(geom.covered[geom.interior()]))} covered, "
        f"fluid volume {geom.total_fluid_volume():.6e}"
    )
    return geom, HalfCellData(grid=grid, cls=geom.cls.copy(), halves=halves)


def _combine(geom: EBGeometry, half: HalfCellData, index: Tuple[int, int, int], axis: int) -> None:
    """Staggered control volume `index`: high half of cell index-e_axis plus low half of cell index"""
    grid = geom.grid
    d = np.asarray(grid.spacing, dtype=float)
    left_index = list(index)
    left_index[axis] -= 1
    left_index = tuple(left_index)
    shift = np.zeros(3)
    shift[axis] = -d[axis]
    left = half.half(left_index, axis, 1).shifted(shift)
    right = half.half(index, axis, 0)

    # frame origin: low corner of the right cell, i.e. on the staggered face
    center = 0.5 * d
    center[axis] = 0.0
    vol = left.vol + right.vol
    geom.alpha[index] = vol / grid.cell_volume
    if vol > 0.0:
        geom.vol_centroid[index] = ((left.mom + right.mom) / vol - center) / d
    else:
        geom.vol_centroid[index] = 0.0

    eb_vec = left.eb_vec + right.eb_vec
    eb_scalar = left.eb_area + right.eb_area
    magnitude = float(np.linalg.norm(eb_vec))
    geom.eb_area[index] = magnitude
    if magnitude > 1e-12 * max(eb_scalar, 1e-300):
        geom.eb_normal[index] = eb_vec / magnitude
    elif eb_scalar > 0.0:
        # opposing halves cancel; keep the larger half's direction
        bigger = left if left.eb_area >= right.eb_area else right
        n = float(np.linalg.norm(bigger.eb_vec))
        geom.eb_normal[index] = bigger.eb_vec / n if n > 0.0 else 0.0
    else:
        geom.eb_normal[index] = 0.0
    if eb_scalar > 0.0:
        geom.eb_centroid[index] = ((left.eb_mom + right.eb_mom) / eb_scalar - center) / d
    else:
        geom.eb_centroid[index] = 0.0

    # low face along the axis is the mid-plane of the left cell
    b, c = in_plane_axes(axis)
    geom.beta[axis][index] = left.cap_area / grid.face_area(axis)
    if left.cap_area > 0.0:
        pos = left.cap_mom / left.cap_area
        geom.face_centroid[axis][index] = [(pos[b] - center[b]) / d[b], (pos[c] - center[c]) / d[c]]
    else:
        geom.face_centroid[axis][index] = 0.0

    # low faces along the other axes are the two half-faces side by side
    for f in in_plane_axes(axis):
        tag = 2 * f
        area = left.face_area[tag] + right.face_area[tag]
        geom.beta[f][index] = area / grid.face_area(f)
        p, q = in_plane_axes(f)
        if area > 0.0:
            pos = (left.face_mom[tag] + right.face_mom[tag]) / area
            geom.face_centroid[f][index] = [(pos[p] - center[p]) / d[p], (pos[q] - center[q]) / d[q]]
        else:
            geom.face_centroid[f][index] = 0.0

    tol = get_settings().SNAP_TOL
    alpha = geom.alpha[index]
    if alpha < tol:
        geom.cls[index] = CellClass.COVERED
    elif alpha > 1.0 - tol:
        geom.cls[index] = CellClass.REGULAR
    else:
        geom.cls[index] = CellClass.CUT


def build_staggered_geometry(half: HalfCellData, axis: int) -> EBGeometry:
    """Face-staggered dataset along `axis` from the half-cell data"""
    if axis not in (0, 1, 2):
        raise GeometryError(f"axis must be 0, 1 or 2, got {axis}")
    grid = half.grid
    variant = GridVariant.face(axis)
    geom = _empty_geometry(grid, variant)

    f = (half.cls == CellClass.REGULAR).astype(float)
    f_left = shift_down(f, axis)
    geom.alpha[:] = 0.5 * (f + f_left)
    geom.beta[axis][:] = f_left
    for b in in_plane_axes(axis):
        geom.beta[b][:] = 0.5 * (f + f_left)
    both = f + f_left
    with np.errstate(invalid="ignore", divide="ignore"):
        offset = np.where(both > 0.0, 0.25 * (f - f_left) / np.where(both > 0.0, both, 1.0), 0.0)
    geom.vol_centroid[..., axis] = offset
    for b in in_plane_axes(axis):
        slot = in_plane_axes(b).index(axis)
        geom.face_centroid[b][..., slot] = offset
    geom.cls[:] = np.where(
        both == 2.0, CellClass.REGULAR, np.where(both == 0.0, CellClass.COVERED, CellClass.CUT)
    )

    n_ext = grid.shape[axis]
    touched = set()
    for index in half.halves:
        for step in (0, 1):
            target = list(index)
            target[axis] += step
            if target[axis] < 1 or target[axis] >= n_ext:
                continue
            touched.add(tuple(target))
    for index in sorted(touched):
        _combine(geom, half, index, axis)

    _finish(geom)
    logger.info(
        f"{variant.value} geometry: {int(np.sum(geom.cut[geom.interior()]))} cut, "
        f"fluid volume {geom.total_fluid_volume():.6e}"
    )
    return geom


@dataclass
class GeometrySet:
    cell: EBGeometry
    faces: Tuple[EBGeometry, EBGeometry, EBGeometry]
    half: HalfCellData

    def __getitem__(self, variant: GridVariant) -> EBGeometry:
        if variant == GridVariant.CELL:
            return self.cell
        return self.faces[variant.axis]

    @property
    def variants(self) -> List[EBGeometry]:
        return [self.cell, *self.faces]


def build_geometry_set(surface: ImplicitSurface, grid: GridSpec) -> GeometrySet:
    cell, half = build_cc_geometry(surface, grid)
    faces = tuple(build_staggered_geometry(half, a) for a in range(3))
    return GeometrySet(cell=cell, faces=faces, half=half)
