"""
Advective and diffusive fluxes on the four grid variants, cut-face centroid
interpolation, embedded-boundary facet fluxes and the conservative update
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse

from .errors import SolverError
from .fields import StaggeredState
from .geometry import EBGeometry, GeometrySet, in_plane_axes, shift_down, shift_up
from .models import (
    BoundarySpec, EBWallType, FlowModel, FluidConstants, GridSpec, GridVariant, Vector, ViscosityMask,
)
from .physics import Primitives, buoyancy, primitives, stress_tensor, viscosity_field

logger = logging.getLogger(__name__)

MOMENTUM = ("mom_x", "mom_y", "mom_z")


# Interface values
def advect_interface_value(q: np.ndarray, sign: np.ndarray, fallback=False) -> np.ndarray:
    """Third-order upwind value at the interface between q[..., 1] and q[..., 2].

    `q[..., :]` holds (q_{i-2}, q_{i-1}, q_i, q_{i+1}); `sign` is the sign of
    the normal velocity. Where `fallback` is set the centered average of the
    two adjacent values is returned instead.
    """
    q = np.asarray(q, dtype=float)
    qm2, qm1, q0, qp1 = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    s = np.sign(sign)
    third = (7.0 / 12.0) * (q0 + qm1) - (1.0 / 12.0) * (qp1 + qm2) + (s / 12.0) * ((qp1 - qm2) - 3.0 * (q0 - qm1))
    return np.where(fallback, 0.5 * (q0 + qm1), third)


def _stencil(q: np.ndarray, axis: int) -> np.ndarray:
    """(q[i-2], q[i-1], q[i], q[i+1]) stacked on a trailing axis"""
    qm1 = shift_down(q, axis)
    return np.stack([shift_down(qm1, axis), qm1, q, shift_up(q, axis)], axis=-1)


def near_covered(geom: EBGeometry, axis: int) -> np.ndarray:
    """Interfaces whose four-point stencil along `axis` touches a covered control volume"""
    covered = geom.alpha <= 0.0
    return np.any(_stencil(covered.astype(float), axis) > 0.0, axis=-1)


def interface_values(q: np.ndarray, axis: int, sign: np.ndarray, geom: Optional[EBGeometry] = None) -> np.ndarray:
    """Upwind value on the low `axis`-interface of every control volume of q's variant"""
    fallback = near_covered(geom, axis) if geom is not None else False
    return advect_interface_value(_stencil(q, axis), sign, fallback)


# Cut-face centroid interpolation
def interpolate_flux_to_cut_centroid(f0, f1, f2, f12, gamma1, gamma2,
                                     open1=True, open2=True, open12=True):
    """Bilinear interpolation of face-centered fluxes to a cut-face centroid.

    f1 and f2 are the fluxes of the faces next to f0 in the direction of the
    sign of gamma1 and gamma2; f12 is the diagonal one. Terms whose face is
    not open are dropped and the remaining weights renormalized.
    """
    a1 = np.abs(np.asarray(gamma1, dtype=float))
    a2 = np.abs(np.asarray(gamma2, dtype=float))
    w0 = (1.0 - a1) * (1.0 - a2)
    w1 = a1 * (1.0 - a2) * np.asarray(open1, dtype=float)
    w2 = a2 * (1.0 - a1) * np.asarray(open2, dtype=float)
    w12 = a1 * a2 * np.asarray(open12, dtype=float)
    total = w0 + w1 + w2 + w12
    return (w0 * f0 + w1 * f1 + w2 * f2 + w12 * f12) / total


def _toward(a: np.ndarray, axis: int, up: np.ndarray) -> np.ndarray:
    return np.where(up, shift_up(a, axis), shift_down(a, axis))


def correct_cut_faces(flux: np.ndarray, geom: EBGeometry, axis: int) -> np.ndarray:
    """Move provisional fluxes of cut `axis`-faces to the face centroids"""
    beta = geom.beta[axis]
    cut = (beta > 0.0) & (beta < 1.0)
    if not np.any(cut):
        return flux
    b1, b2 = in_plane_axes(axis)
    g1 = geom.face_centroid[axis][..., 0]
    g2 = geom.face_centroid[axis][..., 1]
    up1, up2 = g1 > 0.0, g2 > 0.0

    f1 = _toward(flux, b1, up1)
    f2 = _toward(flux, b2, up2)
    f12 = np.where(up2, shift_up(_toward(flux, b1, up1), b2), shift_down(_toward(flux, b1, up1), b2))
    open1 = _toward(beta, b1, up1) > 0.0
    open2 = _toward(beta, b2, up2) > 0.0
    open12 = np.where(up2, shift_up(_toward(beta, b1, up1), b2), shift_down(_toward(beta, b1, up1), b2)) > 0.0

    out = flux.copy()
    interp = interpolate_flux_to_cut_centroid(flux, f1, f2, f12, g1, g2, open1, open2, open12)
    out[cut] = interp[cut]
    return out


# EB least-squares gradients
def _basis(offsets: np.ndarray, quadratic: bool, constant: bool) -> np.ndarray:
    cols = []
    if constant:
        cols.append(np.ones(len(offsets)))
    cols += [offsets[:, 0], offsets[:, 1], offsets[:, 2]]
    if quadratic:
        x, y, z = offsets[:, 0], offsets[:, 1], offsets[:, 2]
        cols += [x * x, y * y, z * z, x * y, x * z, y * z]
    return np.column_stack(cols)


def gradient_weights(points: np.ndarray, facet: Sequence[float], spacing: Sequence[float],
                     wall: bool) -> Optional[np.ndarray]:
    """Weights W (3, M) with grad q(facet) = W @ (q - q_wall).

    Quadratic fit, then linear, by available rank; None when neither is
    determined. With `wall` the fitted polynomial interpolates the wall value
    at the facet exactly, so there is no constant term.

    Points are weighted by inverse distance in cell units, capped at one cell,
    so a centroid sitting on the facet cannot dominate the fit.
    """
    d = np.asarray(spacing, dtype=float)
    offsets = (np.asarray(points, dtype=float) - np.asarray(facet, dtype=float)) / d
    w = 1.0 / np.maximum(np.sqrt(np.sum(offsets * offsets, axis=1)), 1.0)
    lin = 0 if wall else 1
    for quadratic in (True, False):
        A = _basis(offsets, quadratic, constant=not wall)
        if len(offsets) < A.shape[1]:
            continue
        Aw = A * w[:, None]
        if np.linalg.matrix_rank(Aw) < A.shape[1]:
            continue
        coef = np.linalg.pinv(Aw) * w[None, :]
        return coef[lin:lin + 3] / d[:, None]
    return None


def eb_gradient_least_squares(values: np.ndarray, points: np.ndarray, facet: Sequence[float],
                              wall_value: Optional[float] = None,
                              spacing: Sequence[float] = (1.0, 1.0, 1.0)) -> np.ndarray:
    """Gradient at `facet` of the weighted quadratic least-squares fit of `values`"""
    values = np.asarray(values, dtype=float)
    weights = gradient_weights(points, facet, spacing, wall=wall_value is not None)
    if weights is None:
        logger.debug(f"rank-deficient gradient stencil at {tuple(facet)}; using zero gradient")
        return np.zeros(3)
    shift = 0.0 if wall_value is None else wall_value
    return weights @ (values - shift)


def _offset(variant: GridVariant, axis: int) -> float:
    return -0.5 if variant.axis == axis else 0.0


def _centroids(geom: EBGeometry) -> np.ndarray:
    """Physical control-volume centroids, (..., 3)"""
    grid = geom.grid
    centers = np.stack(np.meshgrid(*grid.cv_centers(geom.variant), indexing="ij"), axis=-1)
    return centers + geom.centroid_offsets_physical()


@dataclass
class EBGradientOperator:
    """Sparse maps from each velocity component to its gradient at the EB facets of one variant"""

    variant: GridVariant
    facets: np.ndarray  # (F, 3) extended indices
    matrices: List[List[sparse.csr_matrix]]  # [component][direction], each (F, N)
    stiffness: np.ndarray = field(default_factory=lambda: np.zeros(0))  # (F,) 1/m^2

    def viscous_rate(self, nu: np.ndarray) -> float:
        """Largest facet diffusion rate for kinematic viscosity `nu` on the extended grid"""
        if len(self.stiffness) == 0:
            return 0.0
        i, j, k = self.facets.T
        return float(np.max(nu[i, j, k] * self.stiffness))

    def gradients(self, velocity: Sequence[np.ndarray]) -> np.ndarray:
        """grad[f, i, j] = d u_i / d x_j at every facet"""
        out = np.zeros((len(self.facets), 3, 3))
        for c in range(3):
            flat = velocity[c].ravel()
            for j in range(3):
                out[:, c, j] = self.matrices[c][j] @ flat
        return out


def build_eb_gradient_operator(geoms: GeometrySet, variant: GridVariant) -> EBGradientOperator:
    """Least-squares gradient operators for the facets of `variant`, with a zero wall value"""
    geom = geoms[variant]
    grid = geom.grid
    shape = grid.shape
    d = np.asarray(grid.spacing, dtype=float)
    facets = np.argwhere(geom.update_mask() & (geom.eb_area > 0.0))
    facet_pos = np.stack(np.meshgrid(*grid.cv_centers(variant), indexing="ij"), axis=-1)
    facet_pos = facet_pos + geom.eb_centroid * d

    matrices: List[List[sparse.csr_matrix]] = []
    if len(facets) == 0:
        return EBGradientOperator(variant=variant, facets=facets, matrices=matrices)
    degraded = 0
    for c in range(3):
        target = geoms[GridVariant.face(c)]
        points_all = _centroids(target)
        wet = target.alpha > 0.0
        rows, cols, vals = [[], [], []], [[], [], []], [[], [], []]
        for f, index in enumerate(facets):
            ranges = []
            for a in range(3):
                shift = _offset(target.variant, a) - _offset(variant, a)
                lo, hi = {-0.5: (-1, 2), 0.5: (-2, 1), 0.0: (-1, 1)}[shift]
                ranges.append(np.arange(max(index[a] + lo, 0), min(index[a] + hi, shape[a] - 1) + 1))
            block = np.stack(np.meshgrid(*ranges, indexing="ij"), axis=-1).reshape(-1, 3)
            block = block[wet[block[:, 0], block[:, 1], block[:, 2]]]
            weights = None
            if len(block):
                points = points_all[block[:, 0], block[:, 1], block[:, 2]]
                weights = gradient_weights(points, facet_pos[tuple(index)], d, wall=True)
            if weights is None:
                degraded += 1
                continue
            flat = np.ravel_multi_index(block.T, shape)
            for j in range(3):
                rows[j].extend([f] * len(flat))
                cols[j].extend(flat.tolist())
                vals[j].extend(weights[j].tolist())
        matrices.append([
            sparse.csr_matrix((vals[j], (rows[j], cols[j])), shape=(len(facets), int(np.prod(shape))))
            for j in range(3)
        ])
    if degraded:
        logger.warning(f"{variant.value}: {degraded} facet gradients fell back to zero")

    # wall traction per unit velocity over the volume left after redistribution
    row_sum = np.max([
        np.asarray(abs(m).sum(axis=1)).ravel() for per_component in matrices for m in per_component
    ], axis=0)
    i, j, k = facets.T
    volume = np.maximum(geom.alpha[i, j, k], 0.5) * grid.cell_volume
    stiffness = 2.0 * geom.eb_area[i, j, k] / volume * row_sum
    return EBGradientOperator(variant=variant, facets=facets, matrices=matrices, stiffness=stiffness)


# Flux containers
@dataclass
class EquationFlux:
    """Directional fluxes on the low faces of one equation's control volumes"""

    variant: GridVariant
    faces: List[np.ndarray]
    eb: np.ndarray
    source: np.ndarray

    def __add__(self, other: "EquationFlux") -> "EquationFlux":
        return EquationFlux(
            variant=self.variant,
            faces=[a + b for a, b in zip(self.faces, other.faces)],
            eb=self.eb + other.eb,
            source=self.source + other.source,
        )


@dataclass
class FluxSet:
    equations: Dict[str, EquationFlux] = field(default_factory=dict)

    def __getitem__(self, name: str) -> EquationFlux:
        return self.equations[name]

    def __add__(self, other: "FluxSet") -> "FluxSet":
        merged = dict(self.equations)
        for name, flux in other.equations.items():
            merged[name] = merged[name] + flux if name in merged else flux
        return FluxSet(merged)


@dataclass
class UpdateField:
    """Time rate of every prognostic variable"""

    rates: Dict[str, np.ndarray] = field(default_factory=dict)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.rates[name]

    def max_abs(self) -> Dict[str, float]:
        return {name: float(np.max(np.abs(r))) for name, r in self.rates.items()}


def _zero_flux(grid: GridSpec, variant: GridVariant) -> EquationFlux:
    shape = grid.shape
    return EquationFlux(variant, [np.zeros(shape) for _ in range(3)], np.zeros(shape), np.zeros(shape))


# Advection
def advective_fluxes(state: StaggeredState, prim: Primitives, geoms: Optional[GeometrySet] = None) -> FluxSet:
    """Provisional advective fluxes on full faces; EB facets carry no convective flux"""
    grid = state.grid
    mom = state.mom
    cell_geom = geoms.cell if geoms is not None else None
    out: Dict[str, EquationFlux] = {}

    if state.model == FlowModel.COMPRESSIBLE:
        mass = _zero_flux(grid, GridVariant.CELL)
        mass.faces = [m.copy() for m in mom]
        out["rho"] = mass

    heat = _zero_flux(grid, GridVariant.CELL)
    for a in range(3):
        heat.faces[a] = mom[a] * interface_values(prim.theta, a, mom[a], cell_geom)
    out["rho_theta"] = heat

    for b in range(3):
        variant = GridVariant.face(b)
        geom = geoms[variant] if geoms is not None else None
        u = prim.velocity[b]
        eq = _zero_flux(grid, variant)
        for a in range(3):
            if a == b:
                # low b-face of the staggered volume sits at the cell center below
                carrier = 0.5 * (shift_down(mom[b], b) + mom[b])
            else:
                carrier = 0.5 * (mom[a] + shift_down(mom[a], b))
            eq.faces[a] = carrier * interface_values(u, a, carrier, geom)
        out[MOMENTUM[b]] = eq
    return FluxSet(out)


# Diffusion
def _edge_average(mu: np.ndarray, a: int, b: int) -> np.ndarray:
    ma = shift_down(mu, a)
    return 0.25 * (mu + ma + shift_down(mu, b) + shift_down(ma, b))


def one_sided_difference(values: np.ndarray, wet: np.ndarray, axis: int, spacing: float) -> np.ndarray:
    """(v[i] - v[i-1]) / d where both are wet.

    Where one of the pair is covered the difference of the next wet pair on
    the other side is used; zero when there is none.
    """
    below = shift_down(values, axis)
    wet_below = shift_down(wet, axis)
    centered = (values - below) / spacing
    forward = (shift_up(values, axis) - values) / spacing
    backward = (below - shift_down(below, axis)) / spacing
    use_forward = ~wet_below & wet & shift_up(wet, axis)
    use_backward = ~wet & wet_below & shift_down(wet_below, axis)
    out = np.where(wet & wet_below, centered, 0.0)
    out = np.where(use_forward, forward, out)
    return np.where(use_backward, backward, out)


def diffusive_fluxes(state: StaggeredState, prim: Primitives, context: "FluxContext") -> FluxSet:
    """Viscous momentum fluxes, thermal diffusion and the EB facet momentum flux"""
    grid = state.grid
    geoms = context.geoms
    d = grid.spacing
    mu = context.mu
    lam = context.constants.stokes_lambda_sign * (2.0 / 3.0) * mu

    velocity, wet = [], []
    for c in range(3):
        open_ = geoms.faces[c].alpha > 0.0 if geoms is not None else np.ones(grid.shape, dtype=bool)
        velocity.append(np.where(open_, prim.velocity[c], 0.0))
        wet.append(open_)

    def difference(c: int, a: int) -> np.ndarray:
        return one_sided_difference(velocity[c], wet[c], a, d[a])

    strain = [shift_up(difference(a, a), a) for a in range(3)]
    div = strain[0] + strain[1] + strain[2]

    out: Dict[str, EquationFlux] = {}
    for b in range(3):
        variant = GridVariant.face(b)
        eq = _zero_flux(grid, variant)
        for a in range(3):
            if a == b:
                tau = lam * div + 2.0 * mu * strain[b]
                eq.faces[a] = -shift_down(tau, b)
            else:
                shear = difference(b, a) + difference(a, b)
                eq.faces[a] = -_edge_average(mu, a, b) * shear
        out[MOMENTUM[b]] = eq

    kappa = context.constants.thermal_diffusivity
    if kappa > 0.0:
        heat = _zero_flux(grid, GridVariant.CELL)
        for a in range(3):
            heat.faces[a] = -prim.rho_face[a] * kappa * (prim.theta - shift_down(prim.theta, a)) / d[a]
        out["rho_theta"] = heat

    if context.eb_wall == EBWallType.NO_SLIP and context.eb_gradients:
        for b in range(3):
            variant = GridVariant.face(b)
            op = context.eb_gradients.get(variant)
            if op is None or len(op.facets) == 0:
                continue
            grad = op.gradients(prim.velocity)
            i, j, k = op.facets.T
            mu_facet = 0.5 * (mu[i, j, k] + shift_down(mu, b)[i, j, k])
            tau = stress_tensor(grad, context.constants, mu_facet)
            normal = geoms[variant].eb_normal[i, j, k]
            traction = np.einsum("fij,fj->fi", tau, normal)
            out[MOMENTUM[b]].eb[i, j, k] = -traction[:, b]
    return FluxSet(out)


# Sources
def pressure_gradient_source(p_pert: np.ndarray, geom: EBGeometry) -> List[np.ndarray]:
    """-(p'[i] - p'[i-1]) / d on every face; zero across faces next to a covered cell"""
    wet = geom.alpha > 0.0
    out = []
    for a in range(3):
        grad = -(p_pert - shift_down(p_pert, a)) / geom.grid.spacing[a]
        out.append(np.where(wet & shift_down(wet, a), grad, 0.0))
    return out


# Assembly
def divergence_update(fluxes: FluxSet, geoms: GeometrySet, grid: GridSpec,
                      masks: Optional[Dict[str, np.ndarray]] = None) -> UpdateField:
    """dU = -(1/alpha) [sum_a (beta F)^+ - (beta F)^- over d_a + A_eb/V F_eb] + S"""
    rates: Dict[str, np.ndarray] = {}
    for name, eq in fluxes.equations.items():
        geom = geoms[eq.variant]
        mask = geom.update_mask() if masks is None or name not in masks else masks[name]
        if np.any(mask & (geom.alpha <= 0.0)):
            raise SolverError(f"update of {name} requested on covered control volumes")
        div = np.zeros(grid.shape)
        for a in range(3):
            bf = geom.beta[a] * eq.faces[a]
            div += (shift_up(bf, a) - bf) / grid.spacing[a]
        div += geom.eb_area / grid.cell_volume * eq.eb
        alpha = np.where(mask, geom.alpha, 1.0)
        rates[name] = np.where(mask, -div / alpha + eq.source, 0.0)
    return UpdateField(rates)


@dataclass
class FluxContext:
    """Everything the right-hand side needs besides the state"""

    geoms: GeometrySet
    constants: FluidConstants
    eb_wall: EBWallType = EBWallType.NO_SLIP
    forcing: Vector = (0.0, 0.0, 0.0)
    mu: Optional[np.ndarray] = None
    eb_gradients: Dict[GridVariant, EBGradientOperator] = field(default_factory=dict)

    @property
    def viscous(self) -> bool:
        return self.mu is not None and bool(np.any(self.mu > 0.0))


def build_flux_context(geoms: GeometrySet, constants: FluidConstants, boundaries: BoundarySpec,
                       forcing: Vector = (0.0, 0.0, 0.0), mask: Optional[ViscosityMask] = None) -> FluxContext:
    grid = geoms.cell.grid
    mu = viscosity_field(grid, constants, mask)
    context = FluxContext(geoms=geoms, constants=constants, eb_wall=boundaries.eb_wall,
                          forcing=tuple(forcing), mu=mu)
    if context.viscous and boundaries.eb_wall == EBWallType.NO_SLIP:
        context.eb_gradients = {
            GridVariant.face(b): build_eb_gradient_operator(geoms, GridVariant.face(b)) for b in range(3)
        }
        facets = sum(len(op.facets) for op in context.eb_gradients.values())
        logger.info(f"EB gradient operators built for {facets} staggered facets")
    return context


def compute_rhs(state: StaggeredState, context: FluxContext) -> UpdateField:
    """Rates dU of every prognostic variable for the current (ghost-filled) state"""
    geoms = context.geoms
    grid = state.grid
    prim = primitives(state, geoms, context.constants)
    fluxes = advective_fluxes(state, prim, geoms)
    if context.viscous:
        fluxes = fluxes + diffusive_fluxes(state, prim, context)

    if state.model == FlowModel.COMPRESSIBLE:
        grad_p = pressure_gradient_source(prim.p_pert, geoms.cell)
    else:
        grad_p = [np.zeros(grid.shape) for _ in range(3)]
    lift = buoyancy(state, context.constants, geoms)
    for b in range(3):
        eq = fluxes[MOMENTUM[b]]
        eq.source = eq.source + grad_p[b] + context.forcing[b]
        if b == 2:
            eq.source = eq.source + lift

    for eq in fluxes.equations.values():
        geom = geoms[eq.variant]
        eq.faces = [correct_cut_faces(eq.faces[a], geom, a) for a in range(3)]
    return divergence_update(fluxes, geoms, grid)
