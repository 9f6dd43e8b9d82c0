"""
Time stepping: three-stage Runge-Kutta for the compressible model, two-stage
Runge-Kutta with projection for the anelastic model, CFL control and the
cut-cell Poisson solve.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy import sparse

from .config import get_settings
from .errors import PhysicsError, PoissonError, SolverAbort
from .fields import StaggeredState, apply_damping, fill_ghost, fill_scalar_ghost
from .fluxes import EBGradientOperator, FluxContext, compute_rhs
from .geometry import EBGeometry, GeometrySet, interior_slices, shift_down, shift_up
from .models import N_GHOST, BoundarySpec, BoundaryType, DampingSpec, FlowModel, GridVariant
from .physics import primitives, sound_speed
from .wsrd import NeighborhoodMap, redistribute_state

logger = logging.getLogger(__name__)

RK3_FRACTIONS = (1.0 / 3.0, 0.5, 1.0)
RK2_FRACTIONS = (0.5, 1.0)

Hook = Callable[[str, int], None]


# Time-step control
def compute_dt(state: StaggeredState, geoms: Optional[GeometrySet], cfl: float, constants,
               mu: Optional[np.ndarray] = None, max_dt: float = 1.0e30,
               eb_gradients: Optional[Dict[GridVariant, EBGradientOperator]] = None) -> float:
    """Largest stable step for the current state.

    Advective (plus acoustic, compressible) limit over non-covered faces with
    full-cell spacings, and a viscous limit when viscosity is present. With
    `eb_gradients` the no-slip wall traction is limited too.
    """
    if not 0.0 < cfl <= 1.0:
        raise ValueError(f"cfl must be in (0, 1], got {cfl}")
    grid = state.grid
    prim = primitives(state, geoms, constants)
    if state.model == FlowModel.COMPRESSIBLE:
        c = sound_speed(prim.p, state.rho, constants)
    else:
        c = np.zeros(grid.shape)

    dt = max_dt
    for a in range(3):
        if grid.n[a] == 1 and grid.periodic[a]:
            continue
        variant = GridVariant.face(a)
        region = np.zeros(grid.shape, dtype=bool)
        if geoms is not None:
            geom = geoms[variant]
            region[geom.interior(boundary_faces=True)] = True
            region &= geom.alpha > 0.0
        else:
            region[interior_slices(grid, variant, boundary_faces=True)] = True
        speed = np.abs(prim.velocity[a]) + np.maximum(c, shift_down(c, a))
        speed = speed[region]
        if speed.size == 0:
            continue
        if not np.all(np.isfinite(speed)):
            raise PhysicsError("non-finite wave speed while computing the time step")
        fastest = float(speed.max())
        if fastest > 0.0:
            dt = min(dt, cfl * grid.spacing[a] / fastest)

    if mu is not None and np.any(mu > 0.0):
        ndim = sum(1 for a in range(3) if grid.n[a] > 1)
        cells = np.zeros(grid.shape, dtype=bool)
        cells[interior_slices(grid, GridVariant.CELL)] = True
        nu = float(np.max((mu / state.rho)[cells]))
        if nu > 0.0:
            dt = min(dt, cfl * min(grid.spacing) ** 2 / (2.0 * max(ndim, 1) * nu))
        if eb_gradients:
            nu_field = mu / state.rho
            rate = max(op.viscous_rate(nu_field) for op in eb_gradients.values())
            if rate > 0.0:
                dt = min(dt, cfl / rate)
    return dt


# Poisson system
@dataclass
class PoissonResult:
    iterations: int
    residual: float


@dataclass
class PoissonSystem:
    """Symmetric cut-cell operator A = -alpha V L(phi) over the fluid cells.

    Face coefficients are beta * A_face / d. Walls, inflow and the EB are
    homogeneous Neumann; outflow faces impose phi = 0.
    """

    geom: EBGeometry
    bcs: BoundarySpec
    unknowns: np.ndarray  # flat indices of the fluid cells
    matrix: sparse.csr_matrix
    singular: bool

    @property
    def grid(self):
        return self.geom.grid

    def apply(self, phi: np.ndarray) -> np.ndarray:
        return self.matrix @ phi

    def scatter(self, phi: np.ndarray) -> np.ndarray:
        full = np.zeros(self.grid.shape)
        full.flat[self.unknowns] = phi
        return full

    def gather(self, field_: np.ndarray) -> np.ndarray:
        return field_.ravel()[self.unknowns]

    def net_face_flux(self, mom: List[np.ndarray]) -> np.ndarray:
        """alpha * D(m): net beta-weighted face flux per full cell volume"""
        geom = self.geom
        out = np.zeros(self.grid.shape)
        for a in range(3):
            bf = geom.beta[a] * mom[a]
            out += (shift_up(bf, a) - bf) / self.grid.spacing[a]
        return out

    def rhs(self, mom: List[np.ndarray], dt: float) -> np.ndarray:
        return -self.gather(self.net_face_flux(mom)) * self.grid.cell_volume / dt


def build_poisson_system(geom: EBGeometry, bcs: BoundarySpec) -> PoissonSystem:
    grid = geom.grid
    g = N_GHOST
    shape = grid.shape
    wet = geom.update_mask()
    unknowns = np.flatnonzero(wet)
    number = np.full(int(np.prod(shape)), -1, dtype=np.int64)
    number[unknowns] = np.arange(len(unknowns))
    number = number.reshape(shape)

    rows, cols, vals = [], [], []
    cells = np.argwhere(wet)
    singular = True
    for a in range(3):
        n = grid.n[a]
        coef = geom.beta[a] * grid.face_area(a) / grid.spacing[a]
        p = number[tuple(cells.T)]
        # interior and periodic low faces
        low = cells.copy()
        low[:, a] -= 1
        at_low = cells[:, a] == g
        if grid.periodic[a]:
            low[at_low, a] = g + n - 1
        inside = ~at_low | grid.periodic[a]
        q = np.where(inside, number[tuple(np.clip(low, 0, None).T)], -1)
        c = coef[tuple(cells.T)]
        link = inside & (q >= 0) & (c > 0.0) & (q != p)
        rows += [p[link], q[link], p[link], q[link]]
        cols += [p[link], q[link], q[link], p[link]]
        vals += [c[link], c[link], -c[link], -c[link]]
        # Dirichlet outflow faces
        for high, edge in ((0, g), (1, g + n - 1)):
            if bcs.side(a, high) != BoundaryType.OUTFLOW:
                continue
            singular = False
            sel = cells[:, a] == edge
            face = cells[sel].copy()
            if high:
                face[:, a] += 1
            cf = coef[tuple(face.T)]
            rows.append(p[sel])
            cols.append(p[sel])
            vals.append(2.0 * cf)
    size = len(unknowns)
    matrix = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size)
    )
    logger.info(f"Poisson system: {size} unknowns, {'singular' if singular else 'Dirichlet-pinned'}")
    return PoissonSystem(geom=geom, bcs=bcs, unknowns=unknowns, matrix=matrix, singular=singular)


def poisson_solve(system: PoissonSystem, rhs: np.ndarray, tol: Optional[float] = None,
                  max_iter: Optional[int] = None) -> Tuple[np.ndarray, PoissonResult]:
    """Jacobi-preconditioned conjugate gradients on the symmetric operator"""
    settings = get_settings()
    tol = settings.POISSON_TOL if tol is None else tol
    max_iter = settings.POISSON_MAX_ITER if max_iter is None else max_iter
    A = system.matrix
    b = np.asarray(rhs, dtype=float).copy()
    if system.singular and b.size:
        b -= b.mean()
    phi = np.zeros_like(b)
    norm_b = float(np.linalg.norm(b))
    if norm_b == 0.0:
        return phi, PoissonResult(0, 0.0)

    diag = A.diagonal()
    inv_diag = np.where(diag > 0.0, 1.0 / np.where(diag > 0.0, diag, 1.0), 0.0)
    r = b.copy()
    z = inv_diag * r
    p = z.copy()
    rz = float(r @ z)
    iteration = 0
    for iteration in range(1, max_iter + 1):
        Ap = A @ p
        denom = float(p @ Ap)
        if denom <= 0.0:
            break
        step = rz / denom
        phi += step * p
        r -= step * Ap
        residual = float(np.linalg.norm(r)) / norm_b
        if residual <= tol:
            break
        z = inv_diag * r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    residual = float(np.linalg.norm(b - A @ phi)) / norm_b
    if residual > tol:
        raise PoissonError(iteration, residual, tol)

    if system.singular:
        vol = system.gather(system.geom.volume)
        phi -= float(np.sum(vol * phi) / np.sum(vol))
    return phi, PoissonResult(iteration, residual)


def project(state: StaggeredState, system: PoissonSystem, dt: float, tol: Optional[float] = None,
            max_iter: Optional[int] = None) -> Tuple[StaggeredState, PoissonResult, np.ndarray]:
    """Make the face momenta discretely divergence free; returns the potential on the extended grid"""
    grid = state.grid
    phi_vec, result = poisson_solve(system, system.rhs(state.mom, dt), tol, max_iter)
    phi = system.scatter(phi_vec)
    fill_scalar_ghost(phi, grid, system.bcs)
    geom = system.geom
    for a in range(3):
        faces = np.zeros(grid.shape, dtype=bool)
        region = [slice(N_GHOST, N_GHOST + n) for n in grid.n]
        if not grid.periodic[a]:
            lo = N_GHOST + (0 if system.bcs.side(a, 0) == BoundaryType.OUTFLOW else 1)
            hi = N_GHOST + grid.n[a] + (1 if system.bcs.side(a, 1) == BoundaryType.OUTFLOW else 0)
            region[a] = slice(lo, hi)
        faces[tuple(region)] = True
        faces &= geom.beta[a] > 0.0
        grad = (phi - shift_down(phi, a)) / grid.spacing[a]
        state.mom[a][faces] -= dt * grad[faces]
    return state, result, phi


# Stepping machinery
@dataclass
class StepMachinery:
    """Operators shared by every step of a run"""

    context: FluxContext
    boundaries: BoundarySpec
    damping: DampingSpec = field(default_factory=DampingSpec)
    maps: Optional[Dict[GridVariant, NeighborhoodMap]] = None
    poisson: Optional[PoissonSystem] = None
    poisson_tol: Optional[float] = None
    poisson_max_iter: Optional[int] = None
    hooks: List[Hook] = field(default_factory=list)
    last_poisson: Optional[PoissonResult] = None

    @property
    def geoms(self) -> GeometrySet:
        return self.context.geoms

    def emit(self, event: str, stage: int) -> None:
        for hook in self.hooks:
            hook(event, stage)


def _check_positive(state: StaggeredState, geoms: GeometrySet, stage: int) -> None:
    wet = geoms.cell.update_mask()
    checks = [("rho_theta", state.rho_theta)]
    if state.model == FlowModel.COMPRESSIBLE:
        checks.insert(0, ("rho", state.rho))
    for name, arr in checks:
        values = arr[wet]
        if values.size and (not np.all(np.isfinite(values)) or np.any(values <= 0.0)):
            where = np.argwhere(wet & ~(arr > 0.0))
            at = tuple(int(i) for i in where[0]) if len(where) else None
            raise SolverAbort(f"non-positive {name} after stage {stage} at {at}")


def _stage(base: StaggeredState, current: StaggeredState, fraction_dt: float, machinery: StepMachinery,
           stage: int) -> StaggeredState:
    fill_ghost(current, machinery.boundaries)
    rates = compute_rhs(current, machinery.context)
    machinery.emit("rhs", stage)
    provisional = base.copy()
    provisional.axpy(base, rates.rates, fraction_dt)
    machinery.emit("update", stage)
    if machinery.maps is not None:
        redistribute_state(provisional, machinery.maps)
        machinery.emit("wsrd", stage)
    apply_damping(provisional, machinery.damping, fraction_dt, machinery.geoms)
    machinery.emit("damping", stage)
    return provisional


def rk3_step_compressible(state: StaggeredState, dt: float, machinery: StepMachinery) -> StaggeredState:
    """One three-stage step; every stage restarts from the step's initial state"""
    if state.model != FlowModel.COMPRESSIBLE:
        raise ValueError("rk3_step_compressible needs a compressible state")
    fill_ghost(state, machinery.boundaries)
    current = state
    for stage, fraction in enumerate(RK3_FRACTIONS):
        current = _stage(state, current, fraction * dt, machinery, stage)
        _check_positive(current, machinery.geoms, stage)
    current.time = state.time + dt
    current.step = state.step + 1
    fill_ghost(current, machinery.boundaries)
    return current


def rk2_step_anelastic(state: StaggeredState, dt: float, machinery: StepMachinery) -> StaggeredState:
    """Midpoint step; each stage is redistributed and then projected"""
    if state.model != FlowModel.ANELASTIC:
        raise ValueError("rk2_step_anelastic needs an anelastic state")
    if machinery.poisson is None:
        raise ValueError("anelastic stepping needs a Poisson system")
    fill_ghost(state, machinery.boundaries)
    current = state
    for stage, fraction in enumerate(RK2_FRACTIONS):
        current = _stage(state, current, fraction * dt, machinery, stage)
        fill_ghost(current, machinery.boundaries)
        _, machinery.last_poisson, _ = project(
            current, machinery.poisson, fraction * dt, machinery.poisson_tol, machinery.poisson_max_iter
        )
        machinery.emit("projection", stage)
        _check_positive(current, machinery.geoms, stage)
    current.time = state.time + dt
    current.step = state.step + 1
    fill_ghost(current, machinery.boundaries)
    return current


def advance(state: StaggeredState, dt: float, machinery: StepMachinery) -> StaggeredState:
    if state.model == FlowModel.COMPRESSIBLE:
        return rk3_step_compressible(state, dt, machinery)
    return rk2_step_anelastic(state, dt, machinery)
