"""
Equation-set ingredients: equation of state, hydrostatic background, buoyancy,
primitive recovery and the viscous stress tensor.
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Union

import numpy as np

from .errors import PhysicsError
from .fields import StaggeredState
from .geometry import GeometrySet, shift_down
from .models import N_GHOST, FlowModel, FluidConstants, GridSpec, GridVariant, ViscosityMask

logger = logging.getLogger(__name__)

ThetaProfile = Union[float, np.ndarray, Callable[[np.ndarray], np.ndarray]]

_MAX_HYDROSTATIC_ITER = 50
_HYDROSTATIC_TOL = 1.0e-12


def eos_pressure(rho_theta: np.ndarray, constants: FluidConstants) -> np.ndarray:
    """p = P00 * (R * rho_theta / P00) ** gamma"""
    rho_theta = np.asarray(rho_theta, dtype=float)
    if np.any(rho_theta <= 0.0) or not np.all(np.isfinite(rho_theta)):
        raise PhysicsError("rho*theta must be positive and finite to evaluate the equation of state")
    return constants.p00 * (constants.R * rho_theta / constants.p00) ** constants.gamma


def density_from_pressure(p: np.ndarray, theta: np.ndarray, constants: FluidConstants) -> np.ndarray:
    """Inverse of the equation of state at given potential temperature"""
    if np.any(np.asarray(p) <= 0.0):
        raise PhysicsError("non-positive pressure")
    return (constants.p00 / (constants.R * theta)) * (p / constants.p00) ** (1.0 / constants.gamma)


def sound_speed(p: np.ndarray, rho: np.ndarray, constants: FluidConstants) -> np.ndarray:
    return np.sqrt(constants.gamma * p / rho)


@dataclass
class BackgroundProfile:
    """Hydrostatic profiles at the extended cell-center heights"""

    z: np.ndarray
    rho0: np.ndarray
    theta0: np.ndarray
    p0: np.ndarray
    rho0_zface: np.ndarray  # on low z-faces

    @staticmethod
    def column(profile: np.ndarray) -> np.ndarray:
        return profile.reshape(1, 1, -1)

    def balance_residual(self, constants: FluidConstants) -> np.ndarray:
        """(p0[k+1] - p0[k]) / dz + g * (rho0[k] + rho0[k+1]) / 2, relative to g * rho0"""
        dz = self.z[1] - self.z[0]
        res = (self.p0[1:] - self.p0[:-1]) / dz + constants.g * 0.5 * (self.rho0[1:] + self.rho0[:-1])
        scale = max(constants.g * float(np.max(self.rho0)), np.finfo(float).tiny)
        return res / scale


def _theta_column(theta0: ThetaProfile, z: np.ndarray) -> np.ndarray:
    if callable(theta0):
        values = np.asarray(theta0(z), dtype=float)
    else:
        values = np.asarray(theta0, dtype=float)
    values = np.broadcast_to(values, z.shape).astype(float)
    if np.any(values <= 0.0):
        raise PhysicsError("background potential temperature must be positive")
    return values


def hydrostatic_background(theta0: ThetaProfile, constants: FluidConstants, grid: GridSpec) -> BackgroundProfile:
    """Integrate discrete hydrostatic balance upward from P00 at the domain bottom.

    Each level solves p[k+1] = p[k] - g*dz*(rho[k] + rho[k+1])/2 with
    rho = rho(p, theta) by fixed-point iteration, so the discrete balance holds
    to the iteration tolerance. Ghost levels below the bottom are integrated
    downward with the same relation.
    """
    z = grid.cell_centers(2)
    dz = grid.dz
    theta = _theta_column(theta0, z)
    g = constants.g
    nz = len(z)
    p = np.empty(nz)
    rho = np.empty(nz)
    k0 = N_GHOST

    def solve(k: int, p_guess: float, rhs) -> None:
        value = p_guess
        for _ in range(_MAX_HYDROSTATIC_ITER):
            r = float(density_from_pressure(max(value, 1e-300), theta[k], constants))
            new = rhs(r)
            if new <= 0.0:
                raise PhysicsError(f"hydrostatic integration produced non-positive pressure at level {k}")
            converged = abs(new - value) <= _HYDROSTATIC_TOL * abs(new)
            value = new
            if converged:
                break
        p[k] = value
        rho[k] = float(density_from_pressure(value, theta[k], constants))

    # first level sits half a cell above the surface
    solve(k0, constants.p00, lambda r: constants.p00 - g * 0.5 * dz * r)
    for k in range(k0 + 1, nz):
        solve(k, p[k - 1], lambda r, k=k: p[k - 1] - g * dz * 0.5 * (rho[k - 1] + r))
    for k in range(k0 - 1, -1, -1):
        solve(k, p[k + 1], lambda r, k=k: p[k + 1] + g * dz * 0.5 * (rho[k + 1] + r))

    rho_face = np.empty(nz)
    rho_face[1:] = 0.5 * (rho[1:] + rho[:-1])
    rho_face[0] = rho[0]
    p_eos = eos_pressure(rho * theta, constants)
    return BackgroundProfile(z=z, rho0=rho, theta0=theta, p0=p_eos, rho0_zface=rho_face)


def buoyancy(state: StaggeredState, constants: FluidConstants,
             geoms: Optional[GeometrySet] = None) -> np.ndarray:
    """Vertical buoyancy force per unit volume on the z-faces.

    Compressible: -g * rho'; anelastic: +g * rho0 * theta'/theta0.
    """
    bg = state.background
    if state.model == FlowModel.COMPRESSIBLE:
        rho_pert = state.rho - bg.column(bg.rho0)
        force = -constants.g * 0.5 * (rho_pert + shift_down(rho_pert, 2))
    else:
        ratio = state.rho_theta / state.rho / bg.column(bg.theta0) - 1.0
        force = constants.g * bg.column(bg.rho0_zface) * 0.5 * (ratio + shift_down(ratio, 2))
    if geoms is not None:
        force = np.where(geoms[GridVariant.ZFACE].alpha > 0.0, force, 0.0)
    return force


@dataclass
class Primitives:
    velocity: List[np.ndarray]  # on the faces of each axis
    rho_face: List[np.ndarray]
    theta: np.ndarray
    p: np.ndarray
    p_pert: np.ndarray


def face_density(state: StaggeredState, geoms: Optional[GeometrySet], axis: int) -> np.ndarray:
    """Density on the low `axis`-faces.

    Mean of the adjacent non-covered cells; one-sided next to a covered cell;
    background density when both neighbours are covered.
    """
    bg = state.background
    fallback = bg.column(bg.rho0_zface if axis == 2 else bg.rho0) * np.ones(state.grid.shape)
    if state.model == FlowModel.ANELASTIC:
        return fallback
    if geoms is None:
        return 0.5 * (state.rho + shift_down(state.rho, axis))
    wet = (geoms.cell.alpha > 0.0).astype(float)
    wet_left = shift_down(wet, axis)
    total = wet + wet_left
    summed = wet * state.rho + wet_left * shift_down(state.rho, axis)
    rho = np.where(total > 0.0, summed / np.where(total > 0.0, total, 1.0), fallback)
    orphan = (total == 0.0) & (geoms.faces[axis].alpha > 0.0)
    if np.any(orphan):
        logger.warning(f"{int(orphan.sum())} {'xyz'[axis]}-faces between covered cells use background density")
    return rho


def primitives(state: StaggeredState, geoms: Optional[GeometrySet], constants: FluidConstants) -> Primitives:
    """Velocities on faces, potential temperature and pressure at cell centers"""
    rho_face = [face_density(state, geoms, a) for a in range(3)]
    velocity = [state.mom[a] / rho_face[a] for a in range(3)]
    theta = state.rho_theta / state.rho
    bg = state.background
    if state.model == FlowModel.COMPRESSIBLE:
        p = eos_pressure(state.rho_theta, constants)
        p_pert = p - bg.column(bg.p0)
    else:
        p = np.broadcast_to(bg.column(bg.p0), state.grid.shape).copy()
        p_pert = np.zeros(state.grid.shape)
    return Primitives(velocity=velocity, rho_face=rho_face, theta=theta, p=p, p_pert=p_pert)


def stress_tensor(grad: np.ndarray, constants: FluidConstants, mu: Optional[np.ndarray] = None) -> np.ndarray:
    """tau = lambda * div(u) * I + mu * (grad u + grad u^T).

    `grad[..., i, j]` is d u_i / d x_j. `mu` may vary in space.
    """
    grad = np.asarray(grad, dtype=float)
    if mu is None:
        mu = constants.mu
    mu = np.asarray(mu, dtype=float)
    lam = constants.stokes_lambda_sign * (2.0 / 3.0) * mu
    div = np.trace(grad, axis1=-2, axis2=-1)
    tau = mu[..., None, None] * (grad + np.swapaxes(grad, -1, -2))
    tau += (lam * div)[..., None, None] * np.eye(3)
    return tau


def viscosity_field(grid: GridSpec, constants: FluidConstants, mask: Optional[ViscosityMask] = None) -> np.ndarray:
    """Cell-center dynamic viscosity, optionally switched off near an obstacle"""
    mu = np.full(grid.shape, constants.mu)
    if mask is None:
        return mu
    X, Y, Z = np.meshgrid(*(grid.cell_centers(a) for a in range(3)), indexing="ij")
    c = mask.center
    r = np.sqrt((X - c[0]) ** 2 + (Y - c[1]) ** 2 + (Z - c[2]) ** 2)
    s = np.clip((r - mask.inner_radius) / mask.ramp, 0.0, 1.0)
    return mu * np.sin(0.5 * np.pi * s) ** 2
