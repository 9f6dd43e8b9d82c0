"""
Pydantic models for case configuration and reports
"""

from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

N_GHOST = 3

Vector = Tuple[float, float, float]
AXIS_NAMES = ("x", "y", "z")
SIDE_NAMES = ("xlo", "xhi", "ylo", "yhi", "zlo", "zhi")


class FlowModel(str, Enum):
    COMPRESSIBLE = "compressible"
    ANELASTIC = "anelastic"


class GridVariant(str, Enum):
    CELL = "cell"
    XFACE = "xface"
    YFACE = "yface"
    ZFACE = "zface"

    @property
    def axis(self) -> Optional[int]:
        return {"cell": None, "xface": 0, "yface": 1, "zface": 2}[self.value]

    @classmethod
    def face(cls, axis: int) -> "GridVariant":
        return (cls.XFACE, cls.YFACE, cls.ZFACE)[axis]


class BoundaryType(str, Enum):
    PERIODIC = "periodic"
    INFLOW = "inflow"
    OUTFLOW = "outflow"
    SLIP_WALL = "slip_wall"
    NO_SLIP_WALL = "no_slip_wall"


class EBWallType(str, Enum):
    NO_SLIP = "no_slip"
    FREE_SLIP = "free_slip"


class SurfaceKind(str, Enum):
    NONE = "none"
    PLANE = "plane"
    SPHERE = "sphere"
    HEMISPHERE = "hemisphere"
    BOX = "box"
    AGNESI_RIDGE = "agnesi_ridge"


class TimeScheme(str, Enum):
    RK3_COMPRESSIBLE = "rk3_compressible"
    RK2_ANELASTIC = "rk2_anelastic"


class OutputFormat(str, Enum):
    VTK = "vtk"
    CSV = "csv"


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


# Grid models
class GridSpec(_Strict):
    """Uniform Cartesian grid; `extent`, when given, overrides `spacing`"""

    n: Tuple[int, int, int]
    spacing: Optional[Vector] = None
    extent: Optional[Vector] = None
    origin: Vector = (0.0, 0.0, 0.0)
    periodic: Tuple[bool, bool, bool] = (False, False, False)

    model_config = ConfigDict(extra="forbid", frozen=True)

    @model_validator(mode="after")
    def _resolve_spacing(self) -> "GridSpec":
        if any(c < 1 for c in self.n):
            raise ValueError(f"cell counts must be >= 1, got {self.n}")
        if self.extent is not None:
            if any(e <= 0 for e in self.extent):
                raise ValueError(f"extent must be positive, got {self.extent}")
            spacing = tuple(float(e) / c for e, c in zip(self.extent, self.n))
            object.__setattr__(self, "spacing", spacing)
        if self.spacing is None:
            raise ValueError("either spacing or extent is required")
        if any(d <= 0 for d in self.spacing):
            raise ValueError(f"spacing must be positive, got {self.spacing}")
        return self

    @property
    def nx(self) -> int:
        return self.n[0]

    @property
    def ny(self) -> int:
        return self.n[1]

    @property
    def nz(self) -> int:
        return self.n[2]

    @property
    def dx(self) -> float:
        return self.spacing[0]

    @property
    def dy(self) -> float:
        return self.spacing[1]

    @property
    def dz(self) -> float:
        return self.spacing[2]

    @property
    def ng(self) -> int:
        return N_GHOST

    @property
    def shape(self) -> Tuple[int, int, int]:
        """Extended array shape, ghost layers included"""
        return tuple(c + 2 * N_GHOST for c in self.n)

    @property
    def cell_volume(self) -> float:
        return self.spacing[0] * self.spacing[1] * self.spacing[2]

    @property
    def lengths(self) -> Vector:
        return tuple(c * d for c, d in zip(self.n, self.spacing))

    def face_area(self, axis: int) -> float:
        others = [self.spacing[b] for b in range(3) if b != axis]
        return others[0] * others[1]

    def cell_centers(self, axis: int) -> np.ndarray:
        idx = np.arange(self.shape[axis]) - N_GHOST
        return self.origin[axis] + (idx + 0.5) * self.spacing[axis]

    def cell_faces(self, axis: int) -> np.ndarray:
        """Low-face coordinate of every extended cell"""
        idx = np.arange(self.shape[axis]) - N_GHOST
        return self.origin[axis] + idx * self.spacing[axis]

    def cv_centers(self, variant: "GridVariant") -> List[np.ndarray]:
        """1-D coordinates of control-volume centers of a grid variant, per axis"""
        return [
            self.cell_faces(a) if variant.axis == a else self.cell_centers(a)
            for a in range(3)
        ]


# Boundary models
class InflowState(_Strict):
    velocity: Vector = (0.0, 0.0, 0.0)
    theta: float = Field(300.0, gt=0)
    rho: float = Field(1.0, gt=0)


class BoundarySpec(_Strict):
    xlo: BoundaryType = BoundaryType.PERIODIC
    xhi: BoundaryType = BoundaryType.PERIODIC
    ylo: BoundaryType = BoundaryType.PERIODIC
    yhi: BoundaryType = BoundaryType.PERIODIC
    zlo: BoundaryType = BoundaryType.SLIP_WALL
    zhi: BoundaryType = BoundaryType.SLIP_WALL
    eb_wall: EBWallType = EBWallType.NO_SLIP
    inflow: InflowState = Field(default_factory=InflowState)

    @model_validator(mode="after")
    def _check_periodic_pairs(self) -> "BoundarySpec":
        for axis, name in enumerate(AXIS_NAMES):
            lo = self.side(axis, 0) == BoundaryType.PERIODIC
            hi = self.side(axis, 1) == BoundaryType.PERIODIC
            if lo != hi:
                raise ValueError(f"periodic boundary on {name} must be set on both sides")
        return self

    def side(self, axis: int, high: int) -> BoundaryType:
        return getattr(self, SIDE_NAMES[2 * axis + high])

    @property
    def periodic(self) -> Tuple[bool, bool, bool]:
        return tuple(self.side(a, 0) == BoundaryType.PERIODIC for a in range(3))


# Physics models
class FluidConstants(_Strict):
    R: float = Field(287.0, gt=0, description="dry gas constant, J/(kg K)")
    cp: float = Field(1004.5, gt=0, description="specific heat at constant pressure")
    p00: float = Field(1.0e5, gt=0, description="reference pressure, Pa")
    g: float = Field(9.81, ge=0, description="gravitational acceleration, m/s^2")
    mu: float = Field(0.0, ge=0, description="dynamic viscosity, kg/(m s)")
    stokes_lambda_sign: float = Field(1.0, description="lambda = sign * (2/3) mu")
    thermal_diffusivity: float = Field(0.0, ge=0, description="m^2/s")

    @model_validator(mode="after")
    def _check_gamma(self) -> "FluidConstants":
        if self.cp <= self.R:
            raise ValueError("cp must exceed R so that gamma > 1")
        return self

    @property
    def cv(self) -> float:
        return self.cp - self.R

    @property
    def gamma(self) -> float:
        return self.cp / self.cv

    @property
    def lam(self) -> float:
        return self.stokes_lambda_sign * (2.0 / 3.0) * self.mu


class ViscosityMask(_Strict):
    """Viscosity switched off near an obstacle with a cosine ramp"""

    center: Vector
    inner_radius: float = Field(..., gt=0)
    ramp: float = Field(..., gt=0)


class DampingSpec(_Strict):
    rayleigh_thickness: float = Field(0.0, ge=0)
    rayleigh_coefficient: float = Field(0.0, ge=0)
    damp_horizontal: bool = False
    sponge_sides: List[str] = Field(default_factory=list)
    sponge_thickness: float = Field(0.0, ge=0)
    sponge_strength: float = Field(0.0, ge=0)
    nondimensional: bool = True
    reference_velocity: Vector = (0.0, 0.0, 0.0)

    @field_validator("sponge_sides")
    @classmethod
    def _known_sides(cls, sides: List[str]) -> List[str]:
        for side in sides:
            if side not in SIDE_NAMES:
                raise ValueError(f"unknown sponge side '{side}'")
        return sides

    @property
    def active(self) -> bool:
        rayleigh = self.rayleigh_thickness > 0 and self.rayleigh_coefficient > 0
        sponge = bool(self.sponge_sides) and self.sponge_thickness > 0 and self.sponge_strength > 0
        return rayleigh or sponge


class StepConfig(_Strict):
    cfl: float = Field(0.5, gt=0, le=1)
    scheme: Optional[TimeScheme] = None
    poisson_tol: Optional[float] = Field(None, gt=0)
    poisson_max_iter: Optional[int] = Field(None, ge=1)
    max_steps: Optional[int] = Field(None, ge=0)
    end_time: Optional[float] = Field(None, ge=0)
    max_dt: float = Field(1.0e30, gt=0)


# Case models
class SurfaceSpec(_Strict):
    name: SurfaceKind = SurfaceKind.NONE
    center: Optional[Vector] = None
    radius: Optional[float] = None
    normal: Optional[Vector] = None
    point: Optional[Vector] = None
    width: Optional[float] = None
    height: Optional[float] = None
    peak_height: Optional[float] = None
    half_width: Optional[float] = None
    x0: float = 0.0


class ProbeSpec(_Strict):
    name: str
    variable: str = "u"
    location: Vector


class LineSpec(_Strict):
    """Axis-aligned sampling line through `point`"""

    name: str
    variable: str = "u"
    axis: int = Field(2, ge=0, le=2)
    point: Vector
    start: Optional[float] = None
    stop: Optional[float] = None
    time_average: bool = False


class OutputSpec(_Strict):
    directory: str = "output"
    cadence: int = Field(0, ge=0)
    format: OutputFormat = OutputFormat.VTK
    variables: List[str] = Field(default_factory=lambda: ["rho", "theta", "u", "v", "w"])
    geometry: bool = False

    @field_validator("variables", mode="before")
    @classmethod
    def _split_single(cls, value):
        if isinstance(value, str):
            return [value]
        return value


class InitialCondition(_Strict):
    velocity: Vector = (0.0, 0.0, 0.0)
    theta: float = Field(300.0, gt=0)


class CaseInfo(_Strict):
    name: str = "custom"
    length_scale: float = Field(1.0, gt=0)
    velocity_scale: float = Field(1.0, gt=0)
    spinup_time: float = Field(0.0, ge=0)
    obstacle_center: Optional[Vector] = None
    obstacle_radius: Optional[float] = None


class SolverConfig(_Strict):
    model: FlowModel = FlowModel.COMPRESSIBLE
    wsrd: bool = True
    forcing: Vector = (0.0, 0.0, 0.0)
    grid: GridSpec
    surface: SurfaceSpec = Field(default_factory=SurfaceSpec)
    boundaries: BoundarySpec = Field(default_factory=BoundarySpec)
    constants: FluidConstants = Field(default_factory=FluidConstants)
    damping: DampingSpec = Field(default_factory=DampingSpec)
    step: StepConfig = Field(default_factory=StepConfig)
    output: OutputSpec = Field(default_factory=OutputSpec)
    initial: InitialCondition = Field(default_factory=InitialCondition)
    viscosity_mask: Optional[ViscosityMask] = None
    case: CaseInfo = Field(default_factory=CaseInfo)
    probes: List[ProbeSpec] = Field(default_factory=list)
    lines: List[LineSpec] = Field(default_factory=list)

    @model_validator(mode="before")
    @classmethod
    def _periodic_from_boundaries(cls, data):
        if not isinstance(data, dict):
            return data
        grid = data.get("grid")
        boundaries = data.get("boundaries")
        if isinstance(grid, dict) and "periodic" not in grid:
            try:
                spec = boundaries if isinstance(boundaries, BoundarySpec) else BoundarySpec(**(boundaries or {}))
            except (TypeError, ValueError):
                return data
            data = dict(data)
            data["grid"] = {**grid, "periodic": spec.periodic}
        return data

    @model_validator(mode="after")
    def _check_consistency(self) -> "SolverConfig":
        if tuple(self.grid.periodic) != tuple(self.boundaries.periodic):
            raise ValueError(
                f"grid periodic flags {self.grid.periodic} disagree with boundaries {self.boundaries.periodic}"
            )
        lengths = self.grid.lengths
        if self.damping.rayleigh_thickness >= lengths[2] and self.damping.rayleigh_coefficient > 0:
            raise ValueError("rayleigh_thickness must be smaller than the domain height")
        for side in self.damping.sponge_sides:
            axis = SIDE_NAMES.index(side) // 2
            if self.damping.sponge_thickness >= lengths[axis]:
                raise ValueError(f"sponge_thickness must be smaller than the domain extent along {side}")
        if self.step.scheme is None:
            scheme = (
                TimeScheme.RK3_COMPRESSIBLE
                if self.model == FlowModel.COMPRESSIBLE
                else TimeScheme.RK2_ANELASTIC
            )
            self.step.scheme = scheme
        return self


# Report models
class ErrorReport(BaseModel):
    l2: float = Field(..., ge=0)
    linf: float = Field(..., ge=0)
    count: int = Field(..., ge=0)
    relative_l2: Optional[float] = Field(None, ge=0)

    def to_text(self, prefix: str = "") -> str:
        lines = [f"{prefix}l2={self.l2:.12e}", f"{prefix}linf={self.linf:.12e}", f"{prefix}count={self.count}"]
        if self.relative_l2 is not None:
            lines.append(f"{prefix}relative_l2={self.relative_l2:.12e}")
        return "\n".join(lines) + "\n"


class RunSummary(BaseModel):
    steps: int
    time: float
    exit_status: int = 0
    outputs: List[str] = Field(default_factory=list)
    diagnostics: Dict[str, float] = Field(default_factory=dict)
