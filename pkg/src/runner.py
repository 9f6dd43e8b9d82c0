"""
Run orchestration: setup, the stepping loop and output scheduling
"""

import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .cases import make_surface
from .config import get_settings
from .diagnostics import (
    VARIABLES, ProbeSeries, TimeAverage, dominant_frequency, error_norms, hemisphere_velocity_cartesian,
    sample_line, sample_points, small_cell_momentum_ratio, variable_field,
)
from .errors import ConfigError, DiagnosticsError, SolverAbort
from .fields import StaggeredState, dump_fields, fill_ghost
from .fluxes import FluxContext, build_flux_context
from .geometry import GeometrySet, build_geometry_set
from .models import FlowModel, GridVariant, LineSpec, RunSummary, SolverConfig, SurfaceKind
from .physics import BackgroundProfile, hydrostatic_background
from .timeint import Hook, StepMachinery, advance, build_poisson_system, compute_dt
from .wsrd import NeighborhoodMap, build_all_neighborhoods

logger = logging.getLogger(__name__)


@dataclass
class Run:
    """Everything built from a config before the first step"""

    config: SolverConfig
    geoms: GeometrySet
    state: StaggeredState
    machinery: StepMachinery
    maps: Optional[Dict[GridVariant, NeighborhoodMap]] = None

    @property
    def context(self) -> FluxContext:
        return self.machinery.context


def initial_state(config: SolverConfig, geoms: GeometrySet, background: BackgroundProfile) -> StaggeredState:
    """Background thermodynamics with a uniform initial velocity on the open faces"""
    grid = config.grid
    rho0 = np.broadcast_to(background.column(background.rho0), grid.shape).copy()
    theta0 = background.column(background.theta0)
    mom = []
    for a in range(3):
        rho_face = background.column(background.rho0_zface if a == 2 else background.rho0)
        m = np.broadcast_to(rho_face * config.initial.velocity[a], grid.shape).copy()
        m[geoms.faces[a].alpha <= 0.0] = 0.0
        mom.append(m)
    state = StaggeredState(
        grid=grid, model=config.model, rho=rho0, rho_theta=rho0 * theta0, mom=mom, background=background,
    )
    return fill_ghost(state, config.boundaries)


def build_run(config: SolverConfig, no_wsrd: bool = False, hooks: Sequence[Hook] = ()) -> Run:
    """Geometry on all four variants, WSRD maps, initial state and stepping operators"""
    started = time.perf_counter()
    grid = config.grid
    geoms = build_geometry_set(make_surface(config), grid)
    for geom in geoms.variants:
        logger.info(
            f"{geom.variant.value}: {int(geom.cut.sum())} cut, {int(geom.covered.sum())} covered, "
            f"{int(geom.regular.sum())} regular, fluid volume {geom.total_fluid_volume():.6e}"
        )

    maps = None
    if config.wsrd and not no_wsrd:
        maps = build_all_neighborhoods(geoms)
    else:
        logger.warning("Weighted state redistribution is disabled")

    background = hydrostatic_background(config.initial.theta, config.constants, grid)
    state = initial_state(config, geoms, background)
    context = build_flux_context(
        geoms, config.constants, config.boundaries, config.forcing, config.viscosity_mask,
    )
    poisson = None
    if config.model == FlowModel.ANELASTIC:
        poisson = build_poisson_system(geoms.cell, config.boundaries)

    machinery = StepMachinery(
        context=context,
        boundaries=config.boundaries,
        damping=config.damping,
        maps=maps,
        poisson=poisson,
        poisson_tol=config.step.poisson_tol,
        poisson_max_iter=config.step.poisson_max_iter,
        hooks=list(hooks),
    )
    logger.info(f"Setup finished in {time.perf_counter() - started:.2f}s")
    return Run(config=config, geoms=geoms, state=state, machinery=machinery, maps=maps)


def total_mass(state: StaggeredState, geoms: GeometrySet) -> float:
    wet = geoms.cell.update_mask()
    return float(np.sum(geoms.cell.volume[wet] * state.rho[wet]))


def max_speed(state: StaggeredState, geoms: GeometrySet, constants) -> float:
    speed = 0.0
    for name in ("u", "v", "w"):
        variant, values = variable_field(state, geoms, constants, name)
        mask = geoms[variant].update_mask()
        if np.any(mask):
            speed = max(speed, float(np.max(np.abs(values[mask]))))
    return speed


def _line_points(state: StaggeredState, line: LineSpec, along: np.ndarray) -> np.ndarray:
    """Physical positions of the control volumes returned by sample_line"""
    coords = state.grid.cv_centers(VARIABLES[line.variable])
    points = np.empty((len(along), 3))
    for a in range(3):
        if a == line.axis:
            points[:, a] = along
        else:
            points[:, a] = coords[a][int(np.argmin(np.abs(coords[a] - line.point[a])))]
    return points


def hemisphere_report(state: StaggeredState, geoms: GeometrySet, config: SolverConfig,
                      z_range: Tuple[float, float] = (1.0, 6.0)):
    """Error of u along the vertical line through x = 5 against potential flow"""
    center = config.surface.center
    radius = config.surface.radius
    u_inf = config.boundaries.inflow.velocity[0]
    line = LineSpec(name="u_check", variable="u", axis=2, point=(center[0], center[1], 0.0),
                    start=z_range[0], stop=z_range[1])
    along, values, alpha = sample_line(state, geoms, config.constants, line)
    points = _line_points(state, line, along)
    r = np.linalg.norm(points - np.asarray(center), axis=1)
    region = (alpha > 0.0) & (r >= radius)
    exact = np.zeros_like(values)
    exact[region] = hemisphere_velocity_cartesian(points[region], center, radius, u_inf)[:, 0]
    return error_norms(values, exact, region)


def crest_radial_velocity(state: StaggeredState, geoms: GeometrySet, config: SolverConfig,
                          samples: int = 2) -> float:
    """Largest |u_r| at the first fluid z-faces above the hemisphere crest"""
    center = np.asarray(config.surface.center, dtype=float)
    radius = config.surface.radius
    line = LineSpec(name="crest", variable="w", axis=2, point=(center[0], center[1], 0.0),
                    start=center[2] + radius)
    along, _, alpha = sample_line(state, geoms, config.constants, line)
    points = _line_points(state, line, along)[alpha > 0.0][:samples]
    if len(points) == 0:
        raise DiagnosticsError("no fluid samples above the crest")
    velocity = np.stack(
        [sample_points(state, geoms, config.constants, name, points) for name in ("u", "v", "w")], axis=-1,
    )
    rel = points - center
    u_r = np.einsum("pk,pk->p", velocity, rel / np.linalg.norm(rel, axis=1)[:, None])
    return float(np.max(np.abs(u_r)))


class OutputWriter:
    """Probe series, time averages, field dumps and the final diagnostics file"""

    def __init__(self, config: SolverConfig, directory: Path):
        self.config = config
        self.directory = directory
        self.probes = [ProbeSeries(p.name, p.variable, p.location) for p in config.probes]
        self.averages = {line.name: TimeAverage() for line in config.lines if line.time_average}
        self.written: List[str] = []

    def record(self, state: StaggeredState, geoms: GeometrySet, dt: float) -> None:
        constants = self.config.constants
        for probe in self.probes:
            probe.record(state, geoms, constants)
        if state.time < self.config.case.spinup_time:
            return
        for line in self.config.lines:
            if line.time_average and dt > 0.0:
                _, values, _ = sample_line(state, geoms, constants, line)
                self.averages[line.name].add(values, dt)

    def fields(self, state: StaggeredState, geoms: GeometrySet) -> None:
        cadence = self.config.output.cadence
        if cadence <= 0 or state.step % cadence:
            return
        arrays = {
            name: variable_field(state, geoms, self.config.constants, name)
            for name in self.config.output.variables
        }
        stem = self.directory / "fields" / f"step_{state.step:06d}"
        paths = dump_fields(stem, state.grid, arrays, self.config.output.format)
        self.written.extend(str(p) for p in paths)

    def geometry(self, run: Run) -> None:
        for geom in run.geoms.variants:
            path = geom.export(self.directory / f"geometry_{geom.variant.value}.txt")
            self.written.append(str(path))
        if run.maps:
            for variant, nmap in run.maps.items():
                self.written.append(str(nmap.dump(self.directory / f"wsrd_{variant.value}.txt")))

    def finish(self, state: StaggeredState, geoms: GeometrySet, diagnostics: Dict[str, float]) -> None:
        constants = self.config.constants
        for probe in self.probes:
            self.written.append(str(probe.write_csv(self.directory / "probes" / f"{probe.name}.csv")))
        for line in self.config.lines:
            along, values, alpha = sample_line(state, geoms, constants, line)
            columns = [along, values, alpha]
            header = f"s,{line.variable},alpha"
            average = self.averages.get(line.name)
            if average is not None and average.duration > 0.0:
                columns.append(average.mean)
                header += ",mean"
            path = self.directory / "lines" / f"{line.name}.csv"
            path.parent.mkdir(parents=True, exist_ok=True)
            np.savetxt(path, np.column_stack(columns), delimiter=",", fmt="%.12e", header=header, comments="")
            self.written.append(str(path))

        path = self.directory / "diagnostics.txt"
        with open(path, "w", encoding="utf-8") as handle:
            for key, value in diagnostics.items():
                handle.write(f"{key}={value!r}\n")
        self.written.append(str(path))


def _case_diagnostics(run: Run, writer: OutputWriter, diagnostics: Dict[str, float]) -> None:
    config, state, geoms = run.config, run.state, run.geoms
    if config.surface.name == SurfaceKind.HEMISPHERE and config.boundaries.inflow.velocity[0] > 0.0:
        try:
            report = hemisphere_report(state, geoms, config)
        except DiagnosticsError as exc:
            logger.warning(f"Hemisphere error report skipped: {exc}")
        else:
            diagnostics["u_l2"] = report.l2
            diagnostics["u_linf"] = report.linf
            if report.relative_l2 is not None:
                diagnostics["u_relative_l2"] = report.relative_l2
        try:
            diagnostics["crest_radial_velocity"] = crest_radial_velocity(state, geoms, config)
        except DiagnosticsError as exc:
            logger.warning(f"Crest velocity skipped: {exc}")
    for probe in writer.probes:
        if probe.variable not in ("v", "w"):
            continue
        try:
            freq, strouhal = dominant_frequency(
                probe, config.case.spinup_time, config.case.length_scale, config.case.velocity_scale,
            )
        except DiagnosticsError as exc:
            logger.info(f"No spectrum for probe {probe.name}: {exc}")
            continue
        diagnostics[f"{probe.name}_frequency"] = freq
        diagnostics[f"{probe.name}_strouhal"] = strouhal


def _dump_abort(state: StaggeredState, directory: Path) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / "abort_state.npz"
    np.savez(
        path, rho=state.rho, rho_theta=state.rho_theta,
        mom_x=state.mom[0], mom_y=state.mom[1], mom_z=state.mom[2],
        time=state.time, step=state.step,
    )
    return path


def run_case(config: SolverConfig, steps: Optional[int] = None, out: Optional[Union[str, Path]] = None,
             no_wsrd: bool = False, hooks: Sequence[Hook] = ()) -> RunSummary:
    """Advance a configured case and write its outputs"""
    max_steps = steps if steps is not None else config.step.max_steps
    end_time = None if steps is not None else config.step.end_time
    if max_steps is None and end_time is None:
        raise ConfigError("run needs a step count or an end time", "step")

    directory = Path(out or config.output.directory or get_settings().OUTPUT_DIR)
    directory.mkdir(parents=True, exist_ok=True)
    run = build_run(config, no_wsrd=no_wsrd, hooks=hooks)
    writer = OutputWriter(config, directory)
    if config.output.geometry:
        writer.geometry(run)

    geoms = run.geoms
    state = run.state
    mass0 = total_mass(state, geoms)
    writer.record(state, geoms, 0.0)
    writer.fields(state, geoms)

    while True:
        if max_steps is not None and state.step >= max_steps:
            break
        if end_time is not None and state.time >= end_time * (1.0 - 1.0e-12):
            break
        dt = compute_dt(
            state, geoms, config.step.cfl, config.constants, run.context.mu, config.step.max_dt,
            eb_gradients=run.context.eb_gradients,
        )
        if end_time is not None:
            dt = min(dt, end_time - state.time)
        try:
            state = advance(state, dt, run.machinery)
        except SolverAbort as exc:
            exc.dump_path = str(_dump_abort(state, directory))
            logger.error(f"Step {state.step + 1} aborted at t={state.time:.6e}: {exc} (state in {exc.dump_path})")
            raise
        run.state = state
        poisson = run.machinery.last_poisson
        solve = f", poisson {poisson.iterations} it / {poisson.residual:.2e}" if poisson else ""
        logger.info(
            f"step {state.step}: t={state.time:.6e} dt={dt:.4e} "
            f"max|u|={max_speed(state, geoms, config.constants):.4e}{solve}"
        )
        writer.record(state, geoms, dt)
        writer.fields(state, geoms)

    diagnostics: Dict[str, float] = {
        "steps": float(state.step),
        "time": float(state.time),
        "max_speed": max_speed(state, geoms, config.constants),
        "small_cell_momentum_ratio": small_cell_momentum_ratio(state, geoms),
    }
    if config.model == FlowModel.COMPRESSIBLE:
        mass = total_mass(state, geoms)
        diagnostics["mass"] = mass
        diagnostics["mass_change"] = (mass - mass0) / mass0 if mass0 else 0.0
    if run.machinery.last_poisson is not None:
        diagnostics["poisson_iterations"] = float(run.machinery.last_poisson.iterations)
        diagnostics["poisson_residual"] = run.machinery.last_poisson.residual
    _case_diagnostics(run, writer, diagnostics)
    writer.finish(state, geoms, diagnostics)
    logger.info(f"Run finished: {state.step} steps, t={state.time:.6e}, outputs in {directory}")
    return RunSummary(steps=state.step, time=state.time, outputs=writer.written, diagnostics=diagnostics)
