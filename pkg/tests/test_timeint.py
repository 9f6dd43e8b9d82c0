"""
Test time-step control, the Poisson projection and the Runge-Kutta drivers
"""

import numpy as np
import pytest

from src.diagnostics import eb_divergence
from src.errors import PoissonError, SolverAbort
from src.fields import fill_ghost
from src.fluxes import UpdateField, build_flux_context
from src.geometry import AgnesiRidge, NoSurface, SphereSurface, build_geometry_set
from src.models import N_GHOST, BoundarySpec, FlowModel, FluidConstants, GridSpec, InflowState
from src.timeint import (
    StepMachinery, advance, build_poisson_system, compute_dt, poisson_solve, project,
    rk2_step_anelastic, rk3_step_compressible,
)
from src.wsrd import build_all_neighborhoods

G = N_GHOST


@pytest.fixture
def machinery(open_geoms, constants, periodic_bcs):
    """Compressible machinery on the open periodic box with redistribution maps"""
    context = build_flux_context(open_geoms, constants, periodic_bcs)
    return StepMachinery(context=context, boundaries=periodic_bcs, maps=build_all_neighborhoods(open_geoms))


def _sine_state(grid, constants, bcs, state_factory, model):
    state = state_factory(grid, constants, bcs, model=model)
    x = grid.cell_faces(0).reshape(-1, 1, 1)
    state.mom[0] = state.rho * np.sin(2.0 * np.pi * x / 6.0) * np.ones(grid.shape)
    return fill_ghost(state, bcs)


class TestComputeDt:
    """Test the CFL time-step limit"""

    def test_acoustic_limit(self, open_geoms, periodic_grid, constants, periodic_bcs, state_factory):
        """Test dt = cfl dx / (|u| + c) for uniform flow"""
        state = state_factory(periodic_grid, constants, periodic_bcs, velocity=(2.0, 0.0, 0.0))
        rho = 1.0e5 / (287.0 * 300.0)
        c = np.sqrt(constants.gamma * 1.0e5 / rho)
        dt = compute_dt(state, open_geoms, 0.5, constants)
        assert dt == pytest.approx(0.5 * 1.0 / (2.0 + c), rel=1e-10)

    def test_anelastic_advective_limit(self, open_geoms, periodic_grid, constants, periodic_bcs, state_factory):
        """Test the anelastic limit ignores sound waves"""
        state = state_factory(periodic_grid, constants, periodic_bcs, model=FlowModel.ANELASTIC,
                              velocity=(0.0, 4.0, 0.0))
        assert compute_dt(state, open_geoms, 0.8, constants) == pytest.approx(0.2)

    def test_viscous_limit(self, open_geoms, periodic_grid, periodic_bcs, state_factory):
        """Test a large viscosity takes over the limit"""
        constants = FluidConstants(g=0.0, mu=1.0e4)
        state = state_factory(periodic_grid, constants, periodic_bcs)
        mu = np.full(periodic_grid.shape, 1.0e4)
        nu = 1.0e4 / state.rho[G, G, G]
        dt = compute_dt(state, open_geoms, 0.5, constants, mu=mu)
        assert dt == pytest.approx(0.5 / (6.0 * nu))

    def test_max_dt(self, open_geoms, periodic_grid, constants, periodic_bcs, state_factory):
        """Test the cap applies to a fluid at rest"""
        state = state_factory(periodic_grid, constants, periodic_bcs, model=FlowModel.ANELASTIC)
        assert compute_dt(state, open_geoms, 0.5, constants, max_dt=0.25) == 0.25

    @pytest.mark.parametrize("cfl", [0.0, -0.1, 1.5])
    def test_invalid_cfl(self, open_geoms, periodic_grid, constants, periodic_bcs, state_factory, cfl):
        """Test cfl outside (0, 1] is rejected"""
        state = state_factory(periodic_grid, constants, periodic_bcs)
        with pytest.raises(ValueError, match="cfl"):
            compute_dt(state, open_geoms, cfl, constants)


class TestProjection:
    """Test the cut-cell Poisson solve and projection"""

    def test_periodic_projection(self, open_geoms, periodic_grid, constants, periodic_bcs, state_factory):
        """Test a compressive velocity field is made divergence free"""
        state = _sine_state(periodic_grid, constants, periodic_bcs, state_factory, FlowModel.ANELASTIC)
        system = build_poisson_system(open_geoms.cell, periodic_bcs)
        assert system.singular
        state, result, _ = project(state, system, 1.0, tol=1e-13)
        assert result.residual <= 1e-13
        fill_ghost(state, periodic_bcs)
        interior = (slice(G, G + 6),) * 3
        assert np.max(np.abs(state.mom[0][interior])) < 1e-8
        assert np.max(np.abs(system.net_face_flux(state.mom)[interior])) < 1e-8

    def test_symmetric_operator(self, plane_geoms, channel_bcs):
        """Test the cut-cell operator is symmetric with a non-negative diagonal"""
        system = build_poisson_system(plane_geoms.cell, channel_bcs)
        A = system.matrix
        assert abs(A - A.T).max() < 1e-14
        assert np.all(A.diagonal() >= 0.0)

    def test_outflow_pins_potential(self):
        """Test an outflow side makes the system non-singular"""
        grid = GridSpec(n=(4, 4, 4), extent=(1.0, 1.0, 1.0))
        bcs = BoundarySpec(xlo="inflow", xhi="outflow", ylo="slip_wall", yhi="slip_wall")
        geoms = build_geometry_set(NoSurface(), grid)
        assert not build_poisson_system(geoms.cell, bcs).singular

    def test_not_converged(self, open_geoms, periodic_bcs):
        """Test an unconverged solve raises with its iteration count"""
        system = build_poisson_system(open_geoms.cell, periodic_bcs)
        rhs = np.random.default_rng(5).normal(size=len(system.unknowns))
        with pytest.raises(PoissonError) as exc:
            poisson_solve(system, rhs, tol=1e-14, max_iter=1)
        assert exc.value.iterations == 1

    def test_hemisphere_inflow_outflow(self, state_factory):
        """Test the projection leaves no divergence around a hemisphere in a through-flow channel"""
        grid = GridSpec(n=(12, 8, 8), extent=(3.0, 2.0, 2.0))
        rho = 1.0e5 / (287.0 * 300.0)
        bcs = BoundarySpec(xlo="inflow", xhi="outflow", ylo="slip_wall", yhi="slip_wall", eb_wall="free_slip",
                           inflow=InflowState(velocity=(1.0, 0.0, 0.0), rho=rho))
        geoms = build_geometry_set(SphereSurface((1.5, 1.0, 0.0), 0.6), grid)
        state = state_factory(grid, FluidConstants(g=0.0), bcs, model=FlowModel.ANELASTIC,
                              velocity=(1.0, 0.0, 0.0), geoms=geoms)
        scale = rho * 1.0 / grid.spacing[0]
        assert np.max(np.abs(eb_divergence(state, geoms))) > 1e-3 * scale
        system = build_poisson_system(geoms.cell, bcs)
        assert not system.singular
        project(state, system, 1.0, tol=1e-12)
        fill_ghost(state, bcs)
        assert np.max(np.abs(eb_divergence(state, geoms))) <= 1e-8 * scale


class TestRungeKutta:
    """Test the stage sequence and the step drivers"""

    def test_rk3_event_order(self, machinery, periodic_grid, constants, periodic_bcs, state_factory):
        """Test every compressible stage runs rhs, update, redistribution and damping"""
        events = []
        machinery.hooks.append(lambda event, stage: events.append(event))
        state = state_factory(periodic_grid, constants, periodic_bcs, velocity=(1.0, 0.0, 0.0))
        out = rk3_step_compressible(state, 1e-3, machinery)
        assert events == ["rhs", "update", "wsrd", "damping"] * 3
        assert out.step == 1
        assert out.time == pytest.approx(1e-3)

    def test_rk2_event_order(self, open_geoms, periodic_grid, constants, periodic_bcs, state_factory):
        """Test every anelastic stage ends with a projection"""
        context = build_flux_context(open_geoms, constants, periodic_bcs)
        machinery = StepMachinery(
            context=context, boundaries=periodic_bcs, maps=build_all_neighborhoods(open_geoms),
            poisson=build_poisson_system(open_geoms.cell, periodic_bcs), poisson_tol=1e-12,
        )
        events = []
        machinery.hooks.append(lambda event, stage: events.append(event))
        state = _sine_state(periodic_grid, constants, periodic_bcs, state_factory, FlowModel.ANELASTIC)
        out = rk2_step_anelastic(state, 1e-2, machinery)
        assert events == ["rhs", "update", "wsrd", "damping", "projection"] * 2
        assert machinery.last_poisson is not None
        divergence = machinery.poisson.net_face_flux(out.mom)[(slice(G, G + 6),) * 3]
        assert np.max(np.abs(divergence)) < 1e-8

    def test_model_mismatch(self, machinery, periodic_grid, constants, periodic_bcs, state_factory):
        """Test each driver refuses the other model"""
        state = state_factory(periodic_grid, constants, periodic_bcs, model=FlowModel.ANELASTIC)
        with pytest.raises(ValueError):
            rk3_step_compressible(state, 1e-3, machinery)

    @pytest.mark.slow
    def test_hydrostatic_rest(self, state_factory):
        """Test an atmosphere at rest stays at rest"""
        grid = GridSpec(n=(16, 16, 64), extent=(1600.0, 1600.0, 6400.0), periodic=(True, True, False))
        bcs = BoundarySpec()
        constants = FluidConstants()
        geoms = build_geometry_set(NoSurface(), grid)
        machinery = StepMachinery(context=build_flux_context(geoms, constants, bcs), boundaries=bcs)
        state = state_factory(grid, constants, bcs)
        for _ in range(100):
            dt = compute_dt(state, geoms, 0.5, constants)
            state = advance(state, dt, machinery)
        assert np.max(np.abs(state.mom[2] / state.rho)) < 1e-8
        assert state.step == 100

    def test_terrain_rest_with_redistribution(self, state_factory):
        """Test a stratified atmosphere at rest over a ridge stays at rest with redistribution on"""
        grid = GridSpec(n=(16, 1, 12), extent=(800.0, 50.0, 600.0), origin=(-400.0, 0.0, 0.0),
                        periodic=(True, True, False))
        bcs = BoundarySpec()
        constants = FluidConstants()
        geoms = build_geometry_set(AgnesiRidge(100.0, 100.0), grid)
        machinery = StepMachinery(context=build_flux_context(geoms, constants, bcs), boundaries=bcs,
                                  maps=build_all_neighborhoods(geoms))
        state = state_factory(grid, constants, bcs, geoms=geoms)
        for _ in range(10):
            state = advance(state, compute_dt(state, geoms, 0.5, constants), machinery)
        for a in range(3):
            mask = geoms.faces[a].update_mask()
            assert np.max(np.abs(state.mom[a][mask])) < 1e-8

    def test_outflow_column_divergence_free(self, state_factory):
        """Test the column next to an outflow side is divergence free after an anelastic step"""
        grid = GridSpec(n=(8, 4, 4), extent=(2.0, 1.0, 1.0), periodic=(False, True, False))
        bcs = BoundarySpec(xlo="inflow", xhi="outflow", inflow=InflowState(velocity=(1.0, 0.0, 0.0)))
        constants = FluidConstants(g=0.0)
        geoms = build_geometry_set(NoSurface(), grid)
        machinery = StepMachinery(
            context=build_flux_context(geoms, constants, bcs), boundaries=bcs,
            maps=build_all_neighborhoods(geoms), poisson=build_poisson_system(geoms.cell, bcs), poisson_tol=1e-12,
        )
        state = state_factory(grid, constants, bcs, model=FlowModel.ANELASTIC, velocity=(1.0, 0.0, 0.0))
        x = grid.cell_faces(0).reshape(-1, 1, 1)
        z = grid.cell_centers(2).reshape(1, 1, -1)
        state.mom[0] = state.mom[0] * (1.0 + 0.2 * x * np.sin(2.0 * np.pi * z))
        fill_ghost(state, bcs)
        out = rk2_step_anelastic(state, 0.05, machinery)
        divergence = machinery.poisson.net_face_flux(out.mom)[G:G + 8, G:G + 4, G:G + 4]
        assert np.max(np.abs(divergence[-1])) < 1e-8
        assert np.max(np.abs(divergence)) < 1e-8

    def test_negative_density_aborts(self, machinery, periodic_grid, constants, periodic_bcs, state_factory,
                                     mocker):
        """Test a stage producing negative density aborts the run"""
        state = state_factory(periodic_grid, constants, periodic_bcs)
        rates = {name: np.zeros(periodic_grid.shape) for name in state.prognostic()}
        rates["rho"] = np.full(periodic_grid.shape, -1.0e9)
        mocker.patch("src.timeint.compute_rhs", return_value=UpdateField(rates))
        with pytest.raises(SolverAbort, match="non-positive rho"):
            rk3_step_compressible(state, 1e-3, machinery)
