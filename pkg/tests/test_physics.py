"""
Test the equation of state, hydrostatic background, buoyancy and viscous stress
"""

import numpy as np
import pytest

from src.errors import PhysicsError
from src.models import N_GHOST, FlowModel, FluidConstants, GridSpec, ViscosityMask
from src.physics import (
    buoyancy, density_from_pressure, eos_pressure, face_density, hydrostatic_background,
    primitives, stress_tensor, viscosity_field,
)

G = N_GHOST


class TestEquationOfState:
    """Test pressure from rho*theta"""

    def test_reference_pressure(self):
        """Test R rho theta = P00 returns P00"""
        constants = FluidConstants()
        assert eos_pressure(constants.p00 / constants.R, constants) == pytest.approx(1.0e5)

    def test_doubled(self):
        """Test the gamma power law"""
        constants = FluidConstants()
        p = eos_pressure(2.0 * constants.p00 / constants.R, constants)
        assert constants.gamma == pytest.approx(1.4, abs=1e-3)
        assert p == pytest.approx(1.0e5 * 2.0 ** constants.gamma)

    def test_inverse(self):
        """Test density_from_pressure inverts the equation of state"""
        constants = FluidConstants()
        rho = density_from_pressure(np.array([8.0e4]), np.array([310.0]), constants)
        assert eos_pressure(rho * 310.0, constants)[0] == pytest.approx(8.0e4)

    @pytest.mark.parametrize("value", [0.0, -1.0, np.nan])
    def test_invalid_state(self, value):
        """Test non-positive or non-finite rho*theta is rejected"""
        with pytest.raises(PhysicsError):
            eos_pressure(np.array([1.0, value]), FluidConstants())


class TestHydrostaticBackground:
    """Test the discretely balanced background"""

    def test_balance(self):
        """Test the discrete hydrostatic residual vanishes"""
        constants = FluidConstants()
        grid = GridSpec(n=(1, 1, 20), extent=(100.0, 100.0, 2000.0))
        background = hydrostatic_background(300.0, constants, grid)
        assert np.max(np.abs(background.balance_residual(constants))) < 1e-10
        assert np.all(np.diff(background.p0) < 0.0)
        assert np.all(np.diff(background.rho0) < 0.0)

    def test_no_gravity_is_uniform(self, constants, channel_grid):
        """Test g = 0 gives a uniform background at P00"""
        background = hydrostatic_background(300.0, constants, channel_grid)
        assert np.allclose(background.p0, 1.0e5)
        assert np.allclose(background.rho0, 1.0e5 / (287.0 * 300.0))

    def test_theta_profile(self, channel_grid):
        """Test a callable potential temperature profile"""
        background = hydrostatic_background(lambda z: 300.0 + 0.01 * z, FluidConstants(), channel_grid)
        assert background.theta0[G] == pytest.approx(300.0 + 0.01 * 0.125)

    def test_negative_theta(self, channel_grid):
        """Test a non-positive background temperature is rejected"""
        with pytest.raises(PhysicsError):
            hydrostatic_background(-1.0, FluidConstants(), channel_grid)


class TestBuoyancy:
    """Test the vertical buoyancy source"""

    def test_zero_at_background(self, channel_grid, channel_bcs, state_factory):
        """Test the background state carries no buoyancy"""
        constants = FluidConstants()
        state = state_factory(channel_grid, constants, channel_bcs)
        assert np.allclose(buoyancy(state, constants), 0.0)

    def test_compressible_density_excess(self, channel_grid, channel_bcs, state_factory):
        """Test a uniform density excess sinks"""
        constants = FluidConstants()
        state = state_factory(channel_grid, constants, channel_bcs)
        state.rho += 0.01
        force = buoyancy(state, constants)
        assert force[G, G, G + 4] == pytest.approx(-0.0981)

    def test_anelastic_warm_anomaly(self, channel_grid, channel_bcs, state_factory):
        """Test a warm anomaly rises"""
        constants = FluidConstants()
        state = state_factory(channel_grid, constants, channel_bcs, model=FlowModel.ANELASTIC)
        state.rho_theta *= 1.01
        force = buoyancy(state, constants)
        assert np.all(force[G:G + 6, G:G + 4, G + 1:G + 8] > 0.0)


class TestPrimitives:
    """Test face densities and primitive recovery"""

    def test_face_density_mean(self, channel_grid, constants, channel_bcs, state_factory):
        """Test the face density averages the adjacent cells"""
        state = state_factory(channel_grid, constants, channel_bcs)
        state.rho[G] = 1.0
        state.rho[G + 1] = 3.0
        assert face_density(state, None, 0)[G + 1, G, G] == pytest.approx(2.0)

    def test_uniform_flow(self, channel_grid, constants, channel_bcs, state_factory):
        """Test velocity and pressure perturbation of a uniform flow"""
        state = state_factory(channel_grid, constants, channel_bcs, velocity=(2.0, -1.0, 0.0))
        prims = primitives(state, None, constants)
        assert np.allclose(prims.velocity[0][G:G + 6, G:G + 4, G:G + 8], 2.0)
        assert np.allclose(prims.velocity[1][G:G + 6, G:G + 4, G:G + 8], -1.0)
        assert np.allclose(prims.p_pert, 0.0, atol=1e-8)


class TestStress:
    """Test the viscous stress tensor"""

    def test_shear(self):
        """Test simple shear gives mu times the rate"""
        constants = FluidConstants(mu=2.0)
        grad = np.zeros((3, 3))
        grad[0, 2] = 0.5
        tau = stress_tensor(grad, constants)
        assert tau[0, 2] == pytest.approx(1.0)
        assert tau[2, 0] == pytest.approx(1.0)
        assert tau[0, 0] == 0.0

    def test_dilation(self):
        """Test uniform dilation adds the bulk term on the diagonal"""
        constants = FluidConstants(mu=1.5)
        d = 0.2
        tau = stress_tensor(d * np.eye(3), constants)
        lam = (2.0 / 3.0) * 1.5
        assert np.allclose(np.diag(tau), 2.0 * 1.5 * d + lam * 3.0 * d)

    def test_sign_switch(self):
        """Test the bulk coefficient sign flips with the constant"""
        constants = FluidConstants(mu=1.0, stokes_lambda_sign=-1.0)
        tau = stress_tensor(np.eye(3), constants)
        assert np.allclose(np.diag(tau), 2.0 - 2.0)

    def test_symmetric(self):
        """Test the tensor is symmetric for any gradient"""
        rng = np.random.default_rng(3)
        grad = rng.normal(size=(4, 3, 3))
        tau = stress_tensor(grad, FluidConstants(mu=0.7), mu=np.full(4, 0.7))
        assert np.allclose(tau, np.swapaxes(tau, -1, -2))


class TestViscosityField:
    """Test the obstacle viscosity mask"""

    def test_mask(self, channel_grid):
        """Test viscosity vanishes inside the inner radius and recovers outside the ramp"""
        constants = FluidConstants(mu=1.0)
        mask = ViscosityMask(center=(0.0, 0.0, 0.0), inner_radius=0.5, ramp=0.25)
        mu = viscosity_field(channel_grid, constants, mask)
        assert mu[G, G, G] == 0.0
        assert mu[G + 5, G + 3, G + 7] == pytest.approx(1.0)
        assert np.all((mu >= 0.0) & (mu <= 1.0))
