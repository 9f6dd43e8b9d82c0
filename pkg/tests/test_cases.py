"""
Test the preset case library
"""

import pytest

from src.cases import (
    AGNESI_CELLS, CYLINDER_STROUHAL, make_surface, parse_preset_name, preset, preset_tree,
)
from src.errors import ConfigError
from src.geometry import AgnesiRidge, BoxSurface, SphereSurface
from src.models import BoundaryType, EBWallType, FlowModel, TimeScheme


class TestPresetNames:
    """Test preset name parsing"""

    @pytest.mark.parametrize("name, expected", [
        ("agnesi", ("agnesi", None)),
        ("Hemisphere", ("hemisphere", None)),
        ("squareCylinder(4)", ("squarecylinder", 4)),
        (" squareCylinder ( 5 ) ", ("squarecylinder", 5)),
    ])
    def test_parse(self, name, expected):
        """Test accepted spellings"""
        assert parse_preset_name(name) == expected

    @pytest.mark.parametrize("name", ["bogus", "squareCylinder(", "agnesi(3)", "squareCylinder(7)"])
    def test_rejected(self, name):
        """Test unknown, malformed and out-of-range names"""
        with pytest.raises(ConfigError):
            preset_tree(name)


class TestAgnesi:
    """Test the ridge preset"""

    def test_values(self):
        """Test grid, physics and damping of the ridge case"""
        config = preset("agnesi")
        assert config.model == FlowModel.COMPRESSIBLE
        assert config.step.scheme == TimeScheme.RK3_COMPRESSIBLE
        assert config.grid.n == AGNESI_CELLS
        assert config.grid.spacing[0] == pytest.approx(595.0 / 120.0)
        assert config.grid.periodic == (True, True, False)
        assert config.constants.mu == 60.0
        assert config.constants.g == 9.81
        assert config.forcing[0] == pytest.approx(0.005)
        assert config.damping.rayleigh_thickness == 50.0
        assert config.damping.rayleigh_coefficient == 0.25
        assert config.boundaries.eb_wall == EBWallType.NO_SLIP
        assert [p.name for p in config.probes] == ["u_z110", "u_z300", "u_z500"]

    def test_surface(self):
        """Test the ridge surface"""
        surface = make_surface(preset("agnesi"))
        assert isinstance(surface, AgnesiRidge)


class TestHemisphere:
    """Test the hemisphere preset"""

    def test_values(self):
        """Test the inflow, free-slip wall and viscosity mask"""
        config = preset("hemisphere")
        assert config.grid.n == (256, 256, 256)
        assert config.boundaries.xlo == BoundaryType.INFLOW
        assert config.boundaries.xhi == BoundaryType.OUTFLOW
        assert config.boundaries.eb_wall == EBWallType.FREE_SLIP
        assert config.boundaries.inflow.velocity == (10.0, 0.0, 0.0)
        assert config.constants.g == 0.0
        assert config.viscosity_mask is not None
        assert config.case.obstacle_radius == 0.5
        assert isinstance(make_surface(config), SphereSurface)

    def test_overrides(self):
        """Test overrides shrink the grid"""
        config = preset("hemisphere", ["grid.n=32 32 32", "step.max_steps=2"])
        assert config.grid.n == (32, 32, 32)
        assert config.grid.spacing == pytest.approx((10.0 / 32,) * 3)
        assert config.step.max_steps == 2

    def test_bad_override(self):
        """Test an invalid override names its key"""
        with pytest.raises(ConfigError, match="constants"):
            preset("hemisphere", ["constants.mu=-1"])


class TestSquareCylinder:
    """Test the square-cylinder preset"""

    @pytest.mark.parametrize("aspect", [3, 4, 5])
    def test_values(self, aspect):
        """Test the anelastic setup for every aspect ratio"""
        config = preset(f"squareCylinder({aspect})")
        assert config.model == FlowModel.ANELASTIC
        assert config.step.scheme == TimeScheme.RK2_ANELASTIC
        assert config.constants.mu == pytest.approx(1.0 / 250.0)
        assert config.surface.height == aspect
        assert config.boundaries.zlo == BoundaryType.NO_SLIP_WALL
        assert config.case.spinup_time == 100.0
        assert aspect in CYLINDER_STROUHAL
        assert isinstance(make_surface(config), BoxSurface)

    def test_default_aspect(self):
        """Test the bare name selects the lowest cylinder"""
        assert preset("squareCylinder").surface.height == 3
