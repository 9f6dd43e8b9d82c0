"""
Test cut-cell geometry on the cell-centered and staggered grids
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.errors import GeometryError, UnsupportedTopologyError
from src.geometry import (
    CellClass, FunctionSurface, NoSurface, PlaneSurface, SphereSurface, build_geometry_set,
    builtin_surface, clip_cell, interior_slices, shift_down, shift_up,
)
from src.models import N_GHOST, GridSpec, GridVariant, SurfaceKind, SurfaceSpec

G = N_GHOST


def _walled(n, extent):
    return GridSpec(n=n, extent=extent, periodic=(False, False, False))


class TestHorizontalPlane:
    """Test a flat floor at z = 0.3 on 0.25 spacing"""

    def test_cell_fractions(self, plane_geoms):
        """Test volume and area fractions of the cut layer"""
        cell = plane_geoms.cell
        assert cell.cls[G + 1, G, G] == CellClass.COVERED
        assert cell.alpha[G + 1, G, G + 1] == pytest.approx(0.8, abs=1e-12)
        assert cell.cls[G + 1, G, G + 1] == CellClass.CUT
        assert cell.alpha[G + 1, G, G + 2] == 1.0
        assert cell.beta[0][G + 1, G, G + 1] == pytest.approx(0.8, abs=1e-12)
        assert cell.beta[2][G + 1, G, G + 1] == 0.0
        assert cell.beta[2][G + 1, G, G + 2] == 1.0

    def test_cut_cell_moments(self, plane_geoms):
        """Test centroid offset, EB area and the outward EB normal"""
        cell = plane_geoms.cell
        index = (G + 2, G + 1, G + 1)
        assert cell.vol_centroid[index] == pytest.approx([0.0, 0.0, 0.1], abs=1e-12)
        assert cell.eb_area[index] == pytest.approx(0.0625, abs=1e-12)
        # points from the fluid into the solid
        assert cell.eb_normal[index] == pytest.approx([0.0, 0.0, -1.0], abs=1e-12)

    def test_staggered_fractions(self, plane_geoms):
        """Test the staggered volumes built from half cells"""
        zface = plane_geoms[GridVariant.ZFACE]
        assert zface.alpha[G, G, G] == 0.0
        assert zface.alpha[G, G, G + 1] == pytest.approx(0.3, abs=1e-12)
        assert zface.alpha[G, G, G + 2] == pytest.approx(1.0)
        xface = plane_geoms[GridVariant.XFACE]
        assert xface.alpha[G, G, G + 1] == pytest.approx(0.8, abs=1e-12)

    def test_closedness_all_variants(self, plane_geoms):
        """Test the closedness identity on every variant"""
        for geom in plane_geoms.variants:
            assert np.max(np.abs(geom.closedness_residual())) < 1e-12


class TestObliquePlane:
    """Test a tilted floor z = 0.53 - 0.2 x"""

    @pytest.fixture
    def geoms(self):
        grid = _walled((6, 4, 8), (1.5, 1.0, 2.0))
        return build_geometry_set(PlaneSurface((0.2, 0.0, 1.0), (0.0, 0.0, 0.53)), grid)

    def test_total_fluid_volume(self, geoms):
        """Test the analytic fluid volume"""
        assert geoms.cell.total_fluid_volume() == pytest.approx(2.43, abs=1e-12)

    def test_area_fraction(self, geoms):
        """Test beta on the face x = 0.75 of the cut layer"""
        assert geoms.cell.beta[0][G + 3, G, G + 1] == pytest.approx(0.48, abs=1e-12)

    def test_closedness_all_variants(self, geoms):
        """Test the closedness identity on every variant"""
        for geom in geoms.variants:
            assert np.max(np.abs(geom.closedness_residual())) < 1e-12

    def test_fractions_in_range(self, geoms):
        """Test alpha and beta stay in [0, 1]"""
        for geom in geoms.variants:
            assert geom.alpha.min() >= 0.0 and geom.alpha.max() <= 1.0
            for a in range(3):
                assert geom.beta[a].min() >= 0.0 and geom.beta[a].max() <= 1.0 + 1e-14


class TestSphere:
    """Test the sphere volume and its convergence"""

    @staticmethod
    def _error(n):
        grid = _walled((n, n, n), (1.0, 1.0, 1.0))
        geoms = build_geometry_set(SphereSurface((0.5, 0.5, 0.5), 0.31), grid)
        exact = 1.0 - 4.0 / 3.0 * np.pi * 0.31 ** 3
        return abs(geoms.cell.total_fluid_volume() - exact)

    def test_volume_at_16(self):
        """Test the fluid volume at 16 cells per edge"""
        assert self._error(16) < 5e-3

    def test_volume_converges(self):
        """Test the error drops under refinement"""
        assert self._error(16) < self._error(8)

    @settings(deadline=None, max_examples=10)
    @given(
        cx=st.floats(0.3, 0.7), cy=st.floats(0.3, 0.7), cz=st.floats(0.3, 0.7),
        radius=st.floats(0.1, 0.25),
    )
    def test_staggered_volume_matches_cells(self, cx, cy, cz, radius):
        """Test that every periodic staggered grid holds the cell-centered fluid volume"""
        grid = GridSpec(n=(8, 8, 8), extent=(1.0, 1.0, 1.0), periodic=(True, True, True))
        geoms = build_geometry_set(SphereSurface((cx, cy, cz), radius), grid)
        total = geoms.cell.total_fluid_volume()
        for geom in geoms.faces:
            assert geom.total_fluid_volume() == pytest.approx(total, rel=1e-12)
            assert np.max(np.abs(geom.closedness_residual())) < 1e-12


class TestSurfaces:
    """Test surface construction and failure modes"""

    def test_builtin_surfaces(self):
        """Test named surfaces map to their implementations"""
        hemi = builtin_surface(SurfaceSpec(name=SurfaceKind.HEMISPHERE, center=(5, 5, 0), radius=0.5))
        assert isinstance(hemi, SphereSurface)
        assert isinstance(builtin_surface(SurfaceSpec()), NoSurface)

    def test_missing_parameter(self):
        """Test a surface missing a required parameter"""
        with pytest.raises(GeometryError, match="center"):
            builtin_surface(SurfaceSpec(name=SurfaceKind.SPHERE))

    def test_non_finite_surface(self):
        """Test that NaN node values are rejected"""
        grid = _walled((2, 2, 2), (1.0, 1.0, 1.0))
        surface = FunctionSurface(lambda x, y, z: np.full(np.shape(x), np.nan))
        with pytest.raises(GeometryError, match="not finite"):
            build_geometry_set(surface, grid)

    def test_disjoint_fluid_corners(self):
        """Test a saddle cell with two unconnected fluid corners"""
        phi8 = np.array([1.0, -1.0, -1.0, 1.0, -1.0, -1.0, -1.0, -1.0])
        with pytest.raises(UnsupportedTopologyError):
            clip_cell(phi8, (1.0, 1.0, 1.0), index=(2, 3, 4))

    def test_all_fluid(self, open_geoms):
        """Test that no surface leaves every volume regular"""
        for geom in open_geoms.variants:
            assert np.all(geom.regular)
            assert geom.total_fluid_volume() == pytest.approx(216.0)


class TestIndexHelpers:
    """Test slicing and shifting helpers"""

    def test_interior_slices(self, channel_grid):
        """Test boundary faces are excluded on wall axes only"""
        sl = interior_slices(channel_grid, GridVariant.ZFACE)
        assert sl[2] == slice(G + 1, G + 8)
        assert sl[0] == slice(G, G + 6)
        sl = interior_slices(channel_grid, GridVariant.ZFACE, boundary_faces=True)
        assert sl[2] == slice(G, G + 9)

    def test_shifts(self):
        """Test shifts replicate the edge layer"""
        a = np.arange(4.0)
        assert shift_down(a, 0).tolist() == [0.0, 0.0, 1.0, 2.0]
        assert shift_up(a, 0).tolist() == [1.0, 2.0, 3.0, 3.0]

    def test_export(self, plane_geoms, tmp_path):
        """Test the geometry text export"""
        path = plane_geoms.cell.export(tmp_path / "geometry_cell.txt")
        header = path.read_text().splitlines()[0]
        assert header.startswith("# variant=cell")
        table = np.loadtxt(path)
        assert table.shape == (6 * 4 * 8, 21)
