"""
Test small-cell neighborhoods and weighted state redistribution
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.errors import WSRDError
from src.geometry import PlaneSurface, build_geometry_set
from src.models import N_GHOST, BoundarySpec, FluidConstants, GridSpec, GridVariant
from src.wsrd import build_all_neighborhoods, build_neighborhoods, redistribute, redistribute_state

G = N_GHOST


def _walled_plane(normal=(0.3, 0.2, 1.0), height=0.43, n=8):
    grid = GridSpec(n=(n, n, n), extent=(1.0, 1.0, 1.0), periodic=(False, False, False))
    return build_geometry_set(PlaneSurface(normal, (0.5, 0.5, height)), grid)


@pytest.fixture(scope="module")
def tilted():
    return _walled_plane()


@pytest.fixture(scope="module")
def tilted_maps(tilted):
    return build_all_neighborhoods(tilted)


def _fluid_mass(values, geom):
    mask = geom.update_mask()
    return float(np.sum(geom.volume[mask] * values[mask]))


class TestNeighborhoods:
    """Test neighborhood construction and weights"""

    def test_every_small_volume_merged(self, tilted_maps):
        """Test small volumes own neighborhoods reaching the target volume"""
        for nmap in tilted_maps.values():
            assert nmap.members
            volume = nmap.geom.volume
            for owner, group in nmap.members.items():
                assert owner not in group
                reached = volume[owner] + sum(volume[m] for m in group)
                assert reached > volume[owner]
            assert np.all(nmap.small == (nmap.geom.update_mask() & (volume < nmap.v_target)))

    def test_weight_ranges(self, tilted_maps):
        """Test kappa and omega lie in [0, 1] and omega is at least 1/N"""
        for nmap in tilted_maps.values():
            kappa = nmap.kappa.flat[nmap.cells]
            omega = nmap.omega.flat[nmap.cells]
            count = nmap.count.flat[nmap.cells]
            assert np.all((kappa >= 0.0) & (kappa <= 1.0))
            assert np.all((omega >= 0.0) & (omega <= 1.0))
            assert np.all(omega * count >= 1.0 - 1e-12)

    def test_merge_toward_fluid(self, tilted_maps):
        """Test the first merge step of a floor cell goes upward"""
        nmap = tilted_maps[GridVariant.CELL]
        for owner, group in nmap.members.items():
            assert any(m[2] == owner[2] + 1 and m[:2] == owner[:2] for m in group)

    def test_open_domain(self, open_geoms):
        """Test an uncut grid has no neighborhoods and redistribution is the identity"""
        nmap = build_neighborhoods(open_geoms.cell)
        assert not nmap.members
        values = np.random.default_rng(0).normal(size=open_geoms.cell.alpha.shape)
        assert np.array_equal(redistribute(values, nmap), values)

    def test_dump(self, tilted_maps, tmp_path):
        """Test the neighborhood dump lists one line per neighborhood"""
        nmap = tilted_maps[GridVariant.CELL]
        path = nmap.dump(tmp_path / "wsrd_cell.txt")
        lines = path.read_text().splitlines()
        assert lines[0].startswith("# variant=cell")
        assert len(lines) == 2 + len(nmap.members)


class TestRedistribution:
    """Test conservation, constant preservation and linear exactness"""

    def test_constant_preserved(self, tilted, tilted_maps):
        """Test a constant field is unchanged on every variant"""
        for geom in tilted.variants:
            nmap = tilted_maps[geom.variant]
            values = np.full(geom.alpha.shape, 3.7)
            out = redistribute(values, nmap)
            mask = geom.update_mask()
            assert np.allclose(out[mask], 3.7, rtol=0.0, atol=1e-12)

    def test_conservative(self, tilted, tilted_maps):
        """Test the volume-weighted sum of a random field is unchanged"""
        rng = np.random.default_rng(11)
        for geom in tilted.variants:
            values = rng.uniform(0.5, 2.0, size=geom.alpha.shape)
            out = redistribute(values, tilted_maps[geom.variant])
            assert _fluid_mass(out, geom) == pytest.approx(_fluid_mass(values, geom), rel=1e-12)

    def test_linear_exact(self, tilted, tilted_maps):
        """Test a linear field is reproduced without the limiter"""
        geom = tilted.cell
        nmap = tilted_maps[GridVariant.CELL]
        grid = geom.grid
        centers = np.stack(np.meshgrid(*grid.cv_centers(GridVariant.CELL), indexing="ij"), axis=-1)
        points = centers + geom.centroid_offsets_physical()
        values = 1.0 + points @ np.array([0.4, -0.3, 0.7])
        out = redistribute(values, nmap, limiter=False)

        check = geom.update_mask().copy()
        with_gradient = set(nmap.limited.tolist())
        for owner, group in nmap.members.items():
            if np.ravel_multi_index(owner, grid.shape) not in with_gradient:
                for index in [owner] + group:
                    check[index] = False
        assert len(with_gradient) > 0
        assert np.allclose(out[check], values[check], rtol=0.0, atol=1e-12)

    def test_limiter_bounds(self, tilted, tilted_maps):
        """Test the limited result of a step stays within the data range"""
        geom = tilted.cell
        grid = geom.grid
        x = grid.cv_centers(GridVariant.CELL)[0].reshape(-1, 1, 1)
        values = np.broadcast_to(np.where(x < 0.5, 1.0, 2.0), grid.shape).copy()
        out = redistribute(values, tilted_maps[GridVariant.CELL])
        mask = geom.update_mask()
        assert out[mask].min() >= 1.0 - 1e-12
        assert out[mask].max() <= 2.0 + 1e-12

    def test_missing_map(self, channel_grid, constants, channel_bcs, state_factory):
        """Test redistribution without a map for a variant fails"""
        state = state_factory(channel_grid, constants, channel_bcs)
        with pytest.raises(WSRDError, match="no neighborhood map"):
            redistribute_state(state, {})

    def test_stratified_rest_untouched(self, tilted, tilted_maps, state_factory):
        """Test a hydrostatic atmosphere at rest comes back exactly as it went in"""
        walls = BoundarySpec(xlo="slip_wall", xhi="slip_wall", ylo="slip_wall", yhi="slip_wall")
        state = state_factory(tilted.cell.grid, FluidConstants(g=9.81), walls, geoms=tilted)
        before = state.copy()
        redistribute_state(state, tilted_maps)
        assert np.array_equal(state.rho, before.rho)
        assert np.array_equal(state.rho_theta, before.rho_theta)
        for a in range(3):
            assert np.all(state.mom[a] == 0.0)

    def test_state_conserved(self, tilted, tilted_maps, state_factory):
        """Test redistributing a perturbed state keeps the fluid totals"""
        walls = BoundarySpec(xlo="slip_wall", xhi="slip_wall", ylo="slip_wall", yhi="slip_wall")
        state = state_factory(tilted.cell.grid, FluidConstants(g=9.81), walls, geoms=tilted)
        rng = np.random.default_rng(11)
        state.rho *= rng.uniform(0.9, 1.1, size=state.rho.shape)
        state.mom[0] = rng.normal(size=state.rho.shape)
        mass, momentum = _fluid_mass(state.rho, tilted.cell), _fluid_mass(state.mom[0], tilted.faces[0])
        redistribute_state(state, tilted_maps)
        assert _fluid_mass(state.rho, tilted.cell) == pytest.approx(mass, rel=1e-12)
        assert _fluid_mass(state.mom[0], tilted.faces[0]) == pytest.approx(momentum, abs=1e-12 * abs(mass))

    @settings(deadline=None, max_examples=20)
    @given(
        nx=st.floats(-0.6, 0.6), ny=st.floats(-0.6, 0.6), height=st.floats(0.3, 0.65),
        seed=st.integers(0, 2 ** 16),
    )
    def test_conservative_random_planes(self, nx, ny, height, seed):
        """Test conservation on random floors of a walled box"""
        grid = GridSpec(n=(6, 6, 6), extent=(1.0, 1.0, 1.0), periodic=(False, False, False))
        geoms = build_geometry_set(PlaneSurface((nx, ny, 1.0), (0.5, 0.5, height)), grid)
        rng = np.random.default_rng(seed)
        for geom in geoms.variants:
            nmap = build_neighborhoods(geom)
            values = rng.uniform(0.5, 2.0, size=geom.alpha.shape)
            out = redistribute(values, nmap)
            assert _fluid_mass(out, geom) == pytest.approx(_fluid_mass(values, geom), rel=1e-12)
