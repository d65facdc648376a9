"""Grid transfer (deposit/gather), gradients, and the chemical step."""

import numpy as np
import pytest

from taxisim.fields import (FieldState, Grid, chemical_stable_dt, deposit_density,
                            gather_field, gradient, laplacian_neumann, update_chemical)


def test_grid_rejects_nonconforming_length():
    with pytest.raises(ValueError):
        Grid(2, 10.0, 3.0)


class TestDeposit:
    def test_particle_at_cell_center(self):
        grid = Grid(2, 8.0, 1.0)
        c = grid.centers()
        pos = np.array([[c[3], c[5]]])
        rho = deposit_density(pos, np.array([2.0]), grid)
        assert rho[3, 5] == 2.0
        rho[3, 5] = 0.0
        assert np.all(rho == 0.0)

    def test_particle_at_cell_corner_splits_quarters(self):
        grid = Grid(2, 8.0, 1.0)
        pos = np.array([[0.0, 0.0]])    # corner between cells 3 and 4 per axis
        rho = deposit_density(pos, np.array([1.0]), grid)
        quarter = rho[3:5, 3:5]
        assert np.allclose(quarter, 0.25)
        assert np.isclose(rho.sum(), 1.0)

    def test_conservation_random_cloud(self):
        grid = Grid(2, 8.0, 0.5)
        rng = np.random.default_rng(0)
        pos = rng.uniform(-4, 4, size=(5000, 2))
        w = rng.uniform(0.1, 2.0, size=5000)
        rho = deposit_density(pos, w, grid)
        assert abs(rho.sum() * grid.cell_volume - w.sum()) < 1e-14 * w.sum()

    def test_conservation_includes_wall_fold(self):
        grid = Grid(1, 4.0, 1.0)
        pos = np.array([[-1.999], [1.999]])   # half-cell from each wall
        rho = deposit_density(pos, np.array([1.0, 1.0]), grid)
        assert abs(rho.sum() * grid.cell_volume - 2.0) < 1e-14


class TestGather:
    def test_roundtrip_linear_field(self):
        grid = Grid(2, 8.0, 0.5)
        c = grid.centers()
        x, y = np.meshgrid(c, c, indexing="ij")
        f = 2.0 * x - 3.0 * y + 1.0
        rng = np.random.default_rng(1)
        pos = rng.uniform(-3.5, 3.5, size=(200, 2))  # interior: bilinear exact on linear f
        vals = gather_field(f, pos, grid)
        assert np.abs(vals - (2 * pos[:, 0] - 3 * pos[:, 1] + 1)).max() < 1e-12


class TestGradient:
    def test_linear_field_exact(self):
        grid = Grid(2, 8.0, 0.5)
        c = grid.centers()
        x, y = np.meshgrid(c, c, indexing="ij")
        gx, gy = gradient(1.5 * x - 0.5 * y, grid)
        assert np.abs(gx - 1.5).max() < 1e-12
        assert np.abs(gy + 0.5).max() < 1e-12


class TestChemicalStep:
    def test_uniform_field_unchanged_without_sink(self):
        grid = Grid(2, 8.0, 1.0)
        st = FieldState(grid, grid.zeros(), np.full(grid.shape, 0.7))
        update_chemical(st, grid.zeros(), 0.1)
        assert np.allclose(st.v, 0.7)

    def test_mass_conserved_without_sink(self):
        grid = Grid(2, 16.0, 0.5)
        c = grid.centers()
        x, y = np.meshgrid(c, c, indexing="ij")
        v0 = np.exp(-(x ** 2 + y ** 2))
        st = FieldState(grid, grid.zeros(), v0.copy())
        m0 = st.v.sum() * grid.cell_volume
        dt = chemical_stable_dt(grid, 1.0, 0.0)
        for _ in range(200):
            update_chemical(st, grid.zeros(), dt)
        assert abs(st.v.sum() * grid.cell_volume - m0) < 1e-12 * m0

    def test_uniform_sink_matches_exponential(self):
        grid = Grid(1, 8.0, 0.5)
        rho = np.full(grid.shape, 2.0)
        st = FieldState(grid, rho.copy(), np.full(grid.shape, 1.0))
        k, t_end = 0.8, 1.0
        dt = 1e-3
        steps = int(round(t_end / dt))
        for _ in range(steps):
            update_chemical(st, rho, dt, diffusion=1.0, consumption=k)
        exact = np.exp(-k * 2.0 * t_end)
        assert np.abs(st.v - exact).max() < 5 * dt   # first-order in dt

    def test_rejects_unstable_dt(self):
        grid = Grid(2, 8.0, 1.0)
        st = FieldState(grid, grid.zeros(), np.ones(grid.shape))
        with pytest.raises(ValueError):
            update_chemical(st, grid.zeros(), 1.0)

    def test_positivity_at_combined_bound(self):
        grid = Grid(1, 4.0, 1.0)
        rho = np.array([5.0, 0.0, 0.0, 5.0])
        st = FieldState(grid, rho.copy(), np.array([1.0, 0.0, 0.0, 1.0]))
        dt = chemical_stable_dt(grid, 1.0, rho.max(), safety=1.0)
        update_chemical(st, rho, dt, safety=1.0)
        assert st.v.min() >= 0.0


def test_laplacian_flux_form_telescopes():
    grid = Grid(2, 8.0, 1.0)
    rng = np.random.default_rng(2)
    f = rng.uniform(size=grid.shape)
    lap = laplacian_neumann(f, grid)
    assert abs(lap.sum()) < 1e-13 * np.abs(f).sum()
