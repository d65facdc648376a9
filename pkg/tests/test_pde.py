"""Finite-volume scheme: fluxes, conservation, degeneracy, symmetry, oracles."""

import numpy as np
import pytest

from taxisim.config import parse_config
from taxisim.fields import FieldState, Grid
from taxisim.pde import (ClipLog, PdeParams, face_fluxes, mass_balance, run_pde,
                         stable_dt, step_pde)


def make_state(u, v, length=None, h=1.0):
    u = np.asarray(u, dtype=float)
    n = u.ndim
    length = length if length is not None else u.shape[0] * h
    grid = Grid(n, length, h)
    return FieldState(grid, u.copy(), np.asarray(v, dtype=float).copy())


class TestFluxes:
    def test_uniform_state_zero_flux(self):
        st = make_state(np.full((8, 8), 1.3), np.full((8, 8), 0.7))
        for fl in face_fluxes(st, PdeParams(sigma0=2.0, chi0=1.5)):
            assert np.all(fl.total == 0.0)

    def test_zero_chemical_locks_everything(self):
        rng = np.random.default_rng(0)
        st = make_state(rng.uniform(0.5, 2.0, (8, 8)), np.zeros((8, 8)))
        for fl in face_fluxes(st, PdeParams(sigma0=2.0, chi0=1.5)):
            assert np.all(fl.total == 0.0)

    def test_two_cell_hand_value(self):
        st = make_state([1.0, 2.0], [1.0, 1.0])
        fl = face_fluxes(st, PdeParams(sigma0=1.0, chi0=0.0))[0]
        assert np.allclose(fl.total, [1.5])

    def test_chem_coefficient_is_upwind_times_diffusion_times_chi(self):
        rng = np.random.default_rng(1)
        st = make_state(rng.uniform(0.1, 2.0, (10, 10)), rng.uniform(0.1, 2.0, (10, 10)))
        params = PdeParams(sigma0=1.7, chi0=2.5)
        for fl in face_fluxes(st, params):
            chi_face = fl.chem_coef / np.where(fl.u_upwind * fl.diff_coef == 0, 1.0,
                                               fl.u_upwind * fl.diff_coef)
            assert np.all(fl.chem_coef == fl.u_upwind * fl.diff_coef * chi_face)
            # factor bounded by chi0/kd as the receptor law demands
            assert np.all(chi_face <= params.chi0 * params.kd + 1e-12)


class TestStableDt:
    def test_zero_state_limited_by_chemical_diffusion(self):
        st = make_state(np.zeros((6, 6)), np.zeros((6, 6)))
        params = PdeParams(sigma0=4.0, chi0=2.5, safety=0.9)
        assert np.isclose(stable_dt(st, params), 0.9 * 1.0 / 4.0)

    def test_doubling_uv_halves_diffusion_bound(self):
        params = PdeParams(sigma0=4.0, chi0=0.0, safety=1.0)
        a = stable_dt(make_state(np.full((6, 6), 4.0), np.full((6, 6), 4.0)), params)
        b = stable_dt(make_state(np.full((6, 6), 8.0), np.full((6, 6), 4.0)), params)
        assert np.isclose(a / b, 2.0)

    def test_positive_on_pattern_initial_data(self):
        cfg = parse_config(FIG1_SMALL)
        from taxisim.config import initial_fields, grid_of
        from taxisim.pde import params_of
        u0, v0 = initial_fields(cfg)
        st = FieldState(grid_of(cfg), u0, v0)
        dt = stable_dt(st, params_of(cfg))
        assert 0 < dt < np.inf


class TestStep:
    def test_zero_state_stays_zero(self):
        st = make_state(np.zeros((6, 6)), np.zeros((6, 6)))
        params = PdeParams(sigma0=1.0, chi0=1.0)
        step_pde(st, params, stable_dt(st, params))
        assert np.all(st.u == 0.0) and np.all(st.v == 0.0)

    def test_combined_mass_invariant_per_step(self):
        rng = np.random.default_rng(2)
        st = make_state(rng.uniform(0.1, 1.5, (12, 12)), rng.uniform(0.1, 1.5, (12, 12)))
        params = PdeParams(sigma0=2.0, chi0=1.5)
        total0 = (st.u + st.v).sum()
        for _ in range(50):
            step_pde(st, params, stable_dt(st, params))
        assert abs((st.u + st.v).sum() - total0) < 1e-12 * total0

    def test_rejects_oversized_dt(self):
        st = make_state(np.full((6, 6), 1.0), np.full((6, 6), 1.0))
        params = PdeParams(sigma0=1.0, chi0=0.0)
        with pytest.raises(ValueError):
            step_pde(st, params, 10.0 * stable_dt(st, params))

    def test_heat_oracle_second_order_in_h(self):
        # u = 0 decouples v into the heat equation; compare to the free-space
        # Gaussian at two resolutions
        t0, t1 = 0.25, 0.75

        def gaussian(x, y, t):
            return np.exp(-(x ** 2 + y ** 2) / (4 * t)) / (4 * np.pi * t)

        errors = []
        for h in (0.5, 0.25):
            grid = Grid(2, 16.0, h)
            c = grid.centers()
            x, y = np.meshgrid(c, c, indexing="ij")
            st = FieldState(grid, np.zeros(grid.shape), gaussian(x, y, t0))
            params = PdeParams(sigma0=1.0, chi0=0.0, safety=0.4)
            while st.time < (t1 - t0) - 1e-12:
                dt = min(stable_dt(st, params), (t1 - t0) - st.time)
                step_pde(st, params, dt)
            err = np.sqrt(((st.v - gaussian(x, y, t1)) ** 2).sum() * h * h)
            errors.append(err)
        assert errors[0] / errors[1] > 2.5   # ~4 for a second-order scheme

    def test_rotation_equivariance(self):
        rng = np.random.default_rng(3)
        u0 = rng.uniform(0.1, 1.0, (10, 10))
        v0 = rng.uniform(0.1, 1.0, (10, 10))
        params = PdeParams(sigma0=2.0, chi0=2.0)
        a = make_state(u0, v0)
        b = make_state(np.rot90(u0).copy(), np.rot90(v0).copy())
        for _ in range(20):
            dt = stable_dt(a, params)
            step_pde(a, params, dt)
            step_pde(b, params, dt)
        assert np.abs(np.rot90(a.u) - b.u).max() < 1e-12
        assert np.abs(np.rot90(a.v) - b.v).max() < 1e-12

    def test_degeneracy_lock_frozen_chemical(self):
        # v = 0 on the right half, chemical held fixed: u on the interior of
        # that half must not change at all, only the interface cell may
        rng = np.random.default_rng(4)
        u0 = rng.uniform(0.2, 1.5, (16, 16))
        v0 = np.zeros((16, 16))
        v0[:8, :] = 0.9
        st = make_state(u0, v0)
        params = PdeParams(sigma0=2.0, chi0=2.0)
        for _ in range(200):
            step_pde(st, params, stable_dt(st, params), evolve_v=False)
        assert np.array_equal(st.u[9:, :], u0[9:, :])
        assert not np.array_equal(st.u[8, :], u0[8, :])

    def test_degeneracy_per_step_containment_coupled(self):
        # full coupling: after one step u may change only where v was nonzero
        # plus a one-cell layer
        rng = np.random.default_rng(5)
        u0 = rng.uniform(0.2, 1.5, (16, 16))
        v0 = np.zeros((16, 16))
        v0[:6, :] = 0.9
        st = make_state(u0, v0)
        params = PdeParams(sigma0=2.0, chi0=2.0)
        step_pde(st, params, stable_dt(st, params))
        changed = st.u != u0
        assert not changed[7:, :].any()


class TestRunAndMass:
    def test_u_zero_keeps_u_zero(self):
        cfg = parse_config(FIG1_SMALL.replace("u0_amplitude = 0.71", "u0_amplitude = 0.0"))
        run = run_pde(cfg)
        assert all(np.all(s.u == 0.0) for s in run.snapshots)

    def test_v_zero_freezes_both(self):
        cfg = parse_config(FIG1_SMALL.replace("v0_value = 0.71", "v0_value = 0.0"))
        run = run_pde(cfg)
        u_first = run.snapshots[0].u
        for s in run.snapshots:
            assert np.array_equal(s.u, u_first)
            assert np.all(s.v == 0.0)

    def test_mass_balance_report(self):
        cfg = parse_config(FIG1_SMALL)
        run = run_pde(cfg)
        mb = mass_balance(run)
        assert mb["relative_drift"] < 1e-10
        assert mb["u_nondecreasing"] and mb["v_nonincreasing"]


FIG1_SMALL = """
[scaling]
mode = nondimensional
epsilon = 0.1
sigma0 = 4.0
chi0 = 2.5
speed = 1.0

[domain]
n = 2
length = 40.0
h = 1.0

[time]
t_end = 3.0
outputs = 1.0, 3.0

[init]
u0 = gaussian
u0_amplitude = 0.71
u0_width = 6.25
v0 = uniform
v0_value = 0.71

[run]
seed = 9
"""
