import numpy as np
import pytest

from smlmc.models import (
    BURGERS,
    DIFFUSION,
    MeshHierarchy,
    burgers_steps,
    diffusion_steps,
    godunov_flux,
    qoi_midpoint,
    qoi_trapezoid,
    sample_pair,
    sample_pair_batch,
    solve_burgers,
    solve_diffusion,
    solve_diffusion_batch,
    thomas_solve,
)


class TestThomas:
    def test_identity(self):
        rhs = np.array([3.0, -1.0, 2.0])
        x = thomas_solve(np.zeros(2), np.ones(3), np.zeros(2), rhs)
        assert np.array_equal(x, rhs)

    def test_two_by_two_hand_solve(self):
        # [[2, 1], [1, 2]] x = [3, 3]  ->  x = [1, 1]
        x = thomas_solve(np.array([1.0]), np.array([2.0, 2.0]), np.array([1.0]),
                         np.array([3.0, 3.0]))
        assert np.allclose(x, [1.0, 1.0], atol=1e-14)

    def test_random_diagonally_dominant(self):
        rng = np.random.default_rng(42)
        n = 50
        lower = rng.uniform(-1, 1, n - 1)
        upper = rng.uniform(-1, 1, n - 1)
        diag = 2.5 + rng.uniform(0, 1, n)
        rhs = rng.uniform(-5, 5, n)
        x = thomas_solve(lower, diag, upper, rhs)
        A = np.diag(diag) + np.diag(lower, -1) + np.diag(upper, 1)
        assert np.abs(A @ x - rhs).max() < 1e-12
        assert np.allclose(x, np.linalg.solve(A, rhs), atol=1e-11)

    def test_batched_matches_loop(self):
        rng = np.random.default_rng(3)
        n, B = 12, 7
        lower = rng.uniform(-1, 1, (n - 1, B))
        upper = rng.uniform(-1, 1, (n - 1, B))
        diag = 3.0 + rng.uniform(0, 1, (n, B))
        rhs = rng.uniform(-1, 1, (n, B))
        x = thomas_solve(lower, diag, upper, rhs)
        for b in range(B):
            xb = thomas_solve(lower[:, b], diag[:, b], upper[:, b], rhs[:, b])
            assert np.allclose(x[:, b], xb, atol=1e-13)

    def test_zero_pivot_raises(self):
        with pytest.raises(FloatingPointError):
            thomas_solve(np.array([1.0]), np.array([0.0, 1.0]), np.array([1.0]),
                         np.array([1.0, 1.0]))


class TestMeshHierarchy:
    def test_cells_progression(self):
        h = MeshHierarchy(m0=16, factor=2, l_star=7)
        assert [h.cells(l) for l in range(8)] == [16, 32, 64, 128, 256, 512, 1024, 2048]

    def test_validation(self):
        with pytest.raises(ValueError):
            MeshHierarchy(m0=1)
        with pytest.raises(ValueError):
            MeshHierarchy(m0=4, factor=1)
        with pytest.raises(ValueError):
            MeshHierarchy(m0=4).cells(8)


class TestDiffusion:
    def test_boundary_values_exact(self):
        u = solve_diffusion(2.3, 64)
        assert u[0] == -1.0 and u[-1] == 1.0

    def test_long_time_steady_state(self):
        x = np.linspace(0.0, 4.0, 513)
        u = solve_diffusion(4.0, 512, final_time=5.0)
        assert np.abs(u - (x - 2.0) / 2.0).max() < 1e-3

    def test_grid_self_convergence_second_order(self):
        # second order shows once the initial layer (width 0.05) is resolved;
        # coarser triplets sit in the pre-asymptotic ringing regime
        d = 1.0
        u1 = solve_diffusion(d, 1024)
        u2 = solve_diffusion(d, 2048)
        u3 = solve_diffusion(d, 4096)
        e_coarse = np.abs(u2[::2] - u1).max()
        e_fine = np.abs(u3[::2] - u2).max()
        order = np.log2(e_coarse / e_fine)
        assert order >= 1.9

    def test_self_convergence_monotone_at_coarse_levels(self):
        d = 1.7
        us = {c: solve_diffusion(d, c) for c in (128, 256, 512, 1024)}
        errs = [np.abs(us[2 * c][::2] - us[c]).max() for c in (128, 256, 512)]
        assert errs[0] > errs[1] > errs[2]

    def test_antisymmetry(self):
        u = solve_diffusion(2.0, 128)
        assert np.abs(u + u[::-1]).max() < 1e-10

    def test_qoi_range_within_paper_interval(self):
        w = np.linspace(1.0, 4.0, 31)
        for cells in (16, 64, 512):
            q = DIFFUSION.qoi_batch(w, cells)
            assert np.all(q >= 14.0) and np.all(q <= 28.0)

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            solve_diffusion(-1.0, 64)
        with pytest.raises(ValueError):
            solve_diffusion(1.0, 1)

    def test_batch_matches_single(self):
        w = np.array([1.3, 2.2, 3.9])
        batch = solve_diffusion_batch(w, 64)
        for i, wi in enumerate(w):
            assert np.array_equal(batch[:, i], solve_diffusion(wi, 64))


class TestGodunovFlux:
    def test_consistency(self):
        for u in (-1.5, 0.0, 0.7, 2.0):
            assert godunov_flux(u, u) == pytest.approx(u * u / 2, abs=1e-15)

    def test_right_moving_shock(self):
        assert godunov_flux(2.0, 0.0) == 2.0

    def test_left_moving_shock(self):
        # shock speed (uL + uR)/2 = -1 < 0: flux of the right state
        assert godunov_flux(-2.0, 0.0) == 0.0

    def test_transonic_rarefaction(self):
        assert godunov_flux(-1.0, 1.0) == 0.0

    def test_supersonic_rarefactions(self):
        assert godunov_flux(0.5, 1.5) == pytest.approx(0.125)
        assert godunov_flux(-1.5, -0.5) == pytest.approx(0.125)


# Exact solution of the Burgers testbed at its final time: the boundary shock
# (2 -> u1, speed (2 + u1)/2) and the plateau shock (u1 -> 0, speed u1/2) do
# not interact before t = 1, so for t = 0.5 the profile is three constant
# states and Q = 10 * (4 x_1 + u1^2 (x_2 - x_1)) with x_1 = (2 + u1) t / 2,
# x_2 = 1 + u1 t / 2.
def exact_burgers_qoi(u1, t=0.5, scale=10.0):
    x1 = (2.0 + u1) * t / 2.0
    x2 = 1.0 + u1 * t / 2.0
    return scale * (4.0 * x1 + u1**2 * (x2 - x1))


class TestBurgers:
    def test_mass_growth_matches_boundary_flux(self):
        T = 0.5
        u = solve_burgers(0.0, 256, final_time=T)
        dx = 2.0 / 256
        mass = dx * u.sum()
        # inflow flux f(2) = 2, outflow f(0) = 0: mass grows at rate 2
        assert abs(mass - 2.0 * T) < 1e-6

    def test_solution_bounds(self):
        for u1 in (0.0, 0.7, 1.4, 2.0):
            u = solve_burgers(u1, 128)
            assert u.min() >= 0.0 and u.max() <= 2.0 + 1e-12

    def test_conservative_update_identity(self):
        # one conservative step moves exactly the boundary-flux difference
        rng = np.random.default_rng(0)
        u = rng.uniform(0.0, 2.0, 64)
        dx, dt = 2.0 / 64, 0.005
        ext = np.concatenate([[2.0], u, [0.0]])
        flux = godunov_flux(ext[:-1], ext[1:])
        unew = u - (dt / dx) * (flux[1:] - flux[:-1])
        change = dx * (unew.sum() - u.sum())
        assert abs(change - dt * (flux[0] - flux[-1])) < 1e-12

    def test_first_order_self_convergence(self):
        u1 = 0.9
        u128 = solve_burgers(u1, 128)
        u256 = solve_burgers(u1, 256)
        u512 = solve_burgers(u1, 512)
        dx = 2.0 / 128
        e_coarse = dx * np.abs(u256.reshape(-1, 2).mean(axis=1) - u128).sum()
        e_fine = (dx / 2) * np.abs(u512.reshape(-1, 2).mean(axis=1) - u256).sum()
        order = np.log2(e_coarse / e_fine)
        assert 0.6 <= order <= 1.1

    def test_converges_to_exact_qoi(self):
        for u1 in (0.0, 0.5, 1.0, 1.7, 2.0):
            q = float(BURGERS.qoi_batch([u1], 2048)[0])
            assert q == pytest.approx(exact_burgers_qoi(u1), abs=0.08)

    def test_qoi_range_within_paper_interval(self):
        w = np.linspace(0.0, 2.0, 31)
        for cells in (32, 128, 512):
            q = BURGERS.qoi_batch(w, cells)
            assert np.all(q >= 15.0) and np.all(q <= 65.0)


class TestQoi:
    def test_zero_field(self):
        assert qoi_trapezoid(np.zeros(65), 4.0 / 64) == 0.0
        assert qoi_midpoint(np.zeros(64), 2.0 / 64) == 0.0

    def test_constant_field(self):
        assert qoi_trapezoid(np.ones(65), 4.0 / 64) == pytest.approx(40.0)
        assert qoi_midpoint(np.ones(64), 2.0 / 64) == pytest.approx(20.0)

    def test_steady_state_integral(self):
        # integral of ((x - 2) / 2)^2 over (0, 4) is 4/3
        x = np.linspace(0.0, 4.0, 513)
        q = qoi_trapezoid((x - 2.0) / 2.0, 4.0 / 512)
        assert q == pytest.approx(40.0 / 3.0, abs=2e-4)


class TestSamplePair:
    HIER = MeshHierarchy(m0=16, factor=2, l_star=7)

    def test_level_zero_has_no_coarse(self):
        p = sample_pair(DIFFUSION, self.HIER, 2.0, 0)
        assert p.coarse is None and p.level == 0

    def test_coupling_reproducible_from_input(self):
        p = sample_pair(DIFFUSION, self.HIER, 2.7, 3)
        again = sample_pair(DIFFUSION, self.HIER, p.input_w, 3)
        assert p.fine == again.fine and p.coarse == again.coarse

    def test_fine_coarse_gap_shrinks(self):
        gaps = []
        for level in (1, 3, 5):
            p = sample_pair(DIFFUSION, self.HIER, 2.0, level)
            gaps.append(abs(p.fine - p.coarse))
        assert gaps[2] < gaps[0]

    def test_batch_matches_scalar(self):
        # summation order inside the quadrature depends on the batch width,
        # so agreement is to rounding, not bitwise
        fine, coarse = sample_pair_batch(DIFFUSION, self.HIER, [1.5, 3.0], 2)
        p = sample_pair(DIFFUSION, self.HIER, 1.5, 2)
        assert fine[0] == pytest.approx(p.fine, rel=1e-12)
        assert coarse[0] == pytest.approx(p.coarse, rel=1e-12)


class TestWorkModel:
    def test_steps_track_mesh(self):
        assert diffusion_steps(16, 0.2, 4.0) == 1
        assert diffusion_steps(256, 0.2, 4.0) == 13
        assert burgers_steps(32, 0.5, 2.0, 2.0, 0.9) == 18

    def test_work_units_increase_with_level(self):
        h = MeshHierarchy(m0=16, factor=2, l_star=7)
        works = [DIFFUSION.work_units(h.cells(l)) for l in range(8)]
        assert all(b > a for a, b in zip(works, works[1:]))
