import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from cablenet.equilibrium import (
    ConvergenceError,
    EquilibriumConfig,
    EquivalenceError,
    ResponseMap,
    input_sensitivity,
    solve_equilibrium,
    verify_equivalence,
)
from cablenet.model import force_residual, total_energy

from conftest import random_equilibrium, rel_err, two_edge_net


class TestSolveEquilibrium:
    def test_symmetric_two_edge_net(self, toy_net):
        res = solve_equilibrium(toy_net, [0.0, 0.0], [[0.3, 0.7, -0.4]])
        np.testing.assert_allclose(res.cfg, [[1.1, 0.0, 0.0]], atol=1e-9)

    def test_loaded_node_matches_1d_oracle(self):
        # independent oracle: coarse grid scan + golden-section refinement of
        # the energy along the symmetry axis
        net = two_edge_net(load=1.0)
        u = np.zeros(2)

        def energy_on_axis(z):
            return total_energy(np.array([[1.1, 0.0, z]]), net, u)

        zs = np.linspace(-0.5, 0.5, 4001)
        z0 = zs[int(np.argmin([energy_on_axis(z) for z in zs]))]
        z_opt = minimize_scalar(energy_on_axis,
                                bracket=(z0 - 1e-3, z0, z0 + 1e-3),
                                method="golden",
                                options={"xtol": 1e-14}).x
        res = solve_equilibrium(net, u, [[1.1, 0.0, 0.0]])
        assert abs(res.cfg[0, 2] - z_opt) <= 1e-6
        np.testing.assert_allclose(res.cfg[0, :2], [1.1, 0.0], atol=1e-9)

    def test_residual_postcondition(self):
        for seed in range(5):
            net, u, result, _ = random_equilibrium(seed)
            h = force_residual(result.cfg, net, u)
            assert np.abs(h).max() <= EquilibriumConfig().tol_force
            assert result.residual_norm <= EquilibriumConfig().tol_force

    def test_energy_monotone_along_accepted_steps(self):
        net, u, result, layout = random_equilibrium(21)
        rng = np.random.default_rng(0)
        start = layout + rng.normal(0.0, 0.2 * net.scale(), layout.shape)
        energies = []
        solve_equilibrium(net, u, start, EquilibriumConfig(tol_force=1e-6),
                          energy_trace=energies)
        energies = np.asarray(energies)
        tol = 1e-14 * (1.0 + np.abs(energies).max())
        assert np.all(np.diff(energies) <= tol)
        assert energies[-1] < energies[0]

    def test_nonconvergence_carries_best_iterate(self, toy_net):
        with pytest.raises(ConvergenceError) as err:
            solve_equilibrium(toy_net, [0.0, 0.0], [[0.2, 5.0, 3.0]],
                              EquilibriumConfig(max_iters=1))
        assert err.value.best.cfg.shape == (1, 3)
        assert err.value.best.residual_norm > 0

    def test_uniqueness_from_random_warm_starts(self):
        net, u, result, layout = random_equilibrium(33)
        rng = np.random.default_rng(7)
        scale = net.scale()
        solutions = []
        for _ in range(10):
            start = layout + rng.uniform(-0.5, 0.5, layout.shape) * scale
            solutions.append(solve_equilibrium(net, u, start).cfg)
        for sol in solutions[1:]:
            assert np.abs(sol - solutions[0]).max() <= 1e-6 * scale


class TestVerifyEquivalence:
    def test_converged_result_passes(self, toy_net):
        res = solve_equilibrium(toy_net, [0.0, 0.0], [[1.0, 0.1, 0.0]])
        report = verify_equivalence(toy_net, [0.0, 0.0], res)
        assert report.residual_norm <= 1e-8
        assert report.min_energy_rise > 0

    def test_displaced_configuration_fails_with_node(self, toy_net):
        res = solve_equilibrium(toy_net, [0.0, 0.0], [[1.0, 0.1, 0.0]])
        res.cfg = res.cfg + np.array([[0.05, 0.0, 0.0]])
        with pytest.raises(EquivalenceError) as err:
            verify_equivalence(toy_net, [0.0, 0.0], res)
        assert err.value.node == 0

    def test_random_net_energy_rises_in_50_directions(self):
        net, u, result, _ = random_equilibrium(5)
        report = verify_equivalence(net, u, result, directions=50, seed=11)
        assert report.directions == 50
        assert report.min_energy_rise > 0


class TestResponseMap:
    def test_matches_solve_at_zero(self):
        net, u, result, layout = random_equilibrium(9)
        response = ResponseMap(net, layout)
        np.testing.assert_allclose(response(u), result.cfg, atol=1e-10)

    def test_continuity_under_shrinking_steps(self):
        net, u, result, layout = random_equilibrium(13)
        response = ResponseMap(net, layout)
        base = response(u)
        rng = np.random.default_rng(2)
        direction = rng.standard_normal(u.shape)
        direction /= np.abs(direction).max()
        moves = []
        for delta in (1e-3, 1e-4, 1e-5):
            moved = response(u + delta * direction)
            moves.append(np.abs(moved - base).max())
        assert moves[0] > moves[1] > moves[2]
        assert moves[2] <= 1e-4 * net.scale()

    def test_sensitivity_matches_finite_differences(self):
        net, u, result, layout = random_equilibrium(17, tol_force=1e-11)
        S = input_sensitivity(result.cfg, net, u)
        response = ResponseMap(net, result.cfg,
                               EquilibriumConfig(tol_force=1e-11))
        step = 1e-6
        S_fd = np.zeros_like(S)
        for j in range(net.m_boundary):
            up, um = u.copy(), u.copy()
            up[j] += step
            um[j] -= step
            S_fd[:, j] = (response(up) - response(um)).reshape(-1) / (2 * step)
        assert rel_err(S_fd, S) <= 1e-5
