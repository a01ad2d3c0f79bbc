import numpy as np
import pytest

from cablenet.model import (
    CableNet,
    DegenerateEdgeError,
    Edge,
    RestLengthError,
    edge_forces,
    edge_length,
    edge_lengths,
    effective_rest_length,
    effective_rest_lengths,
    elongation,
    elongations,
    force_residual,
    input_jacobian,
    slack_edges,
    slackness,
    socp_energy_terms,
    tangent_stiffness,
    total_energy,
)

from conftest import (
    fd_energy_gradient,
    fd_input_jacobian,
    fd_stiffness,
    random_state,
    rel_err,
    two_edge_net,
)


def single_edge_net(ea=100.0, l0=1.0):
    """One free node tied to one anchor plus a far-off stabilizing anchor."""
    return CableNet(1, [[0.0, 0.0, 0.0]],
                    [Edge(0, 1, "boundary", ea, l0)])


class TestTopologyValidation:
    def test_self_loop_rejected(self):
        with pytest.raises(ValueError, match="self-loop"):
            CableNet(2, [[0, 0, 0]], [Edge(0, 0, "free", 1.0, 1.0),
                                      Edge(0, 2, "boundary", 1.0, 1.0),
                                      Edge(1, 2, "boundary", 1.0, 1.0)])

    def test_duplicate_edge_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            CableNet(1, [[0, 0, 0], [1, 0, 0]],
                     [Edge(0, 1, "boundary", 1.0, 1.0),
                      Edge(1, 0, "boundary", 1.0, 1.0)])

    def test_kind_must_match_endpoints(self):
        with pytest.raises(ValueError, match="free edge"):
            CableNet(1, [[0, 0, 0], [1, 0, 0]],
                     [Edge(0, 1, "free", 1.0, 1.0),
                      Edge(0, 2, "boundary", 1.0, 1.0)])

    def test_unanchored_node_rejected(self):
        with pytest.raises(ValueError, match="not connected"):
            CableNet(2, [[0, 0, 0], [1, 0, 0]],
                     [Edge(0, 2, "boundary", 1.0, 1.0),
                      Edge(0, 3, "boundary", 1.0, 1.0)])

    def test_nonpositive_parameters_rejected(self):
        with pytest.raises(ValueError, match="ea"):
            CableNet(1, [[0, 0, 0], [2, 0, 0]],
                     [Edge(0, 1, "boundary", 0.0, 1.0),
                      Edge(0, 2, "boundary", 1.0, 1.0)])

    def test_input_indices_auto_assigned_in_order(self):
        net = two_edge_net()
        assert [e.input_index for e in net.edges] == [0, 1]


class TestEdgeGeometry:
    def test_three_four_five(self):
        net = CableNet(1, [[3.0, 4.0, 0.0]], [Edge(0, 1, "boundary", 1.0, 1.0)])
        assert edge_length([[0.0, 0.0, 0.0]], net, 0) == pytest.approx(5.0)

    def test_degenerate_edge(self):
        net = single_edge_net()
        with pytest.raises(DegenerateEdgeError):
            edge_length([[0.0, 0.0, 0.0]], net, 0)

    def test_matches_componentwise_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            a, b = rng.uniform(-5, 5, 3), rng.uniform(-5, 5, 3)
            net = CableNet(1, [b], [Edge(0, 1, "boundary", 1.0, 1.0)])
            expect = np.sqrt(sum((a[k] - b[k]) ** 2 for k in range(3)))
            assert edge_length([a], net, 0) == pytest.approx(expect, rel=1e-12)


class TestRestLengths:
    def test_free_edge_unchanged(self):
        net = CableNet(2, [[0, 0, 0], [3, 0, 0]],
                       [Edge(0, 1, "free", 1.0, 1.0),
                        Edge(0, 2, "boundary", 1.0, 1.0),
                        Edge(1, 3, "boundary", 1.0, 1.0)])
        assert effective_rest_length(net, [0.3, 0.0], 0) == 1.0

    def test_boundary_edge_shortened(self):
        net = two_edge_net(l0=1.0)
        assert effective_rest_length(net, [0.010, 0.0], 0) == pytest.approx(0.990)

    def test_nonpositive_rest_length(self):
        net = two_edge_net(l0=0.010)
        with pytest.raises(RestLengthError, match="edge 0"):
            effective_rest_lengths(net, [0.020, 0.0])


class TestElongation:
    def test_simple_arithmetic(self):
        net = two_edge_net(l0=1.0, span=2.04)
        assert elongation([[1.02, 0, 0]], net, [0.0, 0.0], 0) == pytest.approx(0.02)

    def test_slack_sign(self):
        net = two_edge_net(l0=1.0, span=1.8)
        dl = elongation([[0.9, 0, 0]], net, [0.0, 0.0], 0)
        assert dl == pytest.approx(-0.10)
        assert slackness([[0.9, 0, 0]], net, [0.0, 0.0])[0] == pytest.approx(0.10)

    def test_centered_two_edge_net(self):
        # anchors 2.2 m apart, both rest lengths 1.0, node centered
        net = two_edge_net()
        dl = elongations([[1.1, 0, 0]], net, [0.0, 0.0])
        np.testing.assert_allclose(dl, [0.1, 0.1])


class TestEnergy:
    def test_single_stretched_edge(self):
        net = single_edge_net(ea=100.0, l0=1.0)
        assert total_energy([[1.1, 0, 0]], net, [0.0]) == pytest.approx(0.5)

    def test_slack_edge_zero(self):
        net = single_edge_net(ea=100.0, l0=1.0)
        assert total_energy([[0.9, 0, 0]], net, [0.0]) == 0.0

    def test_matches_per_edge_loop(self):
        for seed in range(5):
            net, cfg, u = random_state(seed)
            rest = effective_rest_lengths(net, u)
            lengths = edge_lengths(cfg, net)
            expect = -float(net.loads_z @ np.asarray(cfg)[:, 2])
            for k, e in enumerate(net.edges):
                dl = lengths[k] - rest[k]
                if dl > 0:
                    expect += 0.5 * e.ea * dl ** 2 / rest[k]
            got = total_energy(cfg, net, u)
            assert got == pytest.approx(expect, rel=1e-12)

    def test_socp_terms_single_edge(self):
        net = single_edge_net(ea=100.0, l0=1.0)
        w, v, V = socp_energy_terms([[1.1, 0, 0]], net, [0.0])
        np.testing.assert_allclose(w, [1.0], rtol=1e-12)
        assert v == pytest.approx(1.0, rel=1e-12)
        assert V == pytest.approx(0.5, rel=1e-12)

    def test_socp_terms_all_slack(self):
        net = two_edge_net(l0=1.5)
        w, v, V = socp_energy_terms([[1.1, 0, 0]], net, [0.0, 0.0])
        assert np.all(w == 0.0)
        assert v == 0.0

    def test_socp_matches_total_energy_on_random_states(self):
        for seed in range(8):
            net, cfg, u = random_state(seed + 100)
            _, _, V = socp_energy_terms(cfg, net, u)
            assert V == pytest.approx(total_energy(cfg, net, u), rel=1e-12)


class TestForceResidual:
    def test_symmetric_node_balanced(self, toy_net):
        h = force_residual([[1.1, 0, 0]], toy_net, [0.0, 0.0])
        np.testing.assert_allclose(h, 0.0, atol=1e-14)

    def test_matches_energy_gradient(self):
        for seed in range(6):
            net, cfg, u = random_state(seed + 20)
            h = force_residual(cfg, net, u)
            g = fd_energy_gradient(cfg, net, u, 1e-7 * net.scale())
            assert rel_err(g, h) <= 1e-6

    def test_all_slack_no_load_zero(self):
        net = two_edge_net(l0=2.0)
        h = force_residual([[1.1, 0.0, 0.0]], net, [0.0, 0.0])
        np.testing.assert_allclose(h, 0.0)

    def test_load_enters_z_component(self):
        net = two_edge_net(load=1.0)
        h = force_residual([[1.1, 0, 0]], net, [0.0, 0.0])
        np.testing.assert_allclose(h, [0.0, 0.0, -1.0])


class TestTangentStiffness:
    def test_matches_fd_on_random_states(self):
        for seed in range(6):
            net, cfg, u = random_state(seed + 40)
            K = tangent_stiffness(cfg, net, u)
            Kfd = fd_stiffness(cfg, net, u, 1e-7 * net.scale())
            assert rel_err(Kfd, K) <= 1e-6

    def test_single_edge_closed_form(self):
        # taut edge along x: block EA diag(1/rest, 1/rest - 1/l, 1/rest - 1/l)
        ea, l0, length = 100.0, 1.0, 1.25
        net = single_edge_net(ea=ea, l0=l0)
        K = tangent_stiffness([[length, 0, 0]], net, [0.0])
        expect = ea * np.diag([1.0 / l0,
                               1.0 / l0 - 1.0 / length,
                               1.0 / l0 - 1.0 / length])
        np.testing.assert_allclose(K, expect, rtol=1e-12)

    def test_all_slack_zero(self):
        net = two_edge_net(l0=2.0)
        K = tangent_stiffness([[1.1, 0.2, 0.1]], net, [0.0, 0.0])
        np.testing.assert_allclose(K, 0.0)

    def test_symmetric_positive_semidefinite(self):
        for seed in range(6):
            net, cfg, u = random_state(seed + 60)
            K = tangent_stiffness(cfg, net, u)
            scale = np.abs(K).max()
            assert np.abs(K - K.T).max() <= 1e-12 * scale
            eigs = np.linalg.eigvalsh(K)
            assert eigs.min() >= -1e-10 * scale

    def test_sparse_assembly_matches_dense(self):
        net, cfg, u = random_state(7)
        K = tangent_stiffness(cfg, net, u)
        Ks = tangent_stiffness(cfg, net, u, sparse=True)
        np.testing.assert_allclose(Ks.toarray(), K)


class TestInputJacobian:
    def test_matches_fd_on_random_states(self):
        for seed in range(6):
            net, cfg, u = random_state(seed + 80)
            J = input_jacobian(cfg, net, u)
            Jfd = fd_input_jacobian(cfg, net, u, 1e-8)
            assert rel_err(Jfd, J) <= 1e-6

    def test_slack_boundary_edge_gives_zero_column(self):
        net = two_edge_net(l0=1.0, span=2.2)
        # lengthen edge 0 until slack, keep edge 1 taut
        u = np.array([-0.5, 0.0])
        J = input_jacobian([[1.1, 0, 0]], net, u)
        np.testing.assert_allclose(J[:, 0], 0.0)
        assert np.abs(J[:, 1]).max() > 0.0

    def test_column_support_single_node(self):
        for seed in range(4):
            net, cfg, u = random_state(seed + 120)
            J = input_jacobian(cfg, net, u)
            for j in range(net.m_boundary):
                nodes = np.nonzero(J[:, j].reshape(-1, 3).any(axis=1))[0]
                assert nodes.size <= 1

    def test_full_column_rank_when_taut(self):
        net, cfg, u = random_state(11)
        dl = elongations(cfg, net, u)
        if np.any(dl < 0):
            pytest.skip("state has slack edges")
        J = input_jacobian(cfg, net, u)
        assert np.linalg.svd(J, compute_uv=False).min() > 0.0

    def test_taut_net_min_singular_value(self):
        # taut by construction: base grid equilibrium, all edges prestressed
        from cablenet.scenario import build_grid_net, grid_layout
        from cablenet.equilibrium import solve_equilibrium
        net = build_grid_net(6, 4, 0.25, 0.08, 5000.0, 0.02)
        res = solve_equilibrium(net, np.zeros(net.m_boundary),
                                grid_layout(6, 4, 0.25))
        J = input_jacobian(res.cfg, net, np.zeros(net.m_boundary))
        assert np.linalg.svd(J, compute_uv=False).min() > 0.0


class TestEdgeForces:
    def test_hand_value(self):
        net = single_edge_net(ea=100.0, l0=1.0)
        f = edge_forces([[1.1, 0, 0]], net, [0.0])
        assert f[0] == pytest.approx(10.0)

    def test_slack_zero(self):
        net = single_edge_net(ea=100.0, l0=1.0)
        assert edge_forces([[0.9, 0, 0]], net, [0.0])[0] == 0.0

    def test_one_percent_strain_at_150_newtons(self):
        # stiffness chosen so that 1% strain carries 150 N
        net = single_edge_net(ea=15000.0, l0=1.0)
        f = edge_forces([[1.01, 0, 0]], net, [0.0])
        assert f[0] == pytest.approx(150.0)

    def test_slack_set_reported(self):
        net = two_edge_net(l0=1.0, span=2.2)
        idx = slack_edges([[1.1, 0, 0]], net, [-0.5, 0.0])
        np.testing.assert_array_equal(idx, [0])


class TestSlackEdgesContributeNothing:
    def test_ea_of_slack_edge_is_irrelevant(self):
        # doubling the stiffness of a slack edge must change nothing
        def build(ea_slack):
            return CableNet(1, [[0, 0, 0], [2.2, 0, 0], [1.1, 2.0, 0]],
                            [Edge(0, 1, "boundary", 100.0, 1.0),
                             Edge(0, 2, "boundary", 100.0, 1.0),
                             Edge(0, 3, "boundary", ea_slack, 3.0)])
        cfg = [[1.1, 0.0, 0.0]]
        u = np.zeros(3)
        a, b = build(50.0), build(100.0)
        assert total_energy(cfg, a, u) == total_energy(cfg, b, u)
        np.testing.assert_array_equal(force_residual(cfg, a, u),
                                      force_residual(cfg, b, u))
        np.testing.assert_array_equal(tangent_stiffness(cfg, a, u),
                                      tangent_stiffness(cfg, b, u))
        np.testing.assert_array_equal(input_jacobian(cfg, a, u),
                                      input_jacobian(cfg, b, u))
