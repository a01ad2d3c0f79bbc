"""Shared builders and independent numerical oracles for the test suite."""

import numpy as np
import pytest

from cablenet.control import cost_gradient
from cablenet.equilibrium import EquilibriumConfig, solve_equilibrium
from cablenet.model import (
    CableNet,
    Edge,
    elongations,
    force_residual,
    input_jacobian,
    tangent_stiffness,
    total_energy,
)
from cablenet.scenario import build_grid_net, grid_layout

KINK_MARGIN = 1e-4  # relative distance to the slack/taut transition


def two_edge_net(ea=100.0, l0=1.0, span=2.2, load=0.0):
    """One free node between two frame anchors on the x axis."""
    return CableNet(1, [[0.0, 0.0, 0.0], [span, 0.0, 0.0]],
                    [Edge(0, 1, "boundary", ea, l0),
                     Edge(0, 2, "boundary", ea, l0)],
                    loads_z=[load])


def random_grid_net(rng):
    """Randomized saddle grid: dimensions, pitch, stiffness jitter, loads."""
    nx = int(rng.integers(2, 11))
    ny = int(rng.integers(2, 7))
    spacing = float(rng.uniform(0.15, 0.4))
    sag = float(rng.uniform(0.0, 0.4)) * spacing
    prestrain = float(rng.uniform(0.01, 0.03))
    ea = float(rng.uniform(2000.0, 8000.0))
    net = build_grid_net(nx, ny, spacing, sag, ea, prestrain)
    edges = [Edge(e.s, e.t, e.kind, e.ea * rng.uniform(0.6, 1.6), e.l0,
                  e.input_index) for e in net.edges]
    loads = rng.uniform(-1.0, 1.0, net.n_free) if rng.random() < 0.5 else None
    net = CableNet(net.n_free, net.boundary_coords, edges, loads)
    layout = grid_layout(nx, ny, spacing)
    return net, layout, spacing, prestrain


def random_state(seed, kink_margin=KINK_MARGIN):
    """Random net plus a kink-clear off-equilibrium state (cfg, u).

    Every edge's elongation is kept at least ``kink_margin`` times its rest
    length away from the slack/taut transition so finite differences never
    straddle the hinge.
    """
    rng = np.random.default_rng(seed)
    net, layout, spacing, prestrain = random_grid_net(rng)
    base = solve_equilibrium(net, np.zeros(net.m_boundary), layout,
                             EquilibriumConfig(tol_force=1e-6)).cfg
    rest = np.array([e.l0 for e in net.edges])
    bmask = np.array([e.kind == "boundary" for e in net.edges])
    input_idx = [e.input_index for e in net.edges if e.kind == "boundary"]
    amp = 2e-3 * spacing
    for attempt in range(60):
        cfg = base + rng.normal(0.0, amp, base.shape)
        u = rng.uniform(-0.3, 0.3, net.m_boundary) * prestrain * spacing \
            * amp / (2e-3 * spacing)
        dl = elongations(cfg, net, u)
        rest_eff = rest.copy()
        rest_eff[bmask] -= u[input_idx]
        if np.min(np.abs(dl) / rest_eff) >= kink_margin:
            return net, cfg, u
        amp *= 0.8  # shrink toward the taut base equilibrium
    raise RuntimeError(f"could not find a kink-clear state for seed {seed}")


def random_equilibrium(seed, tol_force=1e-8):
    """Random net solved to equilibrium under a random admissible input."""
    rng = np.random.default_rng(seed)
    net, layout, spacing, prestrain = random_grid_net(rng)
    u = rng.uniform(-0.25, 0.4, net.m_boundary) * prestrain * spacing
    result = solve_equilibrium(net, u, layout,
                               EquilibriumConfig(tol_force=tol_force))
    return net, u, result, layout


def random_taut_equilibrium(seed, tol_force=1e-8):
    """Like :func:`random_equilibrium` but with every edge in tension
    (shrinks the input until no edge is slack), as required wherever the
    input Jacobian must have full column rank."""
    rng = np.random.default_rng(seed)
    net, layout, spacing, prestrain = random_grid_net(rng)
    draw = rng.uniform(-0.25, 0.4, net.m_boundary) * prestrain * spacing
    for _ in range(12):
        result = solve_equilibrium(net, draw, layout,
                                   EquilibriumConfig(tol_force=tol_force))
        if result.slack_edges.size == 0:
            return net, draw, result, layout
        draw = 0.5 * draw
    raise RuntimeError(f"could not find a taut equilibrium for seed {seed}")


# -- finite-difference oracles ------------------------------------------------

def fd_energy_gradient(cfg, net, u, step):
    flat = np.asarray(cfg, dtype=float).reshape(-1)
    grad = np.zeros(flat.size)
    for i in range(flat.size):
        xp = flat.copy()
        xm = flat.copy()
        xp[i] += step
        xm[i] -= step
        grad[i] = (total_energy(xp.reshape(-1, 3), net, u)
                   - total_energy(xm.reshape(-1, 3), net, u)) / (2.0 * step)
    return grad


def fd_stiffness(cfg, net, u, step):
    flat = np.asarray(cfg, dtype=float).reshape(-1)
    K = np.zeros((flat.size, flat.size))
    for i in range(flat.size):
        xp = flat.copy()
        xm = flat.copy()
        xp[i] += step
        xm[i] -= step
        K[:, i] = (force_residual(xp.reshape(-1, 3), net, u)
                   - force_residual(xm.reshape(-1, 3), net, u)) / (2.0 * step)
    return K


def fd_input_jacobian(cfg, net, u, step):
    u = np.asarray(u, dtype=float)
    J = np.zeros((3 * net.n_free, u.size))
    for j in range(u.size):
        up = u.copy()
        um = u.copy()
        up[j] += step
        um[j] -= step
        J[:, j] = (force_residual(cfg, net, up)
                   - force_residual(cfg, net, um)) / (2.0 * step)
    return J


def rel_err(approx, exact):
    denom = max(float(np.abs(exact).max()), 1e-30)
    return float(np.abs(approx - exact).max()) / denom


# -- full KKT oracle for the Gauss-Newton step (test-only) -------------------

def kkt_delta_u(cfg, net, u, prob):
    """Input block of the full equality-constrained QP solved via its KKT
    system (quadratic model with H = diag(Q, 0), linearized force balance
    as the constraint)."""
    K = tangent_stiffness(cfg, net, u)
    Ju = input_jacobian(cfg, net, u)
    n3, mb = K.shape[0], Ju.shape[1]
    H = np.zeros((n3 + mb, n3 + mb))
    H[:n3, :n3] = np.diag(prob.q_r)
    A = np.hstack([K, Ju])
    kkt = np.block([[H, A.T], [A, np.zeros((n3, n3))]])
    grad = np.concatenate([cost_gradient(cfg, prob), np.zeros(mb)])
    rhs = np.concatenate([-grad, -force_residual(cfg, net, u)])
    sol = np.linalg.solve(kkt, rhs)
    return sol[n3:n3 + mb]


@pytest.fixture
def toy_net():
    return two_edge_net()
