"""Synthetic scenarios, rest-length estimation and evaluation metrics.

A :class:`Scenario` bundles everything a control run needs: the net, the
target configuration, the starting input vector, weights, solver settings
and (for synthetic cases) the ground-truth inputs that generated the
target.  The grid generator produces a saddle-shaped net on a rigid
rectangular frame; exact-recovery scenarios take a known input vector,
solve the equilibrium it produces and use that as the target, so the
optimum is attainable by construction.
"""

from dataclasses import dataclass, field

import numpy as np

from .control import ControlProblem, tracking_cost
from .equilibrium import EquilibriumConfig, solve_equilibrium
from .model import CableNet, Edge, edge_lengths
from .sparse import SparseConfig

REST_FACTOR_ELASTIC = 0.990
REST_FACTOR_STIFF = 0.999


@dataclass
class Scenario:
    net: CableNet
    control: ControlProblem
    u0: np.ndarray
    sparse: SparseConfig = field(default_factory=SparseConfig)
    equilibrium: EquilibriumConfig = field(default_factory=EquilibriumConfig)
    u_true: np.ndarray | None = None
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        self.u0 = np.array(self.u0, dtype=float).reshape(-1)
        if self.u0.shape != (self.net.m_boundary,):
            raise ValueError("u0 must have one entry per boundary edge")
        if self.control.r_des.shape != (self.net.n_free, 3):
            raise ValueError("r_des must have shape (n_free, 3)")
        if self.u_true is not None:
            self.u_true = np.array(self.u_true, dtype=float).reshape(-1)
            if self.u_true.shape != (self.net.m_boundary,):
                raise ValueError("u_true must have one entry per boundary edge")

    @property
    def r_des(self):
        return self.control.r_des

    @property
    def q_r(self):
        return self.control.q_r


@dataclass
class Metrics:
    weighted_err: float            # |r_des - r|_Q^2
    l2_err: float                  # |r_des - r|_2^2
    rms: float                     # |r_des - r|_2 / n  (norm over node count)
    per_node_err: np.ndarray       # Euclidean distance per node
    reduction_pct: float = float("nan")


def grid_layout(nx, ny, spacing):
    """As-assembled free-node coordinates of the grid generator (z = 0)."""
    xs = np.arange(nx) * spacing
    ys = np.arange(ny) * spacing
    gx, gy = np.meshgrid(xs, ys)      # row j holds y = j * spacing
    cfg = np.zeros((nx * ny, 3))
    cfg[:, 0] = gx.reshape(-1)
    cfg[:, 1] = gy.reshape(-1)
    return cfg


def build_grid_net(nx, ny, spacing=0.25, sag=0.1, ea_elastic=5000.0,
                   prestrain=0.01, loads_z=None):
    """Rectangular grid net on a rigid frame with saddle-inducing supports.

    ``nx * ny`` free nodes sit on a planar grid; every grid line continues
    past the perimeter to a frame anchor, giving ``2 nx + 2 ny`` boundary
    edges.  Anchors at the x ends are raised by ``sag`` and anchors at the
    y ends lowered by ``sag``, which curves the equilibrium surface in both
    directions.  Every unstressed length is set to ``1 - prestrain`` times
    the as-assembled length so the whole net starts in tension.  Node and
    edge ordering is deterministic.
    """
    if nx < 2 or ny < 2:
        raise ValueError("grid dimensions must be at least 2 x 2")
    if not 0 < prestrain < 1:
        raise ValueError("prestrain must be in (0, 1)")
    if spacing <= 0:
        raise ValueError("spacing must be > 0")

    def node(i, j):
        return j * nx + i

    n_free = nx * ny
    cfg = grid_layout(nx, ny, spacing)

    boundary = []   # (coords, attached free node)
    for i in range(nx):   # y ends, lowered
        boundary.append(((i * spacing, -spacing, -sag), node(i, 0)))
    for i in range(nx):
        boundary.append(((i * spacing, ny * spacing, -sag), node(i, ny - 1)))
    for j in range(ny):   # x ends, raised
        boundary.append(((-spacing, j * spacing, sag), node(0, j)))
    for j in range(ny):
        boundary.append(((nx * spacing, j * spacing, sag), node(nx - 1, j)))
    boundary_coords = np.array([b[0] for b in boundary])

    edges = []
    for j in range(ny):
        for i in range(nx - 1):
            edges.append(Edge(node(i, j), node(i + 1, j), "free", ea_elastic, 1.0))
    for j in range(ny - 1):
        for i in range(nx):
            edges.append(Edge(node(i, j), node(i, j + 1), "free", ea_elastic, 1.0))
    for b, (coords, attached) in enumerate(boundary):
        edges.append(Edge(attached, n_free + b, "boundary", ea_elastic, 1.0,
                          input_index=b))

    net = CableNet(n_free, boundary_coords, edges, loads_z)
    laid_out = edge_lengths(cfg, net)
    rescaled = [Edge(e.s, e.t, e.kind, e.ea, (1.0 - prestrain) * laid_out[k],
                     e.input_index)
                for k, e in enumerate(net.edges)]
    return CableNet(n_free, boundary_coords, rescaled, loads_z)


def estimate_rest_lengths(measured_cfg, net, kinds):
    """Rest lengths from a measured configuration: scale by material kind.

    Elastic edges get 0.990 times, stiff edges 0.999 times the measured
    length.  ``kinds`` is one ``"elastic"``/``"stiff"`` label per edge.
    """
    measured_cfg = np.asarray(measured_cfg, dtype=float)
    if measured_cfg.shape != (net.n_free, 3):
        raise ValueError(
            f"measured configuration must cover all {net.n_free} free nodes")
    if not np.all(np.isfinite(measured_cfg)):
        raise ValueError("measured configuration has non-finite endpoints")
    kinds = list(kinds)
    if len(kinds) != net.m:
        raise ValueError(f"need one material kind per edge ({net.m})")
    lengths = edge_lengths(measured_cfg, net)
    if np.any(lengths == 0.0):
        bad = int(np.nonzero(lengths == 0.0)[0][0])
        raise ValueError(f"edge {bad}: measured length is zero")
    factors = np.empty(net.m)
    for k, kind in enumerate(kinds):
        if kind == "elastic":
            factors[k] = REST_FACTOR_ELASTIC
        elif kind == "stiff":
            factors[k] = REST_FACTOR_STIFF
        else:
            raise ValueError(f"edge {k}: unknown material kind {kind!r}")
    return factors * lengths


def with_rest_lengths(net, l0):
    """Copy of the net with replaced unstressed lengths."""
    l0 = np.asarray(l0, dtype=float)
    edges = [Edge(e.s, e.t, e.kind, e.ea, l0[k], e.input_index)
             for k, e in enumerate(net.edges)]
    return CableNet(net.n_free, net.boundary_coords, edges, net.loads_z)


def _default_warm_start(net):
    center = net.boundary_coords.mean(axis=0)
    return np.tile(center, (net.n_free, 1))


def make_exact_recovery_scenario(net, support, magnitudes, seed=0, q_r=1.0,
                                 warm_start=None, eq_cfg=None):
    """Scenario whose target is reachable by a known input vector.

    ``support`` lists boundary-edge input indices and ``magnitudes`` the
    corresponding rest-length changes (positive shortens, negative
    lengthens).  The target is the solved equilibrium under those inputs
    and the run starts from zero input, so a perfect controller recovers
    the generating vector.
    """
    support = np.asarray(support, dtype=int).reshape(-1)
    magnitudes = np.broadcast_to(np.asarray(magnitudes, dtype=float),
                                 support.shape)
    if support.size and (support.min() < 0 or support.max() >= net.m_boundary):
        raise ValueError("support indices must address boundary edges")
    u_true = np.zeros(net.m_boundary)
    u_true[support] = magnitudes
    eq_cfg = eq_cfg or EquilibriumConfig()
    warm = _default_warm_start(net) if warm_start is None else warm_start
    target = solve_equilibrium(net, u_true, warm, eq_cfg)
    prob = ControlProblem(r_des=target.cfg, q_r=q_r)
    return Scenario(net=net, control=prob, u0=np.zeros(net.m_boundary),
                    equilibrium=eq_cfg, u_true=u_true, seed=seed)


def add_measurement_noise(cfg, sigma, seed):
    """Independent Gaussian perturbation per coordinate, seeded.

    ``sigma`` may be a scalar or a per-node array (one entry per row of the
    configuration) to emulate spatially varying measurement accuracy.
    """
    cfg = np.asarray(cfg, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma < 0):
        raise ValueError("sigma must be >= 0")
    if np.all(sigma == 0.0):
        return cfg.copy()
    scale = np.broadcast_to(sigma.reshape(-1, 1) if sigma.ndim else sigma,
                            cfg.shape)
    rng = np.random.default_rng(seed)
    return cfg + rng.normal(0.0, 1.0, size=cfg.shape) * scale


def percent_reduction(initial, final):
    """Percentage decrease from ``initial`` to ``final``."""
    return 100.0 * (1.0 - final / initial)


def compute_metrics(cfg, scenario, r_initial=None):
    """Error metrics of a configuration against the scenario target.

    The rms follows the source convention of dividing the l2 norm by the
    node count (not its square root).  When ``r_initial`` is supplied the
    weighted-error reduction percentage is filled in.
    """
    cfg = np.asarray(cfg, dtype=float)
    if cfg.shape != scenario.r_des.shape:
        raise ValueError("configuration/target dimension mismatch")
    diff = (scenario.r_des - cfg).reshape(-1)
    weighted = float(diff @ (scenario.q_r * diff))
    l2 = float(diff @ diff)
    n = scenario.net.n_free
    per_node = np.linalg.norm((scenario.r_des - cfg), axis=1)
    reduction = float("nan")
    if r_initial is not None:
        d0 = (scenario.r_des - np.asarray(r_initial, dtype=float)).reshape(-1)
        w0 = float(d0 @ (scenario.q_r * d0))
        reduction = percent_reduction(w0, weighted) if w0 > 0 else 100.0
    return Metrics(weighted_err=weighted, l2_err=l2,
                   rms=float(np.sqrt(l2)) / n, per_node_err=per_node,
                   reduction_pct=reduction)


def initial_configuration(scenario):
    """Equilibrium at the scenario's starting input vector."""
    warm = scenario.r_des
    return solve_equilibrium(scenario.net, scenario.u0, warm,
                             scenario.equilibrium).cfg


def scenario_cost(cfg, scenario):
    return tracking_cost(cfg, scenario.control)
