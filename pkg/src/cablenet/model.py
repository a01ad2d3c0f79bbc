"""Cable-net model: topology, geometry, elastic energy, nodal forces and
their analytic derivatives.

Conventions used throughout the package:

* Units are SI (meters, newtons, joules).
* Free nodes are indexed ``0 .. n_free-1``.  Boundary node ``b`` (row ``b``
  of ``boundary_coords``) is addressed as ``n_free + b`` in edge endpoints,
  so a full coordinate table is ``[free; boundary]``.
* A *configuration* is a float array of shape ``(n_free, 3)`` holding the
  free-node coordinates.  Flattened vectors (force residual, stiffness rows)
  use C order: ``[x0, y0, z0, x1, y1, z1, ...]``.
* An *input vector* ``u`` has one entry per boundary edge (its
  ``input_index``); applying ``u`` shortens the edge's unstressed length to
  ``l0 - u``.  Free edges are not adjustable.
* The hinge material law: an edge with elongation ``dl = length - rest``
  carries tension ``ea * dl / rest`` when ``dl >= 0`` and zero force when
  slack (``dl < 0``).  Slack edges contribute nothing to energy, forces or
  stiffness.
* The scalar potential is ``V = -loads_z . z_free + sum_e ea/(2 rest) dl+^2``
  and the force residual is its exact gradient, so ``residual == 0``
  characterizes static equilibrium.  With zero nodal loads this is the
  textbook per-node force balance of a tension network.
"""

import numpy as np

_I3 = np.eye(3)


class DegenerateEdgeError(ValueError):
    """Edge endpoints coincide: length is zero, direction undefined."""


class RestLengthError(ValueError):
    """An effective rest length ``l0 - u`` dropped to zero or below."""


class Edge:
    """One cable segment.

    ``kind`` is ``"free"`` (both endpoints free nodes) or ``"boundary"``
    (one free node, one frame-attached node).  Boundary edges carry an
    ``input_index`` into the input vector; free edges must not.
    """

    __slots__ = ("s", "t", "kind", "ea", "l0", "input_index")

    def __init__(self, s, t, kind, ea, l0, input_index=None):
        self.s = int(s)
        self.t = int(t)
        self.kind = str(kind)
        self.ea = float(ea)
        self.l0 = float(l0)
        self.input_index = None if input_index is None else int(input_index)

    def __repr__(self):
        tail = "" if self.input_index is None else f", input_index={self.input_index}"
        return (f"Edge({self.s}, {self.t}, {self.kind!r}, "
                f"ea={self.ea}, l0={self.l0}{tail})")

    def __eq__(self, other):
        if not isinstance(other, Edge):
            return NotImplemented
        return (self.s, self.t, self.kind, self.ea, self.l0, self.input_index) == \
               (other.s, other.t, other.kind, other.ea, other.l0, other.input_index)


class CableNet:
    """Immutable description of a pre-stressed cable network.

    Parameters
    ----------
    n_free : int
        Number of interior nodes with unknown coordinates.
    boundary_coords : (n_boundary, 3) array
        Fixed frame-attachment coordinates.
    edges : sequence of Edge
        Network topology and per-edge material parameters.  If *no*
        boundary edge carries an ``input_index``, indices are assigned in
        edge order; otherwise the given indices must form a complete
        permutation of ``0 .. m_boundary-1``.
    loads_z : (n_free,) array, optional
        Per-node vertical point loads.  Enters the potential as
        ``-loads_z . z_free`` (a positive entry pushes its node toward +z;
        orient the z axis accordingly for gravity).
    """

    def __init__(self, n_free, boundary_coords, edges, loads_z=None):
        self.n_free = int(n_free)
        self.boundary_coords = np.array(boundary_coords, dtype=float)
        if self.boundary_coords.ndim != 2 or self.boundary_coords.shape[1] != 3:
            raise ValueError("boundary_coords must have shape (n_boundary, 3)")
        self.edges = tuple(self._assign_input_indices(edges))
        if loads_z is None:
            self.loads_z = np.zeros(self.n_free)
        else:
            self.loads_z = np.array(loads_z, dtype=float).reshape(-1)

        self._s = np.array([e.s for e in self.edges], dtype=int)
        self._t = np.array([e.t for e in self.edges], dtype=int)
        self._ea = np.array([e.ea for e in self.edges])
        self._l0 = np.array([e.l0 for e in self.edges])
        self._boundary = np.array([e.kind == "boundary" for e in self.edges])
        self._input_index = np.array(
            [-1 if e.input_index is None else e.input_index for e in self.edges],
            dtype=int)
        self.validate()
        for a in (self.boundary_coords, self.loads_z, self._s, self._t,
                  self._ea, self._l0, self._boundary, self._input_index):
            a.flags.writeable = False

    @staticmethod
    def _assign_input_indices(edges):
        edges = list(edges)
        boundary = [e for e in edges if e.kind == "boundary"]
        if boundary and all(e.input_index is None for e in boundary):
            for i, e in enumerate(boundary):
                e.input_index = i
        return edges

    # -- derived sizes ---------------------------------------------------

    @property
    def n_boundary(self):
        return self.boundary_coords.shape[0]

    @property
    def n_nodes(self):
        return self.n_free + self.n_boundary

    @property
    def m(self):
        return len(self.edges)

    @property
    def m_boundary(self):
        return int(np.count_nonzero(self._boundary))

    @property
    def m_free(self):
        return self.m - self.m_boundary

    def scale(self):
        """Characteristic length: largest extent of the boundary frame."""
        if self.n_boundary == 0:
            return 1.0
        ext = self.boundary_coords.max(axis=0) - self.boundary_coords.min(axis=0)
        return float(max(ext.max(), 1e-12))

    # -- validation ------------------------------------------------------

    def validate(self):
        """Check all structural invariants; raise ValueError on violation."""
        n, nf = self.n_nodes, self.n_free
        if nf < 1:
            raise ValueError("n_free must be >= 1")
        if self.loads_z.shape != (nf,):
            raise ValueError(f"loads_z must have length n_free={nf}")
        if not np.all(np.isfinite(self.boundary_coords)):
            raise ValueError("boundary_coords must be finite")
        seen = set()
        for i, e in enumerate(self.edges):
            if not (0 <= e.s < n and 0 <= e.t < n):
                raise ValueError(f"edge {i}: endpoint out of range (n={n})")
            if e.s == e.t:
                raise ValueError(f"edge {i}: self-loop")
            key = (min(e.s, e.t), max(e.s, e.t))
            if key in seen:
                raise ValueError(f"edge {i}: duplicate of edge {key}")
            seen.add(key)
            if e.ea <= 0:
                raise ValueError(f"edge {i}: ea must be > 0")
            if e.l0 <= 0:
                raise ValueError(f"edge {i}: l0 must be > 0")
            n_free_ends = (e.s < nf) + (e.t < nf)
            if e.kind == "free":
                if n_free_ends != 2:
                    raise ValueError(f"edge {i}: free edge must join two free nodes")
                if e.input_index is not None:
                    raise ValueError(f"edge {i}: free edge cannot have input_index")
            elif e.kind == "boundary":
                if n_free_ends != 1:
                    raise ValueError(
                        f"edge {i}: boundary edge must join one free and one boundary node")
            else:
                raise ValueError(f"edge {i}: unknown kind {e.kind!r}")
        idx = sorted(e.input_index for e in self.edges if e.kind == "boundary")
        if idx != list(range(len(idx))):
            raise ValueError("boundary-edge input_index values must form 0..m_boundary-1")
        self._check_anchored()

    def _check_anchored(self):
        # every free node must reach the frame through the net
        adj = [[] for _ in range(self.n_free)]
        anchored = np.zeros(self.n_free, dtype=bool)
        for e in self.edges:
            if e.kind == "free":
                adj[e.s].append(e.t)
                adj[e.t].append(e.s)
            else:
                anchored[e.s if e.s < self.n_free else e.t] = True
        stack = list(np.nonzero(anchored)[0])
        reached = anchored.copy()
        while stack:
            v = stack.pop()
            for w in adj[v]:
                if not reached[w]:
                    reached[w] = True
                    stack.append(w)
        if not reached.all():
            bad = int(np.nonzero(~reached)[0][0])
            raise ValueError(
                f"free node {bad} is not connected to the boundary frame; "
                "equilibrium would not be unique")


# -- geometry --------------------------------------------------------------

def node_positions(cfg, net):
    """Full (n_nodes, 3) coordinate table [free; boundary]."""
    cfg = np.asarray(cfg, dtype=float).reshape(net.n_free, 3)
    return np.vstack([cfg, net.boundary_coords])


def _edge_geometry(cfg, net):
    r = node_positions(cfg, net)
    vec = r[net._s] - r[net._t]
    return vec, np.linalg.norm(vec, axis=1)


def edge_lengths(cfg, net):
    """Current lengths of all edges, shape (m,)."""
    return _edge_geometry(cfg, net)[1]


def edge_length(cfg, net, e):
    """Length of edge ``e``; raises DegenerateEdgeError at zero length."""
    vec, length = _edge_geometry(cfg, net)
    if length[e] == 0.0:
        raise DegenerateEdgeError(f"edge {e}: endpoints coincide")
    return float(length[e])


def edge_direction(cfg, net, e):
    """Unit vector from node t toward node s of edge ``e``."""
    vec, length = _edge_geometry(cfg, net)
    if length[e] == 0.0:
        raise DegenerateEdgeError(f"edge {e}: endpoints coincide")
    return vec[e] / length[e]


# -- rest lengths and elongations ------------------------------------------

def effective_rest_lengths(net, u):
    """Unstressed lengths after applying the input: l0 - u on boundary edges."""
    u = np.asarray(u, dtype=float).reshape(-1)
    if u.shape != (net.m_boundary,):
        raise ValueError(f"u must have length m_boundary={net.m_boundary}")
    rest = net._l0.copy()
    b = net._boundary
    rest[b] -= u[net._input_index[b]]
    if np.any(rest <= 0):
        bad = int(np.nonzero(rest <= 0)[0][0])
        raise RestLengthError(
            f"edge {bad}: effective rest length {rest[bad]:.6g} <= 0")
    return rest


def effective_rest_length(net, u, e):
    return float(effective_rest_lengths(net, u)[e])


def elongations(cfg, net, u):
    """dl = length - effective rest length; negative entries mark slack edges."""
    return edge_lengths(cfg, net) - effective_rest_lengths(net, u)


def elongation(cfg, net, u, e):
    return float(elongations(cfg, net, u)[e])


def slackness(cfg, net, u):
    """Constraint values g = -dl; g <= 0 means the edge is taut."""
    return -elongations(cfg, net, u)


def slack_edges(cfg, net, u):
    """Indices of edges with negative elongation (zero force)."""
    return np.nonzero(elongations(cfg, net, u) < 0)[0]


# -- energy ----------------------------------------------------------------

def total_energy(cfg, net, u):
    """Potential of the loaded net: -loads_z . z_free + elastic hinge energy."""
    cfg = np.asarray(cfg, dtype=float).reshape(net.n_free, 3)
    dl = elongations(cfg, net, u)
    rest = effective_rest_lengths(net, u)
    taut = dl > 0
    elastic = 0.5 * np.sum(net._ea[taut] * dl[taut] ** 2 / rest[taut])
    return float(elastic - net.loads_z @ cfg[:, 2])


def socp_energy_terms(cfg, net, u):
    """Cone-program view of the energy.

    Returns ``(w, v, V)`` with ``w_e = max(0, sqrt(ea/rest) * dl)`` per edge,
    ``v = |w|^2`` and ``V = -loads_z . z_free + v/2``.  Consistency with
    :func:`total_energy` is asserted.
    """
    cfg = np.asarray(cfg, dtype=float).reshape(net.n_free, 3)
    dl = elongations(cfg, net, u)
    rest = effective_rest_lengths(net, u)
    w = np.maximum(0.0, np.sqrt(net._ea / rest) * dl)
    v = float(w @ w)
    V = float(0.5 * v - net.loads_z @ cfg[:, 2])
    direct = total_energy(cfg, net, u)
    assert abs(V - direct) <= 1e-12 * max(1.0, abs(direct)), \
        "cone-term energy disagrees with direct evaluation"
    return w, v, V


# -- forces and derivatives --------------------------------------------------

def _taut_coefficients(cfg, net, u):
    vec, length = _edge_geometry(cfg, net)
    if np.any(length == 0.0):
        bad = int(np.nonzero(length == 0.0)[0][0])
        raise DegenerateEdgeError(f"edge {bad}: endpoints coincide")
    rest = effective_rest_lengths(net, u)
    taut = (length - rest) >= 0  # tensioned branch claims the kink
    return vec, length, rest, taut


def force_residual(cfg, net, u):
    """Gradient of the potential w.r.t. the flattened free coordinates.

    Per free node this is the out-of-balance force: the sum over adjacent
    taut edges of ``ea (r_s - r_t)(1/rest - 1/length)``, with the nodal load
    subtracted from the z component.  Zero everywhere iff ``cfg`` is the
    equilibrium for ``u``.
    """
    vec, length, rest, taut = _taut_coefficients(cfg, net, u)
    coef = np.zeros(net.m)
    coef[taut] = net._ea[taut] * (1.0 / rest[taut] - 1.0 / length[taut])
    g = coef[:, None] * vec
    out = np.zeros((net.n_free, 3))
    ms = net._s < net.n_free
    mt = net._t < net.n_free
    np.add.at(out, net._s[ms], g[ms])
    np.add.at(out, net._t[mt], -g[mt])
    out[:, 2] -= net.loads_z
    return out.reshape(-1)


def tangent_stiffness(cfg, net, u, sparse=False):
    """Jacobian of :func:`force_residual` w.r.t. the free coordinates.

    Equals the energy Hessian: per taut edge the 3x3 block
    ``ea [(1/rest - 1/length) I + vv^T / length^3]`` scattered with signs
    +(s,s) +(t,t) -(s,t) -(t,s) over free indices.  Symmetric positive
    semidefinite; assembled from block triplets, returned dense unless
    ``sparse=True`` (scipy CSR).
    """
    vec, length, rest, taut = _taut_coefficients(cfg, net, u)
    nf3 = 3 * net.n_free
    s, t, v = net._s[taut], net._t[taut], vec[taut]
    a = net._ea[taut] * (1.0 / rest[taut] - 1.0 / length[taut])
    b = net._ea[taut] / length[taut] ** 3
    blocks = a[:, None, None] * _I3 + b[:, None, None] * v[:, :, None] * v[:, None, :]

    offs_r = np.arange(3)[None, :, None]
    offs_c = np.arange(3)[None, None, :]
    rows, cols, vals = [], [], []

    def scatter(nr, nc, sign, sel):
        if not np.any(sel):
            return
        rr = 3 * nr[sel][:, None, None] + offs_r
        cc = 3 * nc[sel][:, None, None] + offs_c
        rows.append(np.broadcast_to(rr, (sel.sum(), 3, 3)).ravel())
        cols.append(np.broadcast_to(cc, (sel.sum(), 3, 3)).ravel())
        vals.append(sign * blocks[sel].ravel())

    s_free = s < net.n_free
    t_free = t < net.n_free
    scatter(s, s, 1.0, s_free)
    scatter(t, t, 1.0, t_free)
    scatter(s, t, -1.0, s_free & t_free)
    scatter(t, s, -1.0, s_free & t_free)

    if not rows:
        if sparse:
            from scipy.sparse import csr_matrix
            return csr_matrix((nf3, nf3))
        return np.zeros((nf3, nf3))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    if sparse:
        from scipy.sparse import coo_matrix
        return coo_matrix((vals, (rows, cols)), shape=(nf3, nf3)).tocsr()
    K = np.zeros((nf3, nf3))
    np.add.at(K, (rows, cols), vals)
    return K


def input_jacobian(cfg, net, u):
    """Jacobian of :func:`force_residual` w.r.t. the input vector.

    Column ``input_index`` of a taut boundary edge holds
    ``ea (r_free - r_frame) / rest^2`` in the three rows of its free node;
    slack boundary edges give zero columns.
    """
    vec, length, rest, taut = _taut_coefficients(cfg, net, u)
    J = np.zeros((3 * net.n_free, net.m_boundary))
    active = net._boundary & taut
    if not np.any(active):
        return J
    s, t = net._s[active], net._t[active]
    s_is_free = s < net.n_free
    free = np.where(s_is_free, s, t)
    orient = np.where(s_is_free, 1.0, -1.0)
    val = (net._ea[active] / rest[active] ** 2 * orient)[:, None] * vec[active]
    rows = 3 * free[:, None] + np.arange(3)[None, :]
    cols = np.broadcast_to(net._input_index[active][:, None], rows.shape)
    np.add.at(J, (rows.ravel(), cols.ravel()), val.ravel())
    return J


def edge_forces(cfg, net, u):
    """Per-edge tensions ``ea * dl+ / rest`` (slack edges carry zero)."""
    dl = elongations(cfg, net, u)
    rest = effective_rest_lengths(net, u)
    return net._ea * np.maximum(dl, 0.0) / rest
